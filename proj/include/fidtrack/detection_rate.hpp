#pragma once

// Rolling per-object detection rate over the last 60 frames.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "fidtrack/errors.hpp"

namespace fidtrack {

inline constexpr std::size_t kRateWindow = 60;

/// Fixed ring of the last kRateWindow outcomes for one object.
class RateWindow {
 public:
  void push(bool detected) {
    if (frames_seen_ >= kRateWindow && slots_[head_]) --detected_;
    slots_[head_] = detected;
    if (detected) ++detected_;
    head_ = (head_ + 1) % kRateWindow;
    ++frames_seen_;
  }

  /// detected / min(frames_seen, 60); 0 before the first frame.
  double rate() const {
    if (frames_seen_ == 0) return 0.0;
    const std::uint64_t denom = frames_seen_ < kRateWindow ? frames_seen_ : kRateWindow;
    return static_cast<double>(detected_) / static_cast<double>(denom);
  }

  std::uint64_t frames_seen() const { return frames_seen_; }
  std::size_t detected_in_window() const { return detected_; }
  static constexpr std::size_t capacity() { return kRateWindow; }

 private:
  std::array<bool, kRateWindow> slots_{};
  std::size_t head_ = 0;
  std::size_t detected_ = 0;
  std::uint64_t frames_seen_ = 0;
};

class DetectionRateTracker {
 public:
  /// Starts tracking an object; a no-op if it is already known.
  void add_object(int object_id) { windows_.try_emplace(object_id); }
  void remove_object(int object_id) { windows_.erase(object_id); }
  bool knows(int object_id) const { return windows_.count(object_id) != 0; }

  void record(int object_id, bool detected) { window(object_id).push(detected); }

  /// One frame: every known object is marked detected iff it is in `detected`.
  void record_frame(const std::vector<int>& detected) {
    for (auto& [id, w] : windows_) {
      bool hit = false;
      for (int d : detected) hit = hit || d == id;
      w.push(hit);
    }
  }

  double rate(int object_id) const { return window(object_id).rate(); }
  std::uint64_t frames_seen(int object_id) const { return window(object_id).frames_seen(); }

  std::vector<int> objects() const {
    std::vector<int> ids;
    for (const auto& [id, w] : windows_) ids.push_back(id);
    return ids;
  }

 private:
  const RateWindow& window(int object_id) const {
    auto it = windows_.find(object_id);
    if (it == windows_.end()) throw Error(ErrorCode::kUnknownObject, "unknown object id");
    return it->second;
  }
  RateWindow& window(int object_id) {
    auto it = windows_.find(object_id);
    if (it == windows_.end()) throw Error(ErrorCode::kUnknownObject, "unknown object id");
    return it->second;
  }

  std::map<int, RateWindow> windows_;
};

inline double detection_rate(const DetectionRateTracker& tracker, int object_id) {
  return tracker.rate(object_id);
}

}  // namespace fidtrack
