#pragma once

// Per-frame pipeline: background mask, binary and Colored Points detectors,
// topology resolution, pose solve and detection-rate bookkeeping.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <vector>

#include "fidtrack/binary_marker.hpp"
#include "fidtrack/colored_points.hpp"
#include "fidtrack/config.hpp"
#include "fidtrack/detection_rate.hpp"
#include "fidtrack/imaging.hpp"
#include "fidtrack/wire.hpp"

namespace fidtrack {

struct StageTimings {
  double binary_ms = 0.0;   // grayscale, binarize, quads, decode
  double colored_ms = 0.0;  // mask, classify, cluster, smooth
  double solve_ms = 0.0;    // topology and pose solves
  std::uint64_t frames = 0;
};

struct MarkerOverlay {
  int id = 0;
  std::array<Vec2, 4> corners;
};

/// What the last frame looked like to the detectors, for monitoring.
struct FrameDiagnostics {
  std::uint64_t frame_index = 0;
  std::int64_t timestamp_us = 0;
  std::vector<ColorMass> masses;
  std::vector<MarkerOverlay> markers;
};

/// Single-stream pipeline state. Not thread-safe; one worker owns it.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg);
  Tracker(TrackerConfig cfg, MarkerDictionary dict);

  /// Applies a new configuration. Rate windows of objects that survive are kept.
  void reconfigure(TrackerConfig cfg);
  const TrackerConfig& config() const { return cfg_; }
  const MarkerDictionary& dictionary() const { return dict_; }

  void set_background(Frame background);
  void clear_background() { background_.reset(); }
  bool has_background() const { return background_.has_value(); }

  /// Records sorted by object id. Failures of one object never abort the frame.
  std::vector<DetectionRecord> process_frame(const Frame& frame);

  const DetectionRateTracker& rates() const { return rates_; }
  const FrameDiagnostics& diagnostics() const { return diag_; }
  const StageTimings& timings() const { return timings_; }
  /// Total frames in which each object was detected, since it was configured.
  std::uint64_t detected_total(int object_id) const;

 private:
  void sync_objects();

  TrackerConfig cfg_;
  MarkerDictionary dict_;
  std::optional<Frame> background_;
  ColoredPointsTracker colored_;
  DetectionRateTracker rates_;
  std::map<int, std::uint64_t> detected_totals_;
  FrameDiagnostics diag_;
  StageTimings timings_;
};

/// Thread-safe wrapper: the pipeline thread calls step(); control threads
/// queue configuration changes and background captures, which take effect
/// between frames.
class Engine {
 public:
  explicit Engine(TrackerConfig cfg);

  /// Runs one frame. Returns nullopt when the frame was consumed by a
  /// background capture instead of being processed.
  std::optional<std::vector<DetectionRecord>> step(const Frame& frame);

  /// Pending configuration if one is queued, else the applied one.
  TrackerConfig config() const;
  /// Queues a validated configuration; returns it.
  TrackerConfig submit_config(TrackerConfig cfg);
  /// False when background subtraction is disabled.
  bool request_background_capture(int frames);

  struct Snapshot {
    std::uint64_t frames_processed = 0;
    bool background_enabled = false;
    bool background_captured = false;
    int capture_remaining = 0;
    std::vector<int> object_ids;
    std::map<int, double> rates;
    std::map<int, std::uint64_t> frames_seen;
    std::map<int, std::string> kinds;
    FrameDiagnostics diagnostics;
    std::optional<Frame> last_frame;
    std::uint64_t version = 0;  // bumps on every processed frame
  };
  Snapshot snapshot(bool with_frame = false) const;

 private:
  void apply_pending_locked();
  void publish_locked(const Frame& frame);

  mutable std::mutex mu_;
  Tracker tracker_;
  std::optional<TrackerConfig> pending_;
  int capture_target_ = 0;
  int capture_count_ = 0;
  std::vector<std::uint32_t> capture_sums_;
  std::optional<Frame> capture_first_;
  Snapshot snap_;
};

}  // namespace fidtrack
