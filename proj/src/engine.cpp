#include "fidtrack/engine.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "fidtrack/pose_solver.hpp"

namespace fidtrack {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

BinaryDetectorParams detector_params(const BinaryConfig& b) {
  BinaryDetectorParams p;
  p.window = b.adaptive_window;
  p.offset = b.adaptive_offset;
  p.quad.min_area = b.min_quad_area;
  return p;
}

}  // namespace

Tracker::Tracker(TrackerConfig cfg) : Tracker(cfg, load_dictionary(cfg.binary)) {}

Tracker::Tracker(TrackerConfig cfg, MarkerDictionary dict)
    : cfg_(std::move(cfg)),
      dict_(std::move(dict)),
      colored_(cfg_.colored.classes, cfg_.colored.params) {
  if (auto v = validate(cfg_); !v.empty()) throw ConfigError(v);
  sync_objects();
}

void Tracker::reconfigure(TrackerConfig cfg) {
  if (auto v = validate(cfg); !v.empty()) throw ConfigError(v);
  if (cfg.binary.dictionary != cfg_.binary.dictionary || cfg.binary.dictionary_file != cfg_.binary.dictionary_file) {
    dict_ = load_dictionary(cfg.binary);
  }
  if (cfg.colored != cfg_.colored) colored_ = ColoredPointsTracker(cfg.colored.classes, cfg.colored.params);
  cfg_ = std::move(cfg);
  sync_objects();
}

void Tracker::sync_objects() {
  const auto ids = cfg_.object_ids();
  const std::set<int> wanted(ids.begin(), ids.end());
  for (int id : rates_.objects()) {
    if (!wanted.count(id)) {
      rates_.remove_object(id);
      detected_totals_.erase(id);
    }
  }
  for (int id : ids) {
    rates_.add_object(id);
    detected_totals_.try_emplace(id, 0);
  }
}

void Tracker::set_background(Frame background) {
  if (background.width != cfg_.camera.width || background.height != cfg_.camera.height) {
    throw Error(ErrorCode::kDimensionMismatch, "background size differs from the camera");
  }
  background_ = std::move(background);
}

std::uint64_t Tracker::detected_total(int object_id) const {
  auto it = detected_totals_.find(object_id);
  if (it == detected_totals_.end()) throw Error(ErrorCode::kUnknownObject, "unknown object id");
  return it->second;
}

std::vector<DetectionRecord> Tracker::process_frame(const Frame& frame) {
  if (!frame.well_formed()) throw Error(ErrorCode::kInvalidArgument, "malformed frame buffer");
  if (frame.width != cfg_.camera.width || frame.height != cfg_.camera.height) {
    throw Error(ErrorCode::kDimensionMismatch, "frame size differs from the configured camera");
  }
  const CameraIntrinsics& k = cfg_.camera;
  const DistortionCoeffs& d = cfg_.distortion;
  std::vector<DetectionRecord> out;
  diag_ = {frame.frame_index, frame.timestamp_us, {}, {}};

  auto make_record = [&](int id, const char* kind, const PoseResult& r) {
    DetectionRecord rec;
    rec.frame_index = frame.frame_index;
    rec.timestamp_us = frame.timestamp_us;
    rec.object_id = id;
    rec.kind = kind;
    rec.pose = r.best.pose;
    rec.rms_error = r.best.rms_error;
    rec.ambiguous = r.ambiguous;
    return rec;
  };

  // Binary markers run on the unmasked image: masking would blacken white cells.
  auto t0 = Clock::now();
  std::vector<DetectedMarker> markers;
  if (!cfg_.binary.markers.empty()) {
    markers = detect_markers(to_gray(frame), dict_, detector_params(cfg_.binary));
  }
  timings_.binary_ms += ms_since(t0);

  t0 = Clock::now();
  const std::vector<ColorMass>* masses = nullptr;
  if (!cfg_.colored.classes.empty()) {
    if (cfg_.background.enabled && background_) {
      masses = &colored_.update(apply_mask(frame, background_mask(frame, *background_, cfg_.background.tau)));
    } else {
      masses = &colored_.update(frame);
    }
    diag_.masses = *masses;
  }
  timings_.colored_ms += ms_since(t0);

  t0 = Clock::now();
  for (const auto& m : markers) diag_.markers.push_back({m.id, m.corners});
  for (const auto& entry : cfg_.binary.markers) {
    std::optional<DetectionRecord> best;
    for (const auto& m : markers) {
      if (m.id != entry.id) continue;
      try {
        const PoseResult r = solve_planar_pose(m.corners, entry.marker_size, k, d);
        if (!best || r.best.rms_error < best->rms_error) best = make_record(entry.id, "binary", r);
      } catch (const Error&) {
      }
    }
    if (best) out.push_back(*best);
  }
  if (masses) {
    for (const auto& topo : cfg_.colored.topologies) {
      const auto corners = resolve_topology(*masses, topo);
      if (!corners) continue;
      try {
        out.push_back(make_record(topo.object_id, "colored", solve_planar_pose(*corners, topo.marker_size, k, d)));
      } catch (const Error&) {
      }
    }
  }
  timings_.solve_ms += ms_since(t0);
  ++timings_.frames;

  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.object_id < b.object_id; });
  std::vector<int> detected;
  for (const auto& r : out) {
    detected.push_back(r.object_id);
    ++detected_totals_[r.object_id];
  }
  rates_.record_frame(detected);
  return out;
}

// ---------------------------------------------------------------------------

Engine::Engine(TrackerConfig cfg) : tracker_(std::move(cfg)) {
  std::lock_guard lock(mu_);
  publish_locked(Frame());
  snap_.version = 0;
}

TrackerConfig Engine::config() const {
  std::lock_guard lock(mu_);
  return pending_ ? *pending_ : tracker_.config();
}

TrackerConfig Engine::submit_config(TrackerConfig cfg) {
  if (auto v = validate(cfg); !v.empty()) throw ConfigError(v);
  std::lock_guard lock(mu_);
  pending_ = cfg;
  return cfg;
}

bool Engine::request_background_capture(int frames) {
  if (frames < 1) throw Error(ErrorCode::kInvalidArgument, "capture needs at least one frame");
  std::lock_guard lock(mu_);
  const TrackerConfig& cfg = pending_ ? *pending_ : tracker_.config();
  if (!cfg.background.enabled) return false;
  capture_target_ = frames;
  capture_count_ = 0;
  capture_sums_.clear();
  capture_first_.reset();
  snap_.capture_remaining = frames;
  return true;
}

void Engine::apply_pending_locked() {
  if (!pending_) return;
  tracker_.reconfigure(std::move(*pending_));
  pending_.reset();
  if (!tracker_.config().background.enabled) {
    tracker_.clear_background();
    capture_target_ = 0;
  }
}

std::optional<std::vector<DetectionRecord>> Engine::step(const Frame& frame) {
  {
    std::lock_guard lock(mu_);
    apply_pending_locked();
    const auto& bg = tracker_.config().background;
    if (bg.enabled && !tracker_.has_background() && capture_target_ == 0) {
      capture_target_ = bg.capture_frames;
      capture_count_ = 0;
      capture_sums_.clear();
      capture_first_.reset();
    }
    if (capture_target_ > 0) {
      if (capture_sums_.empty()) {
        capture_sums_.assign(frame.pixels.begin(), frame.pixels.end());
        capture_first_ = frame;
      } else {
        require_same_size(capture_first_->width, capture_first_->height, frame.width, frame.height);
        for (std::size_t i = 0; i < capture_sums_.size(); ++i) capture_sums_[i] += frame.pixels[i];
      }
      if (++capture_count_ == capture_target_) {
        Frame bgf = *capture_first_;
        const auto n = static_cast<std::uint32_t>(capture_target_);
        for (std::size_t i = 0; i < capture_sums_.size(); ++i) {
          bgf.pixels[i] = static_cast<std::uint8_t>((2 * capture_sums_[i] + n) / (2 * n));
        }
        tracker_.set_background(std::move(bgf));
        capture_target_ = 0;
        capture_sums_.clear();
        capture_first_.reset();
      }
      snap_.capture_remaining = capture_target_ - (capture_target_ ? capture_count_ : 0);
      snap_.background_captured = tracker_.has_background();
      return std::nullopt;
    }
  }
  // The tracker is only touched by this thread; the lock guards queued state.
  auto records = tracker_.process_frame(frame);
  std::lock_guard lock(mu_);
  publish_locked(frame);
  return records;
}

void Engine::publish_locked(const Frame& frame) {
  const TrackerConfig& cfg = tracker_.config();
  snap_.frames_processed = tracker_.timings().frames;
  snap_.background_enabled = cfg.background.enabled;
  snap_.background_captured = tracker_.has_background();
  snap_.object_ids = cfg.object_ids();
  snap_.rates.clear();
  snap_.frames_seen.clear();
  snap_.kinds.clear();
  for (const auto& m : cfg.binary.markers) snap_.kinds[m.id] = "binary";
  for (const auto& t : cfg.colored.topologies) snap_.kinds[t.object_id] = "colored";
  for (int id : snap_.object_ids) {
    snap_.rates[id] = tracker_.rates().rate(id);
    snap_.frames_seen[id] = tracker_.rates().frames_seen(id);
  }
  snap_.diagnostics = tracker_.diagnostics();
  if (frame.width > 0) snap_.last_frame = frame;
  ++snap_.version;
}

Engine::Snapshot Engine::snapshot(bool with_frame) const {
  std::lock_guard lock(mu_);
  Snapshot s = snap_;
  if (!with_frame) s.last_frame.reset();
  return s;
}

}  // namespace fidtrack
