#include "fidtrack/size_sweep.hpp"

#include <cstdio>
#include <numbers>

#include "fidtrack/engine.hpp"

namespace fidtrack {

std::vector<SweepPoint> size_sweep(const SweepSettings& settings, const std::vector<double>& sizes) {
  if (settings.frames < 1 || !(settings.distance > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "sweep needs frames >= 1 and distance > 0");
  }
  const auto& ds = settings.scene.dictionary;
  const MarkerDictionary dict = generate_dictionary(ds.count, ds.grid_n, ds.d_min, ds.seed);
  const CameraIntrinsics& k = settings.scene.camera;
  std::vector<SweepPoint> out;
  for (double size : sizes) {
    if (!(size > 0.0)) throw Error(ErrorCode::kInvalidArgument, "marker sizes must be positive");
    SceneScript script = settings.scene;
    script.frame_count = settings.frames;
    SceneObject obj;
    obj.kind = MarkerKind::kBinary;
    obj.object_id = settings.marker_id;
    obj.marker_id = settings.marker_id;
    obj.marker_size = size;
    const double drift = settings.drift_px * settings.distance / k.fx;
    const double spin = settings.spin_deg * std::numbers::pi / 180.0;
    Pose start = facing_camera({-drift / 2.0, -drift / 4.0, settings.distance});
    Pose end = facing_camera({drift / 2.0, drift / 4.0, settings.distance});
    end.rotation = end.rotation * axis_angle_to_matrix({Vec3(0.0, 0.0, spin)});
    obj.keyframes = {{0, start}, {settings.frames > 1 ? settings.frames - 1 : 1, end}};
    script.objects = {obj};

    TrackerConfig cfg;
    cfg.camera = k;
    cfg.distortion = script.distortion;
    cfg.binary.dictionary = ds;
    cfg.binary.markers = {{settings.marker_id, size}};
    Tracker tracker(cfg, dict);
    for (std::size_t i = 0; i < settings.frames; ++i) tracker.process_frame(render_frame(script, i, dict).frame);

    SweepPoint p;
    p.marker_size = size;
    p.projected_px = k.fx * size / settings.distance;
    p.frames = settings.frames;
    p.detected = tracker.detected_total(settings.marker_id);
    p.rate = static_cast<double>(p.detected) / static_cast<double>(p.frames);
    out.push_back(p);
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::string out = "marker_size,projected_px,frames,detected,rate\n";
  char line[160];
  for (const auto& p : points) {
    std::snprintf(line, sizeof line, "%.6f,%.3f,%zu,%zu,%.6f\n", p.marker_size, p.projected_px, p.frames,
                  p.detected, p.rate);
    out += line;
  }
  return out;
}

}  // namespace fidtrack
