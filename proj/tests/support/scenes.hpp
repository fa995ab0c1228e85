#pragma once

// Small scripted scenes and matching tracker configs shared by the engine,
// streaming and acceptance tests.

#include "fidtrack/config.hpp"
#include "fidtrack/synthetic_scene.hpp"
#include "oracles.hpp"

namespace scenes {

using namespace fidtrack;

inline constexpr int kBinaryId = 3;
inline constexpr int kColoredId = 100;
inline constexpr double kBinarySize = 0.06;
inline constexpr double kColoredSize = 0.08;

inline CameraIntrinsics small_camera() { return {400.0, 400.0, 160.0, 120.0, 320, 240}; }

inline std::map<int, Rgb> primary_class_colors() {
  const auto colors = oracle::primary_colors();
  std::map<int, Rgb> out;
  for (int i = 0; i < 4; ++i) out[i] = colors[i];
  return out;
}

/// One binary marker (left) and one colored square (right), drifting slowly.
inline SceneScript two_objects(std::size_t frames) {
  SceneScript s;
  s.camera = small_camera();
  s.background = {128, 128, 128};
  s.frame_count = frames;
  s.class_colors = primary_class_colors();
  s.dictionary = {50, 4, 4, 1};

  SceneObject b;
  b.kind = MarkerKind::kBinary;
  b.object_id = kBinaryId;
  b.marker_id = kBinaryId;
  b.marker_size = kBinarySize;
  const Mat3 tilt_b = Eigen::AngleAxisd(0.3, Vec3::UnitY()).toRotationMatrix();
  b.keyframes = {{0, {tilt_b * facing_camera(Vec3::Zero()).rotation, Vec3(-0.09, 0.0, 0.5)}},
                 {frames > 1 ? frames - 1 : 1,
                  {Eigen::AngleAxisd(0.2, Vec3::UnitX()).toRotationMatrix() * tilt_b *
                       facing_camera(Vec3::Zero()).rotation,
                   Vec3(-0.07, 0.02, 0.55)}}};

  SceneObject c;
  c.kind = MarkerKind::kColored;
  c.object_id = kColoredId;
  c.corner_classes = {0, 1, 2, 3};
  c.marker_size = kColoredSize;
  const Mat3 tilt_c = Eigen::AngleAxisd(-0.25, Vec3::UnitY()).toRotationMatrix();
  c.keyframes = {{0, {tilt_c * facing_camera(Vec3::Zero()).rotation, Vec3(0.1, 0.0, 0.6)}},
                 {frames > 1 ? frames - 1 : 1,
                  {Eigen::AngleAxisd(-0.15, Vec3::UnitX()).toRotationMatrix() * tilt_c *
                       facing_camera(Vec3::Zero()).rotation,
                   Vec3(0.08, -0.02, 0.62)}}};
  s.objects = {b, c};
  return s;
}

/// Tracker config that knows both objects of two_objects().
inline TrackerConfig two_objects_config() {
  TrackerConfig cfg;
  cfg.camera = small_camera();
  cfg.colored.classes = oracle::primary_classes();
  cfg.colored.topologies = {{kColoredId, {{{0, 1}, {3, 2}}}, kColoredSize}};
  cfg.binary.dictionary = {50, 4, 4, 1};
  cfg.binary.markers = {{kBinaryId, kBinarySize}};
  return cfg;
}

}  // namespace scenes
