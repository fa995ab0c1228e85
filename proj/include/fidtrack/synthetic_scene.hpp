#pragma once

// Ground-truth renderer: binary markers and colored-point squares drawn at
// exact poses through the same camera model the detectors assume.
//
// Rasterization is inverse-mapped: each pixel center casts one ray and the
// nearest marker plane it hits decides the color. With supersample = 1 (the
// default) the result is aliased nearest-neighbor; with supersample = n > 1,
// pixels whose corners disagree with their center are box-filtered over n x n
// rays.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "fidtrack/binary_marker.hpp"
#include "fidtrack/geometry.hpp"
#include "fidtrack/imaging.hpp"

namespace fidtrack {

enum class MarkerKind { kBinary, kColored };

inline const char* to_string(MarkerKind k) { return k == MarkerKind::kBinary ? "binary" : "colored"; }

inline constexpr double kDiskRadiusFraction = 0.15;

struct Keyframe {
  std::size_t frame = 0;
  Pose pose;
};

/// One scripted marker. Binary markers use `marker_id` from the dictionary;
/// colored squares place disks of `corner_classes` (TL, TR, BR, BL) centered
/// on the square's corners. The pose is interpolated between keyframes
/// (linear translation, slerped rotation) and held outside them.
struct SceneObject {
  MarkerKind kind = MarkerKind::kBinary;
  int object_id = 0;
  int marker_id = 0;
  std::array<int, 4> corner_classes{};
  double marker_size = 0.05;
  std::vector<Keyframe> keyframes;
  std::size_t first_frame = 0;
  std::size_t last_frame = static_cast<std::size_t>(-1);  // inclusive

  bool visible_at(std::size_t index) const { return index >= first_frame && index <= last_frame; }

  Pose pose_at(std::size_t index) const {
    if (keyframes.empty()) return {};
    if (index <= keyframes.front().frame) return keyframes.front().pose;
    for (std::size_t i = 1; i < keyframes.size(); ++i) {
      const Keyframe& a = keyframes[i - 1];
      const Keyframe& b = keyframes[i];
      if (index > b.frame) continue;
      const double f = static_cast<double>(index - a.frame) / static_cast<double>(b.frame - a.frame);
      const Eigen::Quaterniond qa(a.pose.rotation);
      const Eigen::Quaterniond qb(b.pose.rotation);
      return {qa.slerp(f, qb).toRotationMatrix(),
              (1.0 - f) * a.pose.translation + f * b.pose.translation};
    }
    return keyframes.back().pose;
  }
};

struct DictionarySpec {
  std::size_t count = 50;
  int grid_n = 4;
  int d_min = 4;
  std::uint64_t seed = 1;

  friend bool operator==(const DictionarySpec&, const DictionarySpec&) = default;
};

struct SceneScript {
  CameraIntrinsics camera{800.0, 800.0, 320.0, 240.0, 640, 480};
  DistortionCoeffs distortion;
  Rgb background{200, 200, 200};
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  std::size_t frame_count = 1;
  double fps = 30.0;
  int supersample = 1;
  std::map<int, Rgb> class_colors;
  DictionarySpec dictionary;
  std::vector<SceneObject> objects;
};

struct Placement {
  const SceneObject* object;
  Pose pose;
};

struct GroundTruth {
  int object_id = 0;
  MarkerKind kind = MarkerKind::kBinary;
  Pose pose;
  double marker_size = 0.0;
  std::optional<std::array<Vec2, 4>> corners;  // projected TL, TR, BR, BL when in front
};

struct RenderedFrame {
  Frame frame;
  std::vector<GroundTruth> truth;
};

inline std::vector<Placement> placements_at(const SceneScript& script, std::size_t index) {
  std::vector<Placement> out;
  for (const auto& obj : script.objects) {
    if (obj.visible_at(index)) out.push_back({&obj, obj.pose_at(index)});
  }
  return out;
}

namespace detail {

inline std::optional<Rgb> shade_binary(const SceneObject& obj, const MarkerDictionary& dict,
                                       const Vec2& m) {
  const double s = obj.marker_size;
  const double u = m.x() + s / 2.0;
  const double v = s / 2.0 - m.y();
  if (u < 0.0 || v < 0.0 || u >= s || v >= s) return std::nullopt;
  const int cells = dict.grid_n + 2;
  const int col = std::min(cells - 1, static_cast<int>(u / s * cells));
  const int row = std::min(cells - 1, static_cast<int>(v / s * cells));
  if (row == 0 || col == 0 || row == cells - 1 || col == cells - 1) return Rgb{0, 0, 0};
  const auto code = dict.codes.at(static_cast<std::size_t>(obj.marker_id));
  return code_bit(code, dict.grid_n, row - 1, col - 1) ? Rgb{255, 255, 255} : Rgb{0, 0, 0};
}

inline std::optional<Rgb> shade_colored(const SceneObject& obj,
                                        const std::map<int, Rgb>& colors, const Vec2& m) {
  const double h = obj.marker_size / 2.0;
  const double r2 = std::pow(kDiskRadiusFraction * obj.marker_size, 2);
  const std::array<Vec2, 4> centers{Vec2(-h, h), Vec2(h, h), Vec2(h, -h), Vec2(-h, -h)};
  for (int k = 0; k < 4; ++k) {
    if ((m - centers[k]).squaredNorm() <= r2) {
      auto it = colors.find(obj.corner_classes[k]);
      return it == colors.end() ? Rgb{255, 0, 255} : it->second;
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Renders frame `index` of the script. `dict` must contain every binary id used.
inline RenderedFrame render_frame(const SceneScript& script, std::size_t index,
                                  const MarkerDictionary& dict) {
  if (index >= script.frame_count) throw Error(ErrorCode::kInvalidArgument, "frame index out of range");
  const CameraIntrinsics& k = script.camera;
  RenderedFrame out;
  out.frame = Frame(k.width, k.height, script.background);
  out.frame.frame_index = index;
  out.frame.timestamp_us = static_cast<std::int64_t>(std::llround(index * 1e6 / script.fps));

  struct Prepared {
    const SceneObject* obj;
    Mat3 rt;
    Vec3 t;
    Vec3 n;
    double nt;
  };
  std::vector<Prepared> prepared;
  for (const auto& p : placements_at(script, index)) {
    const Vec3 n = p.pose.rotation.col(2);
    prepared.push_back({p.object, p.pose.rotation.transpose(), p.pose.translation, n,
                        n.dot(p.pose.translation)});

    GroundTruth gt{p.object->object_id, p.object->kind, p.pose, p.object->marker_size, std::nullopt};
    const double h = p.object->marker_size / 2.0;
    const std::array<Vec3, 4> model{Vec3(-h, h, 0), Vec3(h, h, 0), Vec3(h, -h, 0), Vec3(-h, -h, 0)};
    try {
      std::array<Vec2, 4> c;
      for (int i = 0; i < 4; ++i) c[i] = project_point(p.pose, model[i], k, script.distortion);
      gt.corners = c;
    } catch (const Error&) {
    }
    out.truth.push_back(gt);
  }

  auto shade = [&](double px, double py) -> std::optional<Rgb> {
    const Vec2 nrm = undistort_normalized(k.to_normalized({px, py}), script.distortion);
    const Vec3 ray(nrm.x(), nrm.y(), 1.0);
    double nearest = std::numeric_limits<double>::infinity();
    std::optional<Rgb> color;
    for (const auto& p : prepared) {
      const double denom = p.n.dot(ray);
      if (std::abs(denom) < 1e-12) continue;
      const double lambda = p.nt / denom;
      if (!(lambda > 0.0) || lambda >= nearest) continue;
      const Vec3 local = p.rt * (lambda * ray - p.t);
      const Vec2 m(local.x(), local.y());
      const auto c = p.obj->kind == MarkerKind::kBinary
                         ? detail::shade_binary(*p.obj, dict, m)
                         : detail::shade_colored(*p.obj, script.class_colors, m);
      if (c) {
        nearest = lambda;
        color = c;
      }
    }
    return color;
  };
  auto packed = [&](const std::optional<Rgb>& c) -> std::uint32_t {
    const Rgb v = c.value_or(script.background);
    return (std::uint32_t{v.r} << 16) | (std::uint32_t{v.g} << 8) | v.b;
  };

  if (!prepared.empty()) {
    const int ss = std::max(1, script.supersample);
    std::vector<std::uint32_t> corners;
    if (ss > 1) {
      corners.resize(static_cast<std::size_t>(k.width + 1) * (k.height + 1));
      for (int y = 0; y <= k.height; ++y)
        for (int x = 0; x <= k.width; ++x)
          corners[static_cast<std::size_t>(y) * (k.width + 1) + x] = packed(shade(x - 0.5, y - 0.5));
    }
    auto corner = [&](int x, int y) { return corners[static_cast<std::size_t>(y) * (k.width + 1) + x]; };
    for (int y = 0; y < k.height; ++y) {
      for (int x = 0; x < k.width; ++x) {
        const auto center = shade(x, y);
        const std::uint32_t c = packed(center);
        if (ss == 1 || (corner(x, y) == c && corner(x + 1, y) == c && corner(x, y + 1) == c &&
                        corner(x + 1, y + 1) == c)) {
          if (center) out.frame.set(x, y, *center);
          continue;
        }
        std::array<int, 3> sum{};
        for (int i = 0; i < ss; ++i) {
          for (int j = 0; j < ss; ++j) {
            const Rgb v = shade(x - 0.5 + (j + 0.5) / ss, y - 0.5 + (i + 0.5) / ss)
                              .value_or(script.background);
            sum[0] += v.r;
            sum[1] += v.g;
            sum[2] += v.b;
          }
        }
        const int n = ss * ss;
        out.frame.set(x, y,
                      {static_cast<std::uint8_t>((sum[0] + n / 2) / n),
                       static_cast<std::uint8_t>((sum[1] + n / 2) / n),
                       static_cast<std::uint8_t>((sum[2] + n / 2) / n)});
      }
    }
  }

  if (script.noise_sigma > 0.0) {
    std::mt19937_64 rng(script.noise_seed ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
    std::normal_distribution<double> noise(0.0, script.noise_sigma);
    for (auto& b : out.frame.pixels) {
      b = static_cast<std::uint8_t>(std::clamp(std::lround(b + noise(rng)), 0L, 255L));
    }
  }
  return out;
}

/// Pose of a marker facing the camera (marker +z toward the camera, marker +y
/// up in the image) at the given translation.
inline Pose facing_camera(const Vec3& translation) {
  Mat3 r = Mat3::Identity();
  r(1, 1) = -1.0;
  r(2, 2) = -1.0;
  return {r, translation};
}

}  // namespace fidtrack
