#pragma once

// Colored Points detector: HSV classification, single-pass online clustering
// into color masses, EMA smoothing of mass centers and topology resolution
// into ordered square corners.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "fidtrack/geometry.hpp"
#include "fidtrack/imaging.hpp"

namespace fidtrack {

/// Inclusive HSV box. Hue wraps around when h_lo > h_hi.
struct HsvRange {
  double h_lo = 0.0;
  double h_hi = 360.0;
  double s_lo = 0.0;
  double s_hi = 1.0;
  double v_lo = 0.0;
  double v_hi = 1.0;

  bool valid() const {
    auto in01 = [](double x) { return x >= 0.0 && x <= 1.0; };
    return h_lo >= 0.0 && h_lo <= 360.0 && h_hi >= 0.0 && h_hi <= 360.0 && in01(s_lo) &&
           in01(s_hi) && in01(v_lo) && in01(v_hi) && s_lo <= s_hi && v_lo <= v_hi;
  }

  bool contains(const HsvPixel& p) const {
    const bool hue_ok = h_lo <= h_hi ? (p.h >= h_lo && p.h <= h_hi) : (p.h >= h_lo || p.h <= h_hi);
    return hue_ok && p.s >= s_lo && p.s <= s_hi && p.v >= v_lo && p.v <= v_hi;
  }

  friend bool operator==(const HsvRange&, const HsvRange&) = default;
};

struct ColorClass {
  int id = 0;
  std::string name;
  HsvRange range;

  friend bool operator==(const ColorClass&, const ColorClass&) = default;
};

struct BBox {
  int min_x = 0;
  int min_y = 0;
  int max_x = -1;
  int max_y = -1;

  /// Euclidean distance from a pixel to the nearest point of the box (0 inside).
  double distance_to(int x, int y) const {
    const int dx = std::max({min_x - x, 0, x - max_x});
    const int dy = std::max({min_y - y, 0, y - max_y});
    return std::sqrt(static_cast<double>(dx) * dx + static_cast<double>(dy) * dy);
  }
  void expand(int x, int y) {
    min_x = std::min(min_x, x);
    min_y = std::min(min_y, y);
    max_x = std::max(max_x, x);
    max_y = std::max(max_y, y);
  }
  void expand(const BBox& o) {
    expand(o.min_x, o.min_y);
    expand(o.max_x, o.max_y);
  }
  bool contains(const Vec2& p) const {
    return p.x() >= min_x && p.x() <= max_x && p.y() >= min_y && p.y() <= max_y;
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct ColorMass {
  int class_id = 0;
  BBox bbox;
  int pixel_count = 0;
  Vec2 centroid = Vec2::Zero();
  Vec2 smoothed_centroid = Vec2::Zero();
};

struct ColoredPointsConfig {
  double dist_cutoff = 32.0;
  int min_pixels = 8;
  double alpha = 0.7;
  double match_radius = 64.0;

  bool valid() const {
    return dist_cutoff > 0.0 && min_pixels >= 1 && alpha > 0.0 && alpha <= 1.0 &&
           match_radius >= 0.0;
  }

  friend bool operator==(const ColoredPointsConfig&, const ColoredPointsConfig&) = default;
};

/// Two lines of class ids: lines[0] = (TL, TR), lines[1] = (BL, BR).
struct ObjectTopology {
  int object_id = 0;
  std::array<std::array<int, 2>, 2> lines{};
  double marker_size = 0.0;  // meters, edge of the square through the four centers

  std::array<int, 4> corner_classes() const {  // TL, TR, BR, BL
    return {lines[0][0], lines[0][1], lines[1][1], lines[1][0]};
  }
  bool valid() const {
    auto c = corner_classes();
    std::sort(c.begin(), c.end());
    return marker_size > 0.0 && std::adjacent_find(c.begin(), c.end()) == c.end();
  }

  friend bool operator==(const ObjectTopology&, const ObjectTopology&) = default;
};

/// Index of the first class whose range contains the pixel, or -1.
inline int classify_pixel(Rgb c, const std::vector<ColorClass>& classes) {
  const HsvPixel hsv = rgb_to_hsv(c);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].range.contains(hsv)) return static_cast<int>(i);
  }
  return -1;
}

/// Row-major single pass. A pixel joins the first same-class mass whose box is
/// within dist_cutoff; any further same-class masses within reach of that pixel
/// are merged into it, so the result is the connected components of the
/// box-linking relation. Masses below min_pixels are dropped. Output keeps
/// discovery order.
inline std::vector<ColorMass> classify_and_cluster(const Frame& frame,
                                                   const std::vector<ColorClass>& classes,
                                                   const ColoredPointsConfig& cfg) {
  if (classes.empty()) throw Error(ErrorCode::kInvalidArgument, "no color classes configured");

  struct Accum {
    int class_index;
    BBox bbox;
    std::int64_t count = 0;
    double sum_x = 0.0;
    double sum_y = 0.0;
    bool alive = true;
  };
  std::vector<Accum> masses;
  std::vector<std::vector<int>> by_class(classes.size());

  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const int cls = classify_pixel(frame.at(x, y), classes);
      if (cls < 0) continue;
      auto& candidates = by_class[cls];
      int target = -1;
      for (int idx : candidates) {
        Accum& m = masses[idx];
        if (!m.alive || m.bbox.distance_to(x, y) > cfg.dist_cutoff) continue;
        if (target < 0) {
          target = idx;
          continue;
        }
        Accum& t = masses[target];
        t.bbox.expand(m.bbox);
        t.count += m.count;
        t.sum_x += m.sum_x;
        t.sum_y += m.sum_y;
        m.alive = false;
      }
      if (target < 0) {
        target = static_cast<int>(masses.size());
        masses.push_back({cls, BBox{x, y, x, y}});
        candidates.push_back(target);
      }
      Accum& t = masses[target];
      t.bbox.expand(x, y);
      ++t.count;
      t.sum_x += x;
      t.sum_y += y;
      if (candidates.size() > 8) {
        std::erase_if(candidates, [&](int i) { return !masses[i].alive; });
      }
    }
  }

  std::vector<ColorMass> out;
  for (const Accum& m : masses) {
    if (!m.alive || m.count < cfg.min_pixels) continue;
    ColorMass cm;
    cm.class_id = classes[m.class_index].id;
    cm.bbox = m.bbox;
    cm.pixel_count = static_cast<int>(m.count);
    cm.centroid = {m.sum_x / m.count, m.sum_y / m.count};
    cm.smoothed_centroid = cm.centroid;
    out.push_back(cm);
  }
  return out;
}

/// EMA on mass centers. Each current mass is paired with the nearest unused
/// previous mass of its class (greedy by ascending distance to the previous
/// smoothed center, within match_radius).
inline std::vector<ColorMass> smooth_masses(const std::vector<ColorMass>& previous,
                                            const std::vector<ColorMass>& current,
                                            const ColoredPointsConfig& cfg) {
  std::vector<ColorMass> out = current;
  for (auto& m : out) m.smoothed_centroid = m.centroid;

  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < current.size(); ++i) {
    for (std::size_t j = 0; j < previous.size(); ++j) {
      if (current[i].class_id != previous[j].class_id) continue;
      const double d = (current[i].centroid - previous[j].smoothed_centroid).norm();
      if (d <= cfg.match_radius) pairs.emplace_back(d, i, j);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> cur_used(current.size(), false);
  std::vector<bool> prev_used(previous.size(), false);
  for (const auto& [d, i, j] : pairs) {
    if (cur_used[i] || prev_used[j]) continue;
    cur_used[i] = prev_used[j] = true;
    out[i].smoothed_centroid =
        cfg.alpha * current[i].centroid + (1.0 - cfg.alpha) * previous[j].smoothed_centroid;
  }
  return out;
}

/// Smoothed centers ordered TL, TR, BR, BL; nullopt when any corner class has
/// zero or several candidate masses.
inline std::optional<std::array<Vec2, 4>> resolve_topology(const std::vector<ColorMass>& masses,
                                                           const ObjectTopology& topo) {
  std::array<Vec2, 4> corners;
  const auto classes = topo.corner_classes();
  for (std::size_t k = 0; k < 4; ++k) {
    const ColorMass* found = nullptr;
    for (const auto& m : masses) {
      if (m.class_id != classes[k]) continue;
      if (found) return std::nullopt;
      found = &m;
    }
    if (!found) return std::nullopt;
    corners[k] = found->smoothed_centroid;
  }
  return corners;
}

/// Per-stream state for the Colored Points detector.
class ColoredPointsTracker {
 public:
  ColoredPointsTracker() = default;
  ColoredPointsTracker(std::vector<ColorClass> classes, ColoredPointsConfig cfg)
      : classes_(std::move(classes)), cfg_(cfg) {}

  const std::vector<ColorMass>& update(const Frame& frame) {
    if (classes_.empty()) {
      previous_.clear();
      return previous_;
    }
    previous_ = smooth_masses(previous_, classify_and_cluster(frame, classes_, cfg_), cfg_);
    return previous_;
  }

  const std::vector<ColorMass>& masses() const { return previous_; }
  void reset() { previous_.clear(); }

 private:
  std::vector<ColorClass> classes_;
  ColoredPointsConfig cfg_;
  std::vector<ColorMass> previous_;
};

}  // namespace fidtrack
