#pragma once

// Square binary markers: a self-generated rotation-aware dictionary, adaptive
// binarization, quad extraction from dark-region contours, and decoding.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "fidtrack/errors.hpp"
#include "fidtrack/geometry.hpp"
#include "fidtrack/homography.hpp"
#include "fidtrack/imaging.hpp"

namespace fidtrack {

// ---------------------------------------------------------------------------
// Dictionary
//
// A code is an n x n bit matrix packed row-major into the low n*n bits:
// bit (r * n + c) holds row r, column c. A set bit is a white cell.

inline std::uint64_t code_mask(int grid_n) {
  const int bits = grid_n * grid_n;
  return bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
}

inline bool code_bit(std::uint64_t code, int grid_n, int r, int c) {
  return (code >> (r * grid_n + c)) & 1U;
}

/// Rotates the bit matrix 90 degrees clockwise.
inline std::uint64_t rotate_code(std::uint64_t code, int grid_n) {
  std::uint64_t out = 0;
  for (int r = 0; r < grid_n; ++r)
    for (int c = 0; c < grid_n; ++c)
      if (code_bit(code, grid_n, grid_n - 1 - c, r)) out |= std::uint64_t{1} << (r * grid_n + c);
  return out;
}

inline std::uint64_t rotate_code(std::uint64_t code, int grid_n, int quarter_turns) {
  for (int i = 0; i < ((quarter_turns % 4) + 4) % 4; ++i) code = rotate_code(code, grid_n);
  return code;
}

inline int hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

/// min over the four rotations r of hamming(a, rot_r(b)).
inline int rotation_aware_distance(std::uint64_t a, std::uint64_t b, int grid_n) {
  int best = std::numeric_limits<int>::max();
  for (int r = 0; r < 4; ++r) best = std::min(best, hamming(a, rotate_code(b, grid_n, r)));
  return best;
}

/// min over r in {1,2,3} of hamming(code, rot_r(code)).
inline int self_rotation_distance(std::uint64_t code, int grid_n) {
  int best = std::numeric_limits<int>::max();
  for (int r = 1; r < 4; ++r) best = std::min(best, hamming(code, rotate_code(code, grid_n, r)));
  return best;
}

struct MarkerDictionary {
  int grid_n = 4;
  std::vector<std::uint64_t> codes;
  int d_min = 4;
  std::uint64_t seed = 0;

  int max_correction() const { return std::max(0, (d_min - 1) / 2); }
  std::size_t size() const { return codes.size(); }

  friend bool operator==(const MarkerDictionary&, const MarkerDictionary&) = default;
};

inline constexpr std::size_t kDictionarySearchBudget = 1'000'000;

/// Greedy seeded search. Deterministic for identical arguments: candidates are
/// raw mt19937_64 outputs, which the standard pins down exactly.
inline MarkerDictionary generate_dictionary(std::size_t count, int grid_n, int d_min,
                                            std::uint64_t seed) {
  if (count < 1 || d_min < 1 || grid_n < 2 || grid_n > 8) {
    throw Error(ErrorCode::kInvalidArgument, "need count >= 1, d_min >= 1, 2 <= grid_n <= 8");
  }
  MarkerDictionary dict{grid_n, {}, d_min, seed};
  std::mt19937_64 rng(seed);
  const std::uint64_t mask = code_mask(grid_n);
  for (std::size_t attempt = 0; attempt < kDictionarySearchBudget; ++attempt) {
    const std::uint64_t candidate = rng() & mask;
    if (self_rotation_distance(candidate, grid_n) < d_min) continue;
    bool ok = true;
    for (std::uint64_t existing : dict.codes) {
      if (rotation_aware_distance(existing, candidate, grid_n) < d_min) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    dict.codes.push_back(candidate);
    if (dict.codes.size() == count) return dict;
  }
  throw Error(ErrorCode::kInfeasible,
              "could not find " + std::to_string(count) + " codes with d_min " +
                  std::to_string(d_min) + " within the search budget");
}

/// Smallest rotation-aware distance over all pairs and self-rotations.
inline int measured_min_distance(const MarkerDictionary& dict) {
  int best = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < dict.codes.size(); ++i) {
    best = std::min(best, self_rotation_distance(dict.codes[i], dict.grid_n));
    for (std::size_t j = i + 1; j < dict.codes.size(); ++j) {
      best = std::min(best, rotation_aware_distance(dict.codes[i], dict.codes[j], dict.grid_n));
    }
  }
  return best;
}

/// Text export: one line per code, "<id> <n*n chars of 0/1>\n", row-major.
inline void write_dictionary(std::ostream& os, const MarkerDictionary& dict) {
  const int bits = dict.grid_n * dict.grid_n;
  for (std::size_t id = 0; id < dict.codes.size(); ++id) {
    os << id << ' ';
    for (int b = 0; b < bits; ++b) os << (((dict.codes[id] >> b) & 1U) ? '1' : '0');
    os << '\n';
  }
}

inline MarkerDictionary read_dictionary(std::istream& is) {
  MarkerDictionary dict;
  dict.grid_n = 0;
  std::string line;
  std::size_t expected_id = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t id = 0;
    std::string bits;
    if (!(ls >> id >> bits)) throw Error(ErrorCode::kParse, "malformed dictionary line: " + line);
    if (id != expected_id) throw Error(ErrorCode::kParse, "dictionary ids must be 0..N-1 in order");
    const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(bits.size()))));
    if (n * n != static_cast<int>(bits.size()) || n < 2 || n > 8) {
      throw Error(ErrorCode::kParse, "code length is not a square of 2..8");
    }
    if (dict.grid_n == 0) dict.grid_n = n;
    if (dict.grid_n != n) throw Error(ErrorCode::kParse, "mixed code sizes in dictionary");
    std::uint64_t code = 0;
    for (int b = 0; b < n * n; ++b) {
      if (bits[b] == '1') {
        code |= std::uint64_t{1} << b;
      } else if (bits[b] != '0') {
        throw Error(ErrorCode::kParse, "code bits must be 0 or 1");
      }
    }
    dict.codes.push_back(code);
    ++expected_id;
  }
  if (dict.codes.empty()) throw Error(ErrorCode::kParse, "empty dictionary");
  dict.d_min = measured_min_distance(dict);
  return dict;
}

// ---------------------------------------------------------------------------
// Binarization

/// Dark iff value < mean of the (border-clamped) window - offset.
inline BinaryMask binarize_adaptive(const GrayFrame& gray, int window = 15, double offset = 7.0) {
  if (window < 3 || window % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument, "window must be odd and >= 3");
  }
  const int w = gray.width;
  const int h = gray.height;
  std::vector<std::int64_t> integral(static_cast<std::size_t>(w + 1) * (h + 1), 0);
  auto at = [&](int x, int y) -> std::int64_t& {
    return integral[static_cast<std::size_t>(y) * (w + 1) + x];
  };
  for (int y = 0; y < h; ++y) {
    std::int64_t row = 0;
    for (int x = 0; x < w; ++x) {
      row += gray.at(x, y);
      at(x + 1, y + 1) = at(x + 1, y) + row;
    }
  }
  const int r = window / 2;
  BinaryMask mask(w, h);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r);
    const int y1 = std::min(h - 1, y + r);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r);
      const int x1 = std::min(w - 1, x + r);
      const std::int64_t sum = at(x1 + 1, y1 + 1) - at(x0, y1 + 1) - at(x1 + 1, y0) + at(x0, y0);
      const double area = static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1);
      mask.set(x, y, gray.at(x, y) < static_cast<double>(sum) / area - offset);
    }
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Quads

/// Corners in image pixels with positive shoelace area (TL, TR, BR, BL order
/// for an upright, non-mirrored view), starting at the corner with the
/// smallest x + y.
struct Quad {
  std::array<Vec2, 4> corners;

  double signed_area() const {
    double a = 0.0;
    for (int i = 0; i < 4; ++i) {
      const Vec2& p = corners[i];
      const Vec2& q = corners[(i + 1) % 4];
      a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * a;
  }
  double area() const { return std::abs(signed_area()); }
  bool convex() const {
    int sign = 0;
    for (int i = 0; i < 4; ++i) {
      const Vec2 e1 = corners[(i + 1) % 4] - corners[i];
      const Vec2 e2 = corners[(i + 2) % 4] - corners[(i + 1) % 4];
      const double cross = e1.x() * e2.y() - e1.y() * e2.x();
      if (cross == 0.0) return false;
      const int s = cross > 0 ? 1 : -1;
      if (sign == 0) sign = s;
      if (s != sign) return false;
    }
    return true;
  }
  bool contains(const Vec2& p) const {
    int sign = 0;
    for (int i = 0; i < 4; ++i) {
      const Vec2 e = corners[(i + 1) % 4] - corners[i];
      const Vec2 v = p - corners[i];
      const double cross = e.x() * v.y() - e.y() * v.x();
      const int s = cross > 0 ? 1 : (cross < 0 ? -1 : 0);
      if (s == 0) continue;
      if (sign == 0) sign = s;
      if (s != sign) return false;
    }
    return true;
  }
  Vec2 center() const { return 0.25 * (corners[0] + corners[1] + corners[2] + corners[3]); }
};

/// Reorders to positive area, starting at min(x + y).
inline Quad canonical_quad(std::array<Vec2, 4> c) {
  Quad q{c};
  if (q.signed_area() < 0.0) std::swap(q.corners[1], q.corners[3]);
  int start = 0;
  for (int i = 1; i < 4; ++i) {
    if (q.corners[i].sum() < q.corners[start].sum() - 1e-9) start = i;
  }
  std::rotate(q.corners.begin(), q.corners.begin() + start, q.corners.end());
  return q;
}

struct QuadParams {
  double min_area = 100.0;        // px^2
  double approx_fraction = 0.03;  // polygon tolerance as a fraction of perimeter
  double edge_probe = 2.0;        // px on either side of an edge when fitting lines
};

namespace detail {

struct Pixel {
  int x;
  int y;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

// Clockwise in image coordinates (y down): E, SE, S, SW, W, NW, N, NE.
inline constexpr std::array<Pixel, 8> kNeighbors{
    {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

inline int direction_of(int dx, int dy) {
  for (int d = 0; d < 8; ++d) {
    if (kNeighbors[d].x == dx && kNeighbors[d].y == dy) return d;
  }
  return -1;
}

/// Moore-neighbor trace of the outer border of the component containing
/// `start`, which must be its first pixel in raster order.
template <typename InComponent>
std::vector<Pixel> trace_outer_border(Pixel start, InComponent&& inside, std::size_t max_steps) {
  std::vector<Pixel> contour{start};
  Pixel p = start;
  int backtrack = 4;  // west of the first raster pixel is outside
  for (std::size_t step = 0; step < max_steps; ++step) {
    int found = -1;
    for (int i = 1; i <= 8; ++i) {
      const int d = (backtrack + i) % 8;
      if (inside(p.x + kNeighbors[d].x, p.y + kNeighbors[d].y)) {
        found = d;
        break;
      }
    }
    if (found < 0) break;  // isolated pixel
    const Pixel q{p.x + kNeighbors[found].x, p.y + kNeighbors[found].y};
    if (p == start && contour.size() > 1 && q == contour[1]) {
      contour.pop_back();  // closing revisit of start
      break;
    }
    const int prev = (found + 7) % 8;
    const Pixel b{p.x + kNeighbors[prev].x, p.y + kNeighbors[prev].y};
    backtrack = direction_of(b.x - q.x, b.y - q.y);
    p = q;
    contour.push_back(p);
  }
  return contour;
}

inline double point_line_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len = ab.norm();
  if (len < 1e-12) return (p - a).norm();
  return std::abs(ab.x() * (p.y() - a.y()) - ab.y() * (p.x() - a.x())) / len;
}

inline void douglas_peucker(const std::vector<Vec2>& pts, std::size_t first, std::size_t last,
                            double eps, std::vector<std::size_t>& keep) {
  if (last <= first + 1) return;
  double worst = -1.0;
  std::size_t idx = first;
  for (std::size_t i = first + 1; i < last; ++i) {
    const double d = point_line_distance(pts[i], pts[first], pts[last]);
    if (d > worst) {
      worst = d;
      idx = i;
    }
  }
  if (worst > eps) {
    douglas_peucker(pts, first, idx, eps, keep);
    keep.push_back(idx);
    douglas_peucker(pts, idx, last, eps, keep);
  }
}

/// Closed-polygon simplification returning indices into `contour`. The ring is
/// split at the point farthest from the centroid (a hull vertex) and the point
/// farthest from that; vertices that end up within eps of the chord through
/// their neighbors are removed afterwards.
inline std::vector<std::size_t> simplify_closed(const std::vector<Vec2>& contour, double eps) {
  const std::size_t n = contour.size();
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  if (n < 3) return all;

  Vec2 centroid = Vec2::Zero();
  for (const auto& p : contour) centroid += p;
  centroid /= static_cast<double>(n);
  std::size_t start = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if ((contour[i] - centroid).squaredNorm() > (contour[start] - centroid).squaredNorm()) start = i;
  }
  std::vector<Vec2> ring;
  ring.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) ring.push_back(contour[(start + i) % n]);

  std::size_t far = 0;
  double far_d = -1.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double d = (ring[i] - ring[0]).squaredNorm();
    if (d > far_d) {
      far_d = d;
      far = i;
    }
  }
  std::vector<std::size_t> keep{0};
  douglas_peucker(ring, 0, far, eps, keep);
  keep.push_back(far);
  douglas_peucker(ring, far, n, eps, keep);

  bool changed = true;
  while (changed && keep.size() > 3) {
    changed = false;
    for (std::size_t i = 0; i < keep.size(); ++i) {
      const Vec2& prev = ring[keep[(i + keep.size() - 1) % keep.size()]];
      const Vec2& next = ring[keep[(i + 1) % keep.size()]];
      if (point_line_distance(ring[keep[i]], prev, next) <= eps) {
        keep.erase(keep.begin() + static_cast<std::ptrdiff_t>(i));
        changed = true;
        break;
      }
    }
  }
  for (auto& k : keep) k = (k + start) % n;
  return keep;
}

/// Total-least-squares line a x + b y + c = 0 with unit (a, b).
inline std::optional<Vec3> fit_line(const std::vector<Vec2>& pts) {
  if (pts.size() < 3) return std::nullopt;
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const Vec2 normal = es.eigenvectors().col(0);
  return Vec3(normal.x(), normal.y(), -normal.dot(mean));
}

/// Corners from lines fitted to the contour pixels of each side, skipping
/// the stretch near each polygon vertex.
inline std::optional<std::array<Vec2, 4>> corners_from_contour(
    const std::vector<Vec2>& contour, const std::vector<std::size_t>& vertices) {
  const std::size_t n = contour.size();
  std::array<Vec3, 4> lines;
  for (int side = 0; side < 4; ++side) {
    const std::size_t a = vertices[side];
    const std::size_t b = vertices[(side + 1) % 4];
    const std::size_t span = (b + n - a) % n;
    const std::size_t margin = std::max<std::size_t>(1, span / 8);
    std::vector<Vec2> pts;
    for (std::size_t k = margin; k + margin <= span; ++k) pts.push_back(contour[(a + k) % n]);
    const auto line = fit_line(pts);
    if (!line) return std::nullopt;
    lines[side] = *line;
  }
  std::array<Vec2, 4> out;
  for (int i = 0; i < 4; ++i) {
    const Vec3 x = lines[(i + 3) % 4].cross(lines[i]);
    if (std::abs(x.z()) < 1e-12) return std::nullopt;
    out[i] = x.hnormalized();
  }
  return out;
}

/// Bilinear sample with pixel centers at integer coordinates, clamped.
template <typename Source>
double sample_bilinear(const Source& value, int width, int height, double x, double y) {
  x = std::clamp(x, 0.0, width - 1.0);
  y = std::clamp(y, 0.0, height - 1.0);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  return (1 - fy) * ((1 - fx) * value(x0, y0) + fx * value(x1, y0)) +
         fy * ((1 - fx) * value(x0, y1) + fx * value(x1, y1));
}

/// Refits each side as a total-least-squares line through edge crossings found
/// along the side normal, then intersects adjacent lines. `darkness` is higher
/// inside the quad. A corner moves at most a fifth of its shorter adjacent side.
template <typename Source>
Quad fit_quad_edges(const Quad& quad, const Source& darkness, int width, int height, double probe,
                    double min_contrast) {
  std::array<Vec3, 4> lines;  // a x + b y + c = 0
  std::array<bool, 4> fitted{};
  for (int side = 0; side < 4; ++side) {
    const Vec2 a = quad.corners[side];
    const Vec2 b = quad.corners[(side + 1) % 4];
    const double len = (b - a).norm();
    if (len < 4.0) continue;
    const Vec2 u = (b - a) / len;
    const Vec2 outward(u.y(), -u.x());
    std::vector<Vec2> edge;
    const int samples = std::max(5, static_cast<int>(len * 0.7));
    for (int s = 0; s < samples; ++s) {
      const double t = len * (0.15 + 0.7 * (s + 0.5) / samples);
      const Vec2 base = a + u * t;
      auto value_at = [&](double off) {
        const Vec2 p = base + outward * off;
        return sample_bilinear(darkness, width, height, p.x(), p.y());
      };
      const double in = value_at(-probe);
      const double out = value_at(probe);
      if (in - out < min_contrast) continue;
      // Edge offset from the integrated profile; unbiased for an area-sampled
      // step, where a half-level crossing of the bilinear interpolant is not.
      constexpr int kSteps = 80;
      const double h = 2.0 * probe / kSteps;
      double mass = 0.0;
      for (int k = 0; k <= kSteps; ++k) {
        const double v = std::clamp((value_at(-probe + k * h) - out) / (in - out), 0.0, 1.0);
        mass += (k == 0 || k == kSteps ? 0.5 : 1.0) * v * h;
      }
      edge.push_back(base + outward * (mass - probe));
    }
    if (const auto line = fit_line(edge)) {
      lines[side] = *line;
      fitted[side] = true;
    }
  }
  Quad out = quad;
  for (int i = 0; i < 4; ++i) {
    const int before = (i + 3) % 4;
    if (!fitted[before] || !fitted[i]) continue;
    const Vec3 x = lines[before].cross(lines[i]);
    if (std::abs(x.z()) < 1e-12) continue;
    const Vec2 corner = x.hnormalized();
    const double reach = 0.2 * std::min((quad.corners[i] - quad.corners[before]).norm(),
                                        (quad.corners[(i + 1) % 4] - quad.corners[i]).norm());
    if ((corner - quad.corners[i]).norm() <= std::max(3.0, reach)) out.corners[i] = corner;
  }
  return out;
}

}  // namespace detail

/// Convex 4-gons traced from the outer borders of 8-connected dark regions.
/// Quads nested inside a larger quad are dropped.
inline std::vector<Quad> extract_quads(const BinaryMask& mask, const QuadParams& params = {}) {
  const int w = mask.width;
  const int h = mask.height;
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  auto idx = [w](int x, int y) { return static_cast<std::size_t>(y) * w + x; };

  std::vector<Quad> quads;
  std::vector<detail::Pixel> stack;
  int next_label = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y) || label[idx(x, y)] >= 0) continue;
      const int lab = next_label++;
      int min_x = x, max_x = x, min_y = y, max_y = y;
      std::size_t count = 0;
      stack.assign(1, {x, y});
      label[idx(x, y)] = lab;
      while (!stack.empty()) {
        const auto p = stack.back();
        stack.pop_back();
        ++count;
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
        for (const auto& n : detail::kNeighbors) {
          const int nx = p.x + n.x;
          const int ny = p.y + n.y;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          if (!mask.at(nx, ny) || label[idx(nx, ny)] >= 0) continue;
          label[idx(nx, ny)] = lab;
          stack.push_back({nx, ny});
        }
      }
      const double box_area = static_cast<double>(max_x - min_x + 1) * (max_y - min_y + 1);
      if (box_area < params.min_area) continue;

      auto inside = [&](int px, int py) {
        return px >= 0 && py >= 0 && px < w && py < h && label[idx(px, py)] == lab;
      };
      const auto border = detail::trace_outer_border({x, y}, inside, 4 * count + 16);
      if (border.size() < 8) continue;
      std::vector<Vec2> pts;
      pts.reserve(border.size());
      double perimeter = 0.0;
      for (std::size_t i = 0; i < border.size(); ++i) {
        pts.emplace_back(border[i].x, border[i].y);
        const auto& nb = border[(i + 1) % border.size()];
        perimeter += std::hypot(nb.x - border[i].x, nb.y - border[i].y);
      }
      const auto vertices = detail::simplify_closed(pts, params.approx_fraction * perimeter);
      if (vertices.size() != 4) continue;
      Quad q = canonical_quad(
          {pts[vertices[0]], pts[vertices[1]], pts[vertices[2]], pts[vertices[3]]});
      if (!q.convex() || q.area() < params.min_area) continue;
      if (const auto fitted = detail::corners_from_contour(pts, vertices)) {
        const Quad f = canonical_quad(*fitted);
        double moved = 0.0;
        for (int i = 0; i < 4; ++i) moved = std::max(moved, (f.corners[i] - q.corners[i]).norm());
        if (f.convex() && moved < 0.25 * std::sqrt(q.area())) q = f;
      }

      auto darkness = [&](int px, int py) { return mask.at(px, py) ? 1.0 : 0.0; };
      q = canonical_quad(detail::fit_quad_edges(q, darkness, w, h, params.edge_probe, 0.5).corners);
      if (!q.convex() || q.area() < params.min_area) continue;
      quads.push_back(q);
    }
  }

  std::vector<Quad> out;
  for (std::size_t i = 0; i < quads.size(); ++i) {
    bool nested = false;
    for (std::size_t j = 0; j < quads.size() && !nested; ++j) {
      nested = j != i && quads[j].area() > quads[i].area() && quads[j].contains(quads[i].center());
    }
    if (!nested) out.push_back(quads[i]);
  }
  return out;
}

/// Re-fits quad edges on the gray image (dark inside).
inline Quad refine_quad(const GrayFrame& gray, const Quad& quad, double probe = 2.0) {
  auto darkness = [&](int x, int y) { return 255.0 - gray.at(x, y); };
  return canonical_quad(
      detail::fit_quad_edges(quad, darkness, gray.width, gray.height, probe, 20.0).corners);
}

// ---------------------------------------------------------------------------
// Decoding

struct DetectedMarker {
  int id = -1;
  std::array<Vec2, 4> corners;  // marker-frame TL, TR, BR, BL in image pixels
  int rotation_applied = 0;     // quad corner shift that aligned the code
  int hamming = 0;
  double marker_size = 0.0;     // meters, filled in by the caller from config
};

enum class NoMatchReason { kLowContrast, kBorder, kNoCode, kTie };

struct NoMatch {
  NoMatchReason reason;
};

using DecodeResult = std::variant<DetectedMarker, NoMatch>;

namespace detail {

inline int otsu_threshold(const std::array<int, 256>& hist) {
  long long total = 0;
  double sum = 0.0;
  for (int i = 0; i < 256; ++i) {
    total += hist[i];
    sum += static_cast<double>(i) * hist[i];
  }
  double sum_b = 0.0;
  long long w_b = 0;
  double best = -1.0;
  int threshold = 127;
  for (int t = 0; t < 256; ++t) {
    w_b += hist[t];
    if (w_b == 0) continue;
    const long long w_f = total - w_b;
    if (w_f == 0) break;
    sum_b += static_cast<double>(t) * hist[t];
    const double m_b = sum_b / w_b;
    const double m_f = (sum - sum_b) / w_f;
    const double between = static_cast<double>(w_b) * w_f * (m_b - m_f) * (m_b - m_f);
    if (between > best) {
      best = between;
      threshold = t;
    }
  }
  return threshold;
}

}  // namespace detail

inline constexpr int kCellSamplesPerAxis = 5;
inline constexpr double kMinCellContrast = 30.0;

/// Unwarps the quad onto an (n+2)^2 cell grid, reads each cell by majority over
/// its central 50%, checks the black border and matches the inner bits against
/// every code under the four corner shifts.
inline DecodeResult decode(const GrayFrame& gray, const Quad& quad, const MarkerDictionary& dict) {
  const int n = dict.grid_n;
  const int cells = n + 2;
  const std::array<Vec2, 4> grid{Vec2(0, 0), Vec2(cells, 0), Vec2(cells, cells), Vec2(0, cells)};
  Homography to_image;
  try {
    to_image = estimate_homography(std::span<const Vec2>(grid), std::span<const Vec2>(quad.corners));
  } catch (const Error&) {
    return NoMatch{NoMatchReason::kLowContrast};
  }

  auto value = [&](int x, int y) { return static_cast<double>(gray.at(x, y)); };
  std::vector<std::array<std::uint8_t, kCellSamplesPerAxis * kCellSamplesPerAxis>> samples(
      static_cast<std::size_t>(cells) * cells);
  std::array<int, 256> hist{};
  for (int r = 0; r < cells; ++r) {
    for (int c = 0; c < cells; ++c) {
      auto& cell = samples[static_cast<std::size_t>(r) * cells + c];
      for (int i = 0; i < kCellSamplesPerAxis; ++i) {
        for (int j = 0; j < kCellSamplesPerAxis; ++j) {
          const double gx = c + 0.25 + 0.5 * (j + 0.5) / kCellSamplesPerAxis;
          const double gy = r + 0.25 + 0.5 * (i + 0.5) / kCellSamplesPerAxis;
          const Vec2 p = to_image.apply({gx, gy});
          const double v = detail::sample_bilinear(value, gray.width, gray.height, p.x(), p.y());
          const auto byte = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
          cell[i * kCellSamplesPerAxis + j] = byte;
          ++hist[byte];
        }
      }
    }
  }
  const int threshold = detail::otsu_threshold(hist);
  double dark_sum = 0.0, light_sum = 0.0;
  long dark_n = 0, light_n = 0;
  for (int v = 0; v < 256; ++v) {
    if (v <= threshold) {
      dark_sum += static_cast<double>(v) * hist[v];
      dark_n += hist[v];
    } else {
      light_sum += static_cast<double>(v) * hist[v];
      light_n += hist[v];
    }
  }
  if (dark_n == 0 || light_n == 0 || light_sum / light_n - dark_sum / dark_n < kMinCellContrast) {
    return NoMatch{NoMatchReason::kLowContrast};
  }

  std::vector<bool> white(static_cast<std::size_t>(cells) * cells);
  for (std::size_t k = 0; k < white.size(); ++k) {
    int votes = 0;
    for (auto s : samples[k]) votes += s > threshold ? 1 : 0;
    white[k] = 2 * votes > kCellSamplesPerAxis * kCellSamplesPerAxis;
  }
  auto cell_white = [&](int r, int c) { return white[static_cast<std::size_t>(r) * cells + c]; };
  for (int i = 0; i < cells; ++i) {
    if (cell_white(0, i) || cell_white(cells - 1, i) || cell_white(i, 0) || cell_white(i, cells - 1)) {
      return NoMatch{NoMatchReason::kBorder};
    }
  }

  // Shifting the quad start by one corner reads the grid as g'(r, c) = g(c, N-1-r).
  std::array<std::uint64_t, 4> observed{};
  for (int s = 0; s < 4; ++s) {
    std::uint64_t word = 0;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        int rr = r, cc = c;
        for (int k = 0; k < s; ++k) {
          const int nr = cc;
          const int nc = n - 1 - rr;
          rr = nr;
          cc = nc;
        }
        if (cell_white(rr + 1, cc + 1)) word |= std::uint64_t{1} << (r * n + c);
      }
    }
    observed[s] = word;
  }

  int best_dist = std::numeric_limits<int>::max();
  int best_id = -1;
  int best_shift = 0;
  bool tie = false;
  for (std::size_t id = 0; id < dict.codes.size(); ++id) {
    for (int s = 0; s < 4; ++s) {
      const int d = hamming(observed[s], dict.codes[id]);
      if (d < best_dist) {
        best_dist = d;
        best_id = static_cast<int>(id);
        best_shift = s;
        tie = false;
      } else if (d == best_dist && static_cast<int>(id) != best_id) {
        tie = true;
      }
    }
  }
  if (best_dist > dict.max_correction()) return NoMatch{NoMatchReason::kNoCode};
  if (tie) return NoMatch{NoMatchReason::kTie};

  DetectedMarker m;
  m.id = best_id;
  m.rotation_applied = best_shift;
  m.hamming = best_dist;
  for (int i = 0; i < 4; ++i) m.corners[i] = quad.corners[(best_shift + i) % 4];
  return m;
}

struct BinaryDetectorParams {
  int window = 15;
  double offset = 7.0;
  QuadParams quad;
};

/// Binarize, extract quads, refine edges on the gray image and decode.
inline std::vector<DetectedMarker> detect_markers(const GrayFrame& gray, const MarkerDictionary& dict,
                                                  const BinaryDetectorParams& params = {}) {
  std::vector<DetectedMarker> out;
  const BinaryMask mask = binarize_adaptive(gray, params.window, params.offset);
  for (const Quad& q : extract_quads(mask, params.quad)) {
    const Quad refined = refine_quad(gray, q, params.quad.edge_probe);
    const DecodeResult r = decode(gray, refined.convex() ? refined : q, dict);
    if (const auto* m = std::get_if<DetectedMarker>(&r)) out.push_back(*m);
  }
  return out;
}

}  // namespace fidtrack
