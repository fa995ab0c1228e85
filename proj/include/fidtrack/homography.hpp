#pragma once

// Normalized DLT homography between two planar point sets.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <vector>

#include "fidtrack/errors.hpp"
#include "fidtrack/geometry.hpp"

namespace fidtrack {

/// 3x3 projective map, scaled to unit Frobenius norm with H(2,2) >= 0.
struct Homography {
  Mat3 matrix = Mat3::Identity() / std::sqrt(3.0);

  Vec2 apply(const Vec2& p) const {
    const Vec3 q = matrix * Vec3(p.x(), p.y(), 1.0);
    return q.hnormalized();
  }
};

namespace detail {

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
inline Mat3 hartley_normalization(std::span<const Vec2> pts) {
  Vec2 centroid = Vec2::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  if (!(mean_dist > 0.0)) {
    throw Error(ErrorCode::kDegenerateConfiguration, "coincident points");
  }
  const double s = std::sqrt(2.0) / mean_dist;
  Mat3 t;
  t << s, 0.0, -s * centroid.x(), 0.0, s, -s * centroid.y(), 0.0, 0.0, 1.0;
  return t;
}

inline bool has_collinear_triple(std::span<const Vec2> pts, double tol) {
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k) {
        const Vec2 a = pts[j] - pts[i];
        const Vec2 b = pts[k] - pts[i];
        if (std::abs(a.x() * b.y() - a.y() * b.x()) < tol) return true;
      }
  return false;
}

inline std::vector<Vec2> transform_all(const Mat3& t, std::span<const Vec2> pts) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back((t * Vec3(p.x(), p.y(), 1.0)).hnormalized());
  return out;
}

}  // namespace detail

inline Homography normalize_homography(const Mat3& m) {
  Homography h;
  h.matrix = m / m.norm();
  if (h.matrix(2, 2) < 0.0) h.matrix = -h.matrix;
  return h;
}

/// Maps `src` onto `dst`. Both sets are Hartley-normalized before the DLT.
/// Four or more correspondences; with four, no three may be collinear.
inline Homography estimate_homography(std::span<const Vec2> src, std::span<const Vec2> dst) {
  if (src.size() != dst.size() || src.size() < 4) {
    throw Error(ErrorCode::kInvalidArgument, "homography needs >= 4 paired points");
  }
  const Mat3 ts = detail::hartley_normalization(src);
  const Mat3 td = detail::hartley_normalization(dst);
  const auto ns = detail::transform_all(ts, src);
  const auto nd = detail::transform_all(td, dst);
  if (detail::has_collinear_triple(ns, 1e-9) || detail::has_collinear_triple(nd, 1e-9)) {
    throw Error(ErrorCode::kDegenerateConfiguration, "three points are collinear");
  }

  const Eigen::Index n = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVector3d p(ns[i].x(), ns[i].y(), 1.0);
    const double u = nd[i].x();
    const double v = nd[i].y();
    a.block<1, 3>(2 * i, 3) = -p;
    a.block<1, 3>(2 * i, 6) = v * p;
    a.block<1, 3>(2 * i + 1, 0) = p;
    a.block<1, 3>(2 * i + 1, 6) = -u * p;
  }
  // Pad to square so the full right singular basis is available for n = 4.
  Eigen::MatrixXd square = Eigen::MatrixXd::Zero(std::max<Eigen::Index>(2 * n, 9), 9);
  square.topRows(2 * n) = a;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(square, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);

  Homography out = normalize_homography(td.inverse() * hn * ts);
  if (!out.matrix.allFinite() || std::abs(out.matrix.determinant()) <= 1e-12) {
    throw Error(ErrorCode::kDegenerateConfiguration, "homography is rank deficient");
  }
  return out;
}

/// Largest |H(src_i) - dst_i|.
inline double max_transfer_error(const Homography& h, std::span<const Vec2> src,
                                 std::span<const Vec2> dst) {
  double worst = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    worst = std::max(worst, (h.apply(src[i]) - dst[i]).norm());
  }
  return worst;
}

}  // namespace fidtrack
