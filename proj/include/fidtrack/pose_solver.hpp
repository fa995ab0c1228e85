#pragma once

// Planar pose from four ordered corners of a square: homography, the two
// planar candidates, Levenberg-damped Gauss-Newton refinement and selection.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "fidtrack/errors.hpp"
#include "fidtrack/geometry.hpp"
#include "fidtrack/homography.hpp"

namespace fidtrack {

/// Ordered TL, TR, BR, BL.
struct Correspondences {
  std::array<Vec3, 4> model_points;
  std::array<Vec2, 4> image_points;

  static std::array<Vec3, 4> square_model(double size) {
    const double h = size / 2.0;
    return {Vec3(-h, h, 0.0), Vec3(h, h, 0.0), Vec3(h, -h, 0.0), Vec3(-h, -h, 0.0)};
  }
  static Correspondences square(double size, const std::array<Vec2, 4>& image) {
    return {square_model(size), image};
  }
};

struct PoseCandidate {
  Pose pose;
  double rms_error = 0.0;  // pixels
};

struct PoseResult {
  PoseCandidate best;
  bool ambiguous = false;
  std::optional<PoseCandidate> alternate;
};

inline double reprojection_rms(const Pose& pose, const Correspondences& c,
                               const CameraIntrinsics& k, const DistortionCoeffs& d) {
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    sum += (project_point(pose, c.model_points[i], k, d) - c.image_points[i]).squaredNorm();
  }
  return std::sqrt(sum / 4.0);
}

/// Homography from the model plane (x, y in meters) to image pixels.
inline Homography estimate_homography(const Correspondences& c) {
  std::array<Vec2, 4> model_xy;
  for (std::size_t i = 0; i < 4; ++i) model_xy[i] = c.model_points[i].head<2>();
  return estimate_homography(std::span<const Vec2>(model_xy), std::span<const Vec2>(c.image_points));
}

namespace detail {

/// Second planar solution: the marker normal mirrored about the line of sight
/// through the marker origin, keeping the origin fixed.
inline std::optional<Mat3> mirrored_rotation(const Pose& pose) {
  const Vec3 view = pose.translation.normalized();
  const Vec3 normal = pose.rotation.col(2);
  if (normal.cross(view).norm() < 1e-12) return std::nullopt;
  const Vec3 mirrored = 2.0 * normal.dot(view) * view - normal;
  return rotation_between(normal, mirrored.normalized()) * pose.rotation;
}

}  // namespace detail

/// Candidate poses from a plane-to-image homography, lowest rms first.
/// Candidates with translation z <= 0 are dropped.
inline std::vector<PoseCandidate> poses_from_homography(const Homography& h,
                                                        const CameraIntrinsics& k,
                                                        const Correspondences& c,
                                                        const DistortionCoeffs& d = {}) {
  if (!h.matrix.allFinite() || std::abs(h.matrix.determinant() / std::pow(h.matrix.norm(), 3)) <= 1e-12) {
    throw Error(ErrorCode::kDegenerateConfiguration, "homography is rank deficient");
  }
  Mat3 m = k.matrix().inverse() * h.matrix;
  const double scale = 0.5 * (m.col(0).norm() + m.col(1).norm());
  m /= scale;
  if (m(2, 2) < 0.0) m = -m;

  Mat3 basis;
  basis.col(0) = m.col(0);
  basis.col(1) = m.col(1);
  basis.col(2) = m.col(0).cross(m.col(1));
  Pose primary{nearest_rotation(basis), m.col(2)};

  std::vector<Pose> poses{primary};
  if (auto mirrored = detail::mirrored_rotation(primary)) {
    poses.push_back({*mirrored, primary.translation});
  }

  std::vector<PoseCandidate> out;
  for (const auto& p : poses) {
    if (!(p.translation.z() > 0.0)) continue;
    try {
      out.push_back({p, reprojection_rms(p, c, k, d)});
    } catch (const Error&) {
      // a model corner behind the camera; not a usable candidate
    }
  }
  if (out.empty()) throw Error(ErrorCode::kNoValidCandidate, "no candidate in front of camera");
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.rms_error < b.rms_error; });
  return out;
}

using Jacobian26 = Eigen::Matrix<double, 2, 6>;

/// d(pixel)/d(delta) for the update R <- exp([w]x) R, t <- t + dt with
/// delta = (w, dt). Evaluated at delta = 0.
inline Jacobian26 reprojection_jacobian(const Pose& pose, const Vec3& model_point,
                                        const CameraIntrinsics& k, const DistortionCoeffs& d) {
  const Vec3 rotated = pose.rotation * model_point;
  const Vec3 pc = rotated + pose.translation;
  if (!(pc.z() > kMinDepth)) {
    throw Error(ErrorCode::kPointBehindCamera, "projected point has z <= 1e-9");
  }
  const double iz = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> dn_dpc;
  dn_dpc << iz, 0.0, -pc.x() * iz * iz, 0.0, iz, -pc.y() * iz * iz;
  const Vec2 normalized(pc.x() * iz, pc.y() * iz);
  Eigen::Matrix2d dpix_dd = Eigen::Matrix2d::Zero();
  dpix_dd(0, 0) = k.fx;
  dpix_dd(1, 1) = k.fy;
  const Eigen::Matrix<double, 2, 3> dpix_dpc = dpix_dd * distortion_jacobian(normalized, d) * dn_dpc;

  Jacobian26 j;
  j.leftCols<3>() = -dpix_dpc * skew(rotated);
  j.rightCols<3>() = dpix_dpc;
  return j;
}

inline Pose apply_increment(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta) {
  return {axis_angle_to_matrix({delta.head<3>()}) * pose.rotation,
          pose.translation + delta.tail<3>()};
}

struct RefineSettings {
  int max_iterations = 50;
  double min_step = 1e-10;
  int max_rejected_steps = 5;
};

/// Minimizes squared reprojection error over rotation increment and
/// translation. The returned rms never exceeds the initial rms.
inline PoseCandidate refine_pose(const PoseCandidate& initial, const Correspondences& c,
                                 const CameraIntrinsics& k, const DistortionCoeffs& d,
                                 const RefineSettings& settings = {}) {
  if (!(initial.pose.translation.z() > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "initial pose is behind the camera");
  }
  using Vec6 = Eigen::Matrix<double, 6, 1>;
  using Mat6 = Eigen::Matrix<double, 6, 6>;

  auto cost_of = [&](const Pose& p) -> std::optional<double> {
    double sum = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      const Vec3 pc = p.transform(c.model_points[i]);
      if (!(pc.z() > kMinDepth)) return std::nullopt;
      sum += (project_camera_point(pc, k, d) - c.image_points[i]).squaredNorm();
    }
    return sum;
  };

  Pose pose = initial.pose;
  auto current = cost_of(pose);
  if (!current) throw Error(ErrorCode::kPointBehindCamera, "initial pose projects behind camera");
  if (!std::isfinite(*current)) throw Error(ErrorCode::kDivergence, "reprojection error is not finite");
  double cost = *current;
  double lambda = 1e-3;
  int rejected = 0;

  for (int iter = 0; iter < settings.max_iterations && cost > 0.0; ++iter) {
    Mat6 jtj = Mat6::Zero();
    Vec6 jtr = Vec6::Zero();
    for (std::size_t i = 0; i < 4; ++i) {
      const Jacobian26 j = reprojection_jacobian(pose, c.model_points[i], k, d);
      const Vec2 r = project_point(pose, c.model_points[i], k, d) - c.image_points[i];
      jtj += j.transpose() * j;
      jtr += j.transpose() * r;
    }

    bool accepted = false;
    while (!accepted) {
      Mat6 damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Vec6 step = -damped.ldlt().solve(jtr);
      if (!step.allFinite() || step.norm() < settings.min_step) {
        return {pose, std::sqrt(cost / 4.0)};
      }
      const Pose trial = apply_increment(pose, step);
      const auto trial_cost = cost_of(trial);
      if (trial_cost && *trial_cost < cost) {
        pose = trial;
        cost = *trial_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        rejected = 0;
        accepted = true;
      } else {
        lambda *= 10.0;
        // No descent left at any damping: a local minimum.
        if (++rejected >= settings.max_rejected_steps) return {pose, std::sqrt(cost / 4.0)};
      }
    }
  }
  return {pose, std::sqrt(cost / 4.0)};
}

inline constexpr double kAmbiguityRatio = 2.0;

/// Full planar solve for a square of edge `marker_size` meters whose image
/// corners are given as TL, TR, BR, BL pixels.
inline PoseResult solve_planar_pose(const std::array<Vec2, 4>& image_points, double marker_size,
                                    const CameraIntrinsics& k, const DistortionCoeffs& d = {}) {
  if (!(marker_size > 0.0)) throw Error(ErrorCode::kInvalidArgument, "marker size must be > 0");
  const Correspondences observed = Correspondences::square(marker_size, image_points);

  Correspondences ideal = observed;
  for (auto& p : ideal.image_points) p = undistort_pixel(p, k, d);

  const Homography h = estimate_homography(ideal);
  std::vector<PoseCandidate> candidates = poses_from_homography(h, k, ideal);

  std::vector<PoseCandidate> refined;
  for (const auto& cand : candidates) {
    PoseCandidate start{cand.pose, reprojection_rms(cand.pose, observed, k, d)};
    try {
      refined.push_back(refine_pose(start, observed, k, d));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDivergence && e.code() != ErrorCode::kPointBehindCamera) throw;
      refined.push_back(start);
    }
  }
  std::erase_if(refined, [](const auto& c) { return !(c.pose.translation.z() > 0.0); });
  if (refined.empty()) throw Error(ErrorCode::kNoValidCandidate, "no candidate in front of camera");
  std::stable_sort(refined.begin(), refined.end(),
                   [](const auto& a, const auto& b) { return a.rms_error < b.rms_error; });

  // Both starts may settle in the same minimum; that pair still counts as two
  // survivors (ratio 1), which is the near-frontal case where the normal is
  // poorly constrained.
  PoseResult result;
  result.best = refined.front();
  if (refined.size() > 1) {
    result.alternate = refined[1];
    const double best = result.best.rms_error;
    const double alt = result.alternate->rms_error;
    result.ambiguous = best > 0.0 ? alt / best < kAmbiguityRatio : alt == 0.0;
  }
  return result;
}

}  // namespace fidtrack
