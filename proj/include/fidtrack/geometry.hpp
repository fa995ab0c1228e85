#pragma once

// Camera model, rotation representations and point projection.
//
// Conventions: camera frame is x right, y down, z forward along the optical
// axis. A marker's model plane is z = 0 in its own frame. Pixel (u, v) has its
// center at integer coordinates.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "fidtrack/errors.hpp"

namespace fidtrack {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 && cx < width &&
           cy >= 0.0 && cy < height;
  }

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  Vec2 to_pixel(const Vec2& normalized) const {
    return {fx * normalized.x() + cx, fy * normalized.y() + cy};
  }
  Vec2 to_normalized(const Vec2& pixel) const {
    return {(pixel.x() - cx) / fx, (pixel.y() - cy) / fy};
  }
};

/// Five-coefficient Brown-Conrady model. All zero means ideal pinhole.
struct DistortionCoeffs {
  double k1 = 0.0;
  double k2 = 0.0;
  double k3 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;

  bool is_zero() const { return k1 == 0.0 && k2 == 0.0 && k3 == 0.0 && p1 == 0.0 && p2 == 0.0; }
  bool finite() const {
    return std::isfinite(k1) && std::isfinite(k2) && std::isfinite(k3) && std::isfinite(p1) &&
           std::isfinite(p2);
  }
};

/// Marker-to-camera rigid transform.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 transform(const Vec3& p) const { return rotation * p + translation; }
};

/// Rotation vector: direction is the axis, norm is the angle in radians.
struct AxisAngle {
  Vec3 vector = Vec3::Zero();

  double angle() const { return vector.norm(); }
};

/// Unit quaternion, canonical sign w >= 0.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
};

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Distortion

/// Applies distortion to a normalized image point (x/z, y/z).
inline Vec2 distort_normalized(const Vec2& p, const DistortionCoeffs& d) {
  const double x = p.x();
  const double y = p.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
  return {x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x),
          y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y};
}

/// d(distorted)/d(normalized), row-major 2x2.
inline Eigen::Matrix2d distortion_jacobian(const Vec2& p, const DistortionCoeffs& d) {
  const double x = p.x();
  const double y = p.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
  const double dradial_dr2 = d.k1 + r2 * (2.0 * d.k2 + 3.0 * r2 * d.k3);
  Eigen::Matrix2d j;
  j(0, 0) = radial + x * dradial_dr2 * 2.0 * x + 2.0 * d.p1 * y + d.p2 * 6.0 * x;
  j(0, 1) = x * dradial_dr2 * 2.0 * y + 2.0 * d.p1 * x + d.p2 * 2.0 * y;
  j(1, 0) = y * dradial_dr2 * 2.0 * x + d.p1 * 2.0 * x + 2.0 * d.p2 * y;
  j(1, 1) = radial + y * dradial_dr2 * 2.0 * y + d.p1 * 6.0 * y + 2.0 * d.p2 * x;
  return j;
}

/// Inverts distort_normalized by Newton iteration.
inline Vec2 undistort_normalized(const Vec2& distorted, const DistortionCoeffs& d) {
  if (d.is_zero()) return distorted;
  Vec2 p = distorted;
  for (int iter = 0; iter < 50; ++iter) {
    const Vec2 residual = distort_normalized(p, d) - distorted;
    if (residual.norm() < 1e-15) break;
    const Vec2 step = distortion_jacobian(p, d).lu().solve(residual);
    p -= step;
    if (step.norm() < 1e-16) break;
  }
  return p;
}

inline Vec2 undistort_pixel(const Vec2& pixel, const CameraIntrinsics& k,
                            const DistortionCoeffs& d) {
  return k.to_pixel(undistort_normalized(k.to_normalized(pixel), d));
}

// ---------------------------------------------------------------------------
// Projection

inline constexpr double kMinDepth = 1e-9;

inline Vec2 project_camera_point(const Vec3& pc, const CameraIntrinsics& k,
                                 const DistortionCoeffs& d) {
  if (!(pc.z() > kMinDepth)) {
    throw Error(ErrorCode::kPointBehindCamera, "projected point has z <= 1e-9");
  }
  return k.to_pixel(distort_normalized({pc.x() / pc.z(), pc.y() / pc.z()}, d));
}

inline Vec2 project_point(const Pose& pose, const Vec3& model_point, const CameraIntrinsics& k,
                          const DistortionCoeffs& d = {}) {
  return project_camera_point(pose.transform(model_point), k, d);
}

// ---------------------------------------------------------------------------
// Rotations

inline Mat3 axis_angle_to_matrix(const AxisAngle& aa) {
  const double theta = aa.angle();
  if (theta < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(theta, aa.vector / theta).toRotationMatrix();
}

/// Maps an arbitrary rotation vector to the canonical one for the same rotation:
/// angle in [0, pi], and at exactly pi the first non-zero axis component positive.
inline AxisAngle canonical_axis_angle(const AxisAngle& aa) {
  constexpr double kPi = std::numbers::pi;
  double theta = aa.angle();
  if (theta < 1e-300) return {};
  Vec3 axis = aa.vector / theta;
  theta = std::fmod(theta, 2.0 * kPi);
  if (theta > kPi) {
    theta = 2.0 * kPi - theta;
    axis = -axis;
  }
  if (std::abs(theta - kPi) < 1e-12) {
    for (int i = 0; i < 3; ++i) {
      if (std::abs(axis[i]) > 1e-12) {
        if (axis[i] < 0.0) axis = -axis;
        break;
      }
    }
  }
  return {axis * theta};
}

inline bool is_rotation(const Mat3& r, double tol) {
  return ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol) &&
         std::abs(r.determinant() - 1.0) <= tol;
}

inline Quaternion matrix_to_quaternion(const Mat3& r) {
  if (!r.allFinite() || !is_rotation(r, 1e-6)) {
    throw Error(ErrorCode::kNonOrthonormal, "rotation matrix is not orthonormal within 1e-6");
  }
  Eigen::Quaterniond q(r);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return {q.w(), q.x(), q.y(), q.z()};
}

inline Mat3 quaternion_to_matrix(const Quaternion& q) {
  return Eigen::Quaterniond(q.w, q.x, q.y, q.z).normalized().toRotationMatrix();
}

inline AxisAngle matrix_to_axis_angle(const Mat3& r) {
  const Quaternion q = matrix_to_quaternion(r);
  const Vec3 v(q.x, q.y, q.z);
  const double n = v.norm();
  if (n < 1e-300) return {};
  return canonical_axis_angle({v * (2.0 * std::atan2(n, q.w) / n)});
}

/// Closest rotation in Frobenius norm.
inline Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 fix = Mat3::Identity();
  fix(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * fix * svd.matrixV().transpose();
}

/// Geodesic angle between two rotations, radians.
inline double rotation_distance(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) * 0.5, -1.0, 1.0);
  // acos is ill-conditioned near 0; the axis-angle route keeps precision there.
  if (c > 0.99) return matrix_to_axis_angle(nearest_rotation(a.transpose() * b)).angle();
  return std::acos(c);
}

/// Smallest rotation taking unit vector `from` onto unit vector `to`.
inline Mat3 rotation_between(const Vec3& from, const Vec3& to) {
  return Eigen::Quaterniond::FromTwoVectors(from, to).toRotationMatrix();
}

}  // namespace fidtrack
