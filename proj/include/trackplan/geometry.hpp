#pragma once

#include <Eigen/Dense>
#include <array>

#include "trackplan/errors.hpp"

// SE(3) algebra and pinhole projection. Conventions used by every module:
//  * Twist6 is rotation-first: [wx wy wz vx vy vz].
//  * Solver updates are right-multiplicative: T <- T * exp_map(delta).
//  * Rotations are stored as matrices and re-orthonormalized by polar
//    projection after every 32 compositions.
namespace trackplan::geom {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Twist6 = Eigen::Matrix<double, 6, 1>;

inline Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return s;
}

// Nearest rotation matrix in the Frobenius sense (polar factor).
Mat3 polar_orthonormalize(const Mat3& m);

// SO(3) exponential (Rodrigues) and logarithm.
Mat3 rotation_exp(const Vec3& w);
Vec3 rotation_log(const Mat3& r);  // throws NearPiRotation within 1e-6 of pi

// Geodesic angle between two rotations, in [0, pi]. Defined everywhere,
// including the cut locus.
double geodesic_angle(const Mat3& a, const Mat3& b);

struct Rotation3 {
  Mat3 m = Mat3::Identity();
  // Compositions absorbed since the last re-orthonormalization.
  int compose_count = 0;

  static Rotation3 identity() { return {}; }
  static Rotation3 from_matrix(const Mat3& m) { return {m, 0}; }
  static Rotation3 about_axis(const Vec3& axis, double angle) {
    return {rotation_exp(axis.normalized() * angle), 0};
  }

  Rotation3 inverse() const { return {m.transpose(), compose_count}; }
  Vec3 operator*(const Vec3& p) const { return m * p; }
  Rotation3 operator*(const Rotation3& o) const;
};

struct RigidTransform {
  Rotation3 rotation;
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_parts(const Mat3& r, const Vec3& t) {
    return {Rotation3::from_matrix(r), t};
  }
};

// compose(a, b) applies b first, then a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);
inline Vec3 apply(const RigidTransform& t, const Vec3& p) {
  return t.rotation.m * p + t.translation;
}

// Rotation by `angle` about the line through `point` with direction `axis`.
RigidTransform rotation_about_point(const Vec3& axis, double angle, const Vec3& point);

RigidTransform exp_map(const Twist6& x);
Twist6 log_map(const RigidTransform& t);  // throws NearPiRotation

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw InvalidConfig("intrinsics: fx, fy must be positive");
    if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
      throw InvalidConfig("intrinsics: principal point outside image");
  }
};

inline Vec2 project(const CameraIntrinsics& k, const Vec3& p) {
  if (!(p.z() > 0)) throw NonPositiveDepth();
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

inline Vec3 backproject(const CameraIntrinsics& k, const Vec2& q, double depth) {
  if (!(depth > 0)) throw NonPositiveDepth();
  return {(q.x() - k.cx) / k.fx * depth, (q.y() - k.cy) / k.fy * depth, depth};
}

inline bool in_frame(const CameraIntrinsics& k, const Vec2& q) {
  return q.x() >= 0 && q.x() < k.width && q.y() >= 0 && q.y() < k.height;
}

// Serialization layout shared with the dataset format: row-major 3x4,
// rotation in the left 3x3 block, translation in the last column.
std::array<double, 12> to_row_major_3x4(const RigidTransform& t);
RigidTransform from_row_major_3x4(const std::array<double, 12>& a);

}  // namespace trackplan::geom
