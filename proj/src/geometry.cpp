#include "trackplan/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace trackplan::geom {

namespace {

constexpr int kRenormEvery = 32;
constexpr double kSmallAngle = 1e-4;   // below this, series expansions are exact to 1e-16
constexpr double kPiMargin = 1e-6;

}  // namespace

Mat3 polar_orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

Mat3 rotation_exp(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 s = skew(w);
  if (theta2 < kSmallAngle * kSmallAngle) {
    // sin(t)/t = 1 - t^2/6, (1-cos t)/t^2 = 1/2 - t^2/24 up to O(t^4).
    const double a = 1.0 - theta2 / 6.0;
    const double b = 0.5 - theta2 / 24.0;
    return Mat3::Identity() + a * s + b * (s * s);
  }
  const double theta = std::sqrt(theta2);
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * s + b * (s * s);
}

Vec3 rotation_log(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(c);
  if (theta > std::numbers::pi - kPiMargin) throw NearPiRotation();
  Vec3 v{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};
  if (theta < kSmallAngle) {
    // v = 2 sin(theta) * axis; theta/(2 sin theta) = 1/2 + theta^2/12 + O(t^4)
    return (0.5 + theta * theta / 12.0) * v;
  }
  return (theta / (2.0 * std::sin(theta))) * v;
}

double geodesic_angle(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

Rotation3 Rotation3::operator*(const Rotation3& o) const {
  Rotation3 out{m * o.m, compose_count + o.compose_count + 1};
  if (out.compose_count >= kRenormEvery) {
    out.m = polar_orthonormalize(out.m);
    out.compose_count = 0;
  }
  return out;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation.m * b.translation + a.translation};
}

RigidTransform invert(const RigidTransform& t) {
  Rotation3 rinv = t.rotation.inverse();
  return {rinv, -(rinv.m * t.translation)};
}

RigidTransform rotation_about_point(const Vec3& axis, double angle, const Vec3& point) {
  const Mat3 r = rotation_exp(axis.normalized() * angle);
  return {Rotation3::from_matrix(r), point - r * point};
}

namespace {

// Left Jacobian of SO(3): exp_map translation = V(w) * v.
Mat3 left_jacobian(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 s = skew(w);
  if (theta2 < kSmallAngle * kSmallAngle) {
    const double a = 0.5 - theta2 / 24.0;
    const double b = 1.0 / 6.0 - theta2 / 120.0;
    return Mat3::Identity() + a * s + b * (s * s);
  }
  const double theta = std::sqrt(theta2);
  const double a = (1.0 - std::cos(theta)) / theta2;
  const double b = (theta - std::sin(theta)) / (theta2 * theta);
  return Mat3::Identity() + a * s + b * (s * s);
}

Mat3 left_jacobian_inverse(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 s = skew(w);
  if (theta2 < kSmallAngle * kSmallAngle) {
    const double b = 1.0 / 12.0 + theta2 / 720.0;
    return Mat3::Identity() - 0.5 * s + b * (s * s);
  }
  const double theta = std::sqrt(theta2);
  const double half = 0.5 * theta;
  const double b = (1.0 - half * std::cos(half) / std::sin(half)) / theta2;
  return Mat3::Identity() - 0.5 * s + b * (s * s);
}

}  // namespace

RigidTransform exp_map(const Twist6& x) {
  const Vec3 w = x.head<3>();
  const Vec3 v = x.tail<3>();
  return {Rotation3::from_matrix(rotation_exp(w)), left_jacobian(w) * v};
}

Twist6 log_map(const RigidTransform& t) {
  const Vec3 w = rotation_log(t.rotation.m);
  Twist6 x;
  x.head<3>() = w;
  x.tail<3>() = left_jacobian_inverse(w) * t.translation;
  return x;
}

std::array<double, 12> to_row_major_3x4(const RigidTransform& t) {
  std::array<double, 12> a{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a[r * 4 + c] = t.rotation.m(r, c);
    a[r * 4 + 3] = t.translation(r);
  }
  return a;
}

RigidTransform from_row_major_3x4(const std::array<double, 12>& a) {
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation.m(r, c) = a[r * 4 + c];
    t.translation(r) = a[r * 4 + 3];
  }
  return t;
}

}  // namespace trackplan::geom
