#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <limits>
#include <span>
#include <stdexcept>

namespace gcf {

using Vec2d = Eigen::Vector2d;
using Vec3d = Eigen::Vector3d;
using Vec3f = Eigen::Vector3f;
using Vec6d = Eigen::Matrix<double, 6, 1>;
using Mat3d = Eigen::Matrix3d;
using Mat4d = Eigen::Matrix4d;

class InvalidProjection : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class Underdetermined : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Rigid camera transform p -> R p + t. Maps camera space to world space when
// used as a camera pose.
struct RigidTransform {
  Mat3d rotation = Mat3d::Identity();
  Vec3d translation = Vec3d::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_matrix(const Mat4d& m);

  Vec3d operator*(const Vec3d& p) const { return rotation * p + translation; }
  // Composition: (a * b)(p) = a(b(p)).
  RigidTransform operator*(const RigidTransform& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }
  RigidTransform inverse() const {
    const Mat3d rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }
  Mat4d matrix() const;
  Vec3d view_direction() const { return rotation.col(2); }
};

// Largest absolute elementwise difference between the 4x4 matrices.
double max_abs_difference(const RigidTransform& a, const RigidTransform& b);

// Twist coordinates of se(3): omega are the rotation-generator coefficients,
// v the translational part.
struct Twist {
  Vec3d omega = Vec3d::Zero();
  Vec3d v = Vec3d::Zero();

  Vec6d as_vector() const {
    Vec6d x;
    x << omega, v;
    return x;
  }
  static Twist from_vector(const Eigen::Ref<const Vec6d>& x) {
    return {x.head<3>(), x.tail<3>()};
  }
};

Mat3d skew(const Vec3d& w);

Mat3d exp_so3(const Vec3d& omega);
Vec3d log_so3(const Mat3d& rotation);

RigidTransform exp_twist(const Twist& xi);
// Inverse of exp_twist for rotation angles below pi.
Twist log_transform(const RigidTransform& t);

struct Intrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 319.5;
  double cy = 239.5;
  int width = 640;
  int height = 480;

  // Throws InvalidProjection when p.z() <= 0.
  Vec2d project(const Vec3d& p) const;
  Vec2d project_unchecked(const Vec3d& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }
  Vec3d unproject(const Vec2d& pixel, double depth) const {
    return {(pixel.x() - cx) / fx * depth, (pixel.y() - cy) / fy * depth, depth};
  }
  bool contains(const Vec2d& pixel) const {
    return pixel.x() >= -0.5 && pixel.y() >= -0.5 && pixel.x() < width - 0.5 &&
           pixel.y() < height - 0.5;
  }
  // Intrinsics of an image downsampled by integer block averaging.
  Intrinsics downsampled(int factor_x, int factor_y) const;
};

struct KabschResult {
  RigidTransform transform;
  double rmsd = 0.0;
  double max_residual = 0.0;
};

// Least-squares rigid transform T with T(P_k) ~ Q_k. Never returns a
// reflection. Throws Underdetermined for fewer than three pairs.
KabschResult kabsch(std::span<const Vec3d> p, std::span<const Vec3d> q);

struct StabilityReport {
  double cond_cov_p = 0.0;
  double cond_cov_q = 0.0;
  double cond_cross_cov = 0.0;
  bool stable = false;
};

inline constexpr double kDefaultConditionLimit = 100.0;

// Condition numbers of the covariance of P, of Q and of their
// cross-covariance. The number is the ratio of the largest to the second
// largest singular value, so coplanar configurations remain admissible while
// collinear or strongly elongated ones are flagged. Zero denominators give
// +infinity.
StabilityReport condition_analysis(std::span<const Vec3d> p, std::span<const Vec3d> q,
                                   double limit = kDefaultConditionLimit);

// Singular values of a 3x3 matrix in descending order.
Vec3d singular_values(const Mat3d& m);

// Rotation angle in radians.
double rotation_angle(const Mat3d& r);

}  // namespace gcf
