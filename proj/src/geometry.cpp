#include "gcf/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace gcf {

RigidTransform RigidTransform::from_matrix(const Mat4d& m) {
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

Mat4d RigidTransform::matrix() const {
  Mat4d m = Mat4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

double max_abs_difference(const RigidTransform& a, const RigidTransform& b) {
  return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

Mat3d skew(const Vec3d& w) {
  Mat3d s;
  s << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return s;
}

namespace {

// A = sin(t)/t, B = (1-cos t)/t^2, C = (t - sin t)/t^3 with series expansions
// near zero.
struct RodriguesCoefficients {
  double a, b, c;
};

RodriguesCoefficients rodrigues(double theta) {
  const double t2 = theta * theta;
  if (theta < 1e-4) {
    return {1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0};
  }
  const double s = std::sin(theta);
  const double half = std::sin(0.5 * theta);
  // (theta - sin) / theta^3 cancels badly for small angles; its series is
  // exact to double precision below 1e-2.
  const double c = theta < 1e-2 ? 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0
                                 : (theta - s) / (t2 * theta);
  return {s / theta, 2.0 * half * half / t2, c};
}

}  // namespace

Mat3d exp_so3(const Vec3d& omega) {
  const double theta = omega.norm();
  const auto k = rodrigues(theta);
  const Mat3d w = skew(omega);
  return Mat3d::Identity() + k.a * w + k.b * w * w;
}

Vec3d log_so3(const Mat3d& r) {
  const Vec3d axis_sin(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double sin_theta = 0.5 * axis_sin.norm();
  const double cos_theta = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);
  if (theta < 1e-4) {
    // theta / sin(theta) ~ 1 + theta^2 / 6
    return 0.5 * (1.0 + theta * theta / 6.0) * axis_sin;
  }
  if (theta < M_PI - 1e-3) return 0.5 * theta / std::sin(theta) * axis_sin;
  // Near pi the skew part vanishes; recover the axis from the symmetric part
  // R = cos I + (1 - cos) a a^T + sin [a]x.
  const Mat3d aat = (0.5 * (r + r.transpose()) - cos_theta * Mat3d::Identity()) / (1.0 - cos_theta);
  int col = 0;
  aat.diagonal().maxCoeff(&col);
  Vec3d axis = aat.col(col) / std::sqrt(std::max(aat(col, col), 1e-300));
  if (axis.dot(axis_sin) < 0.0) axis = -axis;
  return theta * axis.normalized();
}

RigidTransform exp_twist(const Twist& xi) {
  const double theta = xi.omega.norm();
  const auto k = rodrigues(theta);
  const Mat3d w = skew(xi.omega);
  const Mat3d w2 = w * w;
  const Mat3d rot = Mat3d::Identity() + k.a * w + k.b * w2;
  const Mat3d v = Mat3d::Identity() + k.b * w + k.c * w2;
  return {rot, v * xi.v};
}

Twist log_transform(const RigidTransform& t) {
  const Vec3d omega = log_so3(t.rotation);
  const double theta = omega.norm();
  const Mat3d w = skew(omega);
  // V^{-1} = I - W/2 + (1/theta^2)(1 - A/(2B)) W^2
  // d = (1 - (theta / 2) cot(theta / 2)) / theta^2, by series where the
  // closed form cancels.
  const double t2 = theta * theta;
  const double d = theta < 1e-2 ? 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
                                : (1.0 - 0.5 * theta / std::tan(0.5 * theta)) / t2;
  const Mat3d v_inv = Mat3d::Identity() - 0.5 * w + d * w * w;
  return {omega, v_inv * t.translation};
}

double rotation_angle(const Mat3d& r) {
  return log_so3(r).norm();
}

Vec2d Intrinsics::project(const Vec3d& p) const {
  if (!(p.z() > 0.0)) throw InvalidProjection("point behind the camera");
  return project_unchecked(p);
}

Intrinsics Intrinsics::downsampled(int factor_x, int factor_y) const {
  Intrinsics k;
  k.fx = fx / factor_x;
  k.fy = fy / factor_y;
  // Pixel centers: low-res pixel x covers full-res [fx*x, fx*x + fx) whose
  // center is fx*x + (fx-1)/2.
  k.cx = (cx - 0.5 * (factor_x - 1)) / factor_x;
  k.cy = (cy - 0.5 * (factor_y - 1)) / factor_y;
  k.width = width / factor_x;
  k.height = height / factor_y;
  return k;
}

Vec3d singular_values(const Mat3d& m) {
  Eigen::JacobiSVD<Mat3d> svd(m);
  return svd.singularValues();
}

KabschResult kabsch(std::span<const Vec3d> p, std::span<const Vec3d> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kabsch: point sets differ in size");
  if (p.size() < 3) throw Underdetermined("kabsch: need at least three correspondences");
  const double n = static_cast<double>(p.size());
  Vec3d mp = Vec3d::Zero(), mq = Vec3d::Zero();
  for (std::size_t k = 0; k < p.size(); ++k) {
    mp += p[k];
    mq += q[k];
  }
  mp /= n;
  mq /= n;
  Mat3d h = Mat3d::Zero();
  for (std::size_t k = 0; k < p.size(); ++k) h += (p[k] - mp) * (q[k] - mq).transpose();

  Eigen::JacobiSVD<Mat3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3d u = svd.matrixU();
  const Mat3d v = svd.matrixV();
  Mat3d d = Mat3d::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;

  KabschResult out;
  out.transform.rotation = v * d * u.transpose();
  out.transform.translation = mq - out.transform.rotation * mp;
  double sq = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double r = (out.transform * p[k] - q[k]).norm();
    sq += r * r;
    out.max_residual = std::max(out.max_residual, r);
  }
  out.rmsd = std::sqrt(sq / n);
  return out;
}

namespace {

double condition_of(const Mat3d& m) {
  const Vec3d s = singular_values(m);
  if (!(s[1] > 0.0)) return std::numeric_limits<double>::infinity();
  return s[0] / s[1];
}

}  // namespace

StabilityReport condition_analysis(std::span<const Vec3d> p, std::span<const Vec3d> q,
                                   double limit) {
  if (p.size() != q.size()) throw std::invalid_argument("condition_analysis: size mismatch");
  if (p.size() < 3) throw Underdetermined("condition_analysis: need at least three points");
  const double n = static_cast<double>(p.size());
  Vec3d mp = Vec3d::Zero(), mq = Vec3d::Zero();
  for (std::size_t k = 0; k < p.size(); ++k) {
    mp += p[k];
    mq += q[k];
  }
  mp /= n;
  mq /= n;
  Mat3d cp = Mat3d::Zero(), cq = Mat3d::Zero(), cx = Mat3d::Zero();
  for (std::size_t k = 0; k < p.size(); ++k) {
    const Vec3d a = p[k] - mp;
    const Vec3d b = q[k] - mq;
    cp += a * a.transpose();
    cq += b * b.transpose();
    cx += a * b.transpose();
  }
  StabilityReport r;
  r.cond_cov_p = condition_of(cp / n);
  r.cond_cov_q = condition_of(cq / n);
  r.cond_cross_cov = condition_of(cx / n);
  r.stable = r.cond_cov_p <= limit && r.cond_cov_q <= limit && r.cond_cross_cov <= limit;
  return r;
}

}  // namespace gcf
