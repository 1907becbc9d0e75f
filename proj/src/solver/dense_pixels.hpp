#pragma once

// Per-pixel dense-term kernels shared by energy evaluation and the
// normal-equation assembly.

#include "gcf/solver.hpp"

#include <algorithm>
#include <cmath>

namespace gcf::detail {

// Pixel (x, y) of frame i carried into frame j, with its nearest-pixel
// partner in j that survived the distance and normal gates.
struct Association {
  Vec3d d;   // camera i
  Vec3d w;   // world
  Vec3d u;   // camera j
  Vec2d uv;  // pixel in j
  int qx = 0, qy = 0;
};

inline bool associate(const CachedFrame& ci, const CachedFrame& cj, const RigidTransform& ti,
                      const RigidTransform& tji, int x, int y, const DenseParams& params, Association& a) {
  if (!ci.valid(x, y)) return false;
  a.d = ci.points(x, y).cast<double>();
  a.w = ti * a.d;
  a.u = tji * a.d;
  if (a.u.z() <= 0.0) return false;
  a.uv = cj.intrinsics.project_unchecked(a.u);
  a.qx = static_cast<int>(std::lround(a.uv.x()));
  a.qy = static_cast<int>(std::lround(a.uv.y()));
  if (!cj.depth.in_bounds(a.qx, a.qy) || !cj.valid(a.qx, a.qy)) return false;
  if (!((a.u - cj.points(a.qx, a.qy).cast<double>()).norm() < params.tau_d)) return false;
  const Vec3d n = tji.rotation * ci.normals(x, y).cast<double>();
  return n.dot(cj.normals(a.qx, a.qy).cast<double>()) > params.tau_n;
}

inline Eigen::Matrix<double, 2, 3> projection_jacobian(const Intrinsics& k, const Vec3d& p) {
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << k.fx * iz, 0.0, -k.fx * p.x() * iz * iz, 0.0, k.fy * iz, -k.fy * p.y() * iz * iz;
  return j;
}

inline bool photo_from(const CachedFrame& ci, const CachedFrame& cj, const RigidTransform& tj, int x, int y,
                const Association& a, bool with_jacobian, PhotoResidual& out) {
  BilinearSample<Vec2d> g;
  if (!sample_bilinear(cj.gradient, a.uv.x(), a.uv.y(), g)) return false;
  out.r = ci.gradient(x, y).cast<double>() - g.value;
  if (with_jacobian) {
    Eigen::Matrix2d dg;
    dg.col(0) = g.d_dx;
    dg.col(1) = g.d_dy;
    const Eigen::Matrix<double, 2, 3> m = -dg * projection_jacobian(cj.intrinsics, a.u) * tj.rotation.transpose();
    Mat36d du_i, du_j;
    du_i.leftCols<3>() = -skew(a.w);
    du_i.rightCols<3>().setIdentity();
    du_j.leftCols<3>() = skew(a.w);
    du_j.rightCols<3>() = -Mat3d::Identity();
    out.j_i = m * du_i;
    out.j_j = m * du_j;
  }
  return true;
}

inline void geo_from(const CachedFrame& ci, const CachedFrame& cj, const RigidTransform& ti, const RigidTransform& tj,
              int x, int y, const Association& a, bool with_jacobian, GeoResidual& out) {
  const Vec3d n = ci.normals(x, y).cast<double>();
  const Vec3d qw = tj * cj.points(a.qx, a.qy).cast<double>();
  const Vec3d s = ti.inverse() * qw;
  out.r = n.dot(a.d - s);
  if (with_jacobian) {
    const Mat3d rit = ti.rotation.transpose();
    const Eigen::Matrix<double, 1, 3> nr = -n.transpose() * rit;
    const Mat3d qx = skew(qw);
    out.j_i.leftCols<3>() = nr * qx;
    out.j_i.rightCols<3>() = -nr;
    out.j_j.leftCols<3>() = -nr * qx;
    out.j_j.rightCols<3>() = nr;
  }
}

// Shared by eval_dense and the normal-equation assembly. Visits every
// unmasked pixel of edge (i, j); photo is null when the gradient sample
// leaves frame j.
template <class Visit>
void for_each_dense_pixel(const CachedFrame& ci, const CachedFrame& cj, const RigidTransform& ti,
                          const RigidTransform& tj, const DenseParams& params, bool with_jacobian,
                          Visit&& visit) {
  const RigidTransform tji = tj.inverse() * ti;
  const int stride = std::max(params.pixel_stride, 1);
  for (int y = 0; y < ci.depth.height; y += stride) {
    for (int x = 0; x < ci.depth.width; x += stride) {
      Association a;
      if (!associate(ci, cj, ti, tji, x, y, params, a)) continue;
      GeoResidual geo;
      geo_from(ci, cj, ti, tj, x, y, a, with_jacobian, geo);
      PhotoResidual photo;
      const bool has_photo = photo_from(ci, cj, tj, x, y, a, with_jacobian, photo);
      visit(geo, has_photo ? &photo : nullptr);
    }
  }
}

}  // namespace gcf::detail
