#include "gcf/solver.hpp"

#include "dense_pixels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gcf {

double EnergyWeights::dense_weight_at(int iteration, int max_iterations) const {
  const int end = ramp_end < 0 ? std::max(max_iterations - 1, 0) : ramp_end;
  if (iteration < ramp_start) return 0.0;
  if (iteration >= end) return w_dense;
  const double t = double(iteration - ramp_start) / double(end - ramp_start);
  return w_dense * t;
}

VariableMap VariableMap::build(const AlignmentProblem& problem) {
  VariableMap m;
  m.offset.assign(problem.poses.size(), -1);
  for (int f = 1; f < problem.frame_count(); ++f) {
    if (!problem.is_active(f)) continue;
    m.offset[f] = m.dim;
    m.dim += 6;
  }
  return m;
}

std::vector<DenseEdge> dense_edges(const AlignmentProblem& problem, const DenseParams& params) {
  const double cos_limit = std::cos(params.max_view_angle_deg * std::numbers::pi / 180.0);
  std::vector<DenseEdge> edges;
  const int n = problem.frame_count();
  for (int i = 0; i < n; ++i) {
    if (!problem.is_active(i) || !problem.has_cache(i)) continue;
    for (int j = 0; j < n; ++j) {
      if (i == j || !problem.is_active(j) || !problem.has_cache(j)) continue;
      const double c = problem.poses[i].view_direction().dot(problem.poses[j].view_direction());
      if (!(c > cos_limit)) continue;
      if (frustum_overlap(*problem.caches[i], problem.poses[i], *problem.caches[j], problem.poses[j]) > 0.0)
        edges.push_back({i, j});
    }
  }
  return edges;
}

SparseEval eval_sparse(std::span<const RigidTransform> poses, std::span<const CorrespondenceSet> sets) {
  SparseEval out;
  for (const auto& s : sets) {
    if (!s.valid) continue;
    const RigidTransform& ti = poses[s.frame_i];
    const RigidTransform& tj = poses[s.frame_j];
    for (const auto& c : s.pairs) {
      const Vec3d r = ti * c.p_i - tj * c.p_j;
      out.residuals.push_back(r);
      out.energy += r.squaredNorm();
    }
  }
  return out;
}

Mat36d point_jacobian(const Vec3d& world_point) {
  Mat36d j;
  j.leftCols<3>() = -skew(world_point);
  j.rightCols<3>().setIdentity();
  return j;
}

bool photo_residual(const CachedFrame& ci, const CachedFrame& cj, const RigidTransform& ti,
                    const RigidTransform& tj, int x, int y, const DenseParams& params, PhotoResidual& out) {
  detail::Association a;
  if (!detail::associate(ci, cj, ti, tj.inverse() * ti, x, y, params, a)) return false;
  return detail::photo_from(ci, cj, tj, x, y, a, true, out);
}

bool geo_residual(const CachedFrame& ci, const CachedFrame& cj, const RigidTransform& ti,
                  const RigidTransform& tj, int x, int y, const DenseParams& params, GeoResidual& out) {
  detail::Association a;
  if (!detail::associate(ci, cj, ti, tj.inverse() * ti, x, y, params, a)) return false;
  detail::geo_from(ci, cj, ti, tj, x, y, a, true, out);
  return true;
}

DenseEval eval_dense(std::span<const RigidTransform> poses, std::span<const DenseEdge> edges,
                     std::span<const CachedFrame* const> caches, const DenseParams& params, Execution exec) {
  std::vector<DenseEval> per_edge(edges.size());
  for_each_index(exec, static_cast<std::ptrdiff_t>(edges.size()), [&](std::ptrdiff_t e) {
    const DenseEdge& edge = edges[e];
    DenseEval& acc = per_edge[e];
    detail::for_each_dense_pixel(*caches[edge.i], *caches[edge.j], poses[edge.i], poses[edge.j], params, false,
                                 [&](const GeoResidual& g, const PhotoResidual* p) {
                                   acc.geo_energy += g.r * g.r;
                                   ++acc.geo_count;
                                   if (p) {
                                     acc.photo_energy += p->r.squaredNorm();
                                     ++acc.photo_count;
                                   }
                                 });
  });
  DenseEval total;
  for (const auto& e : per_edge) {
    total.photo_energy += e.photo_energy;
    total.geo_energy += e.geo_energy;
    total.photo_count += e.photo_count;
    total.geo_count += e.geo_count;
  }
  return total;
}

double total_energy(const AlignmentProblem& problem, std::span<const RigidTransform> poses,
                    std::span<const DenseEdge> edges, const EnergyWeights& weights, double w_dense,
                    const DenseParams& params, Execution exec) {
  double e = 0.0;
  for (const auto& s : problem.sets) {
    if (!s.valid || !problem.is_active(s.frame_i) || !problem.is_active(s.frame_j)) continue;
    for (const auto& c : s.pairs) e += (poses[s.frame_i] * c.p_i - poses[s.frame_j] * c.p_j).squaredNorm();
  }
  e *= weights.w_sparse;
  if (w_dense > 0.0 && !edges.empty()) {
    const DenseEval d = eval_dense(poses, edges, problem.caches, params, exec);
    e += w_dense * (weights.w_photo * d.photo_energy + weights.w_geo * d.geo_energy);
  }
  return e;
}

}  // namespace gcf
