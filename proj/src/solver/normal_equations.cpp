#include "gcf/solver.hpp"

#include "dense_pixels.hpp"

#include <cmath>

namespace gcf {

namespace {

struct EdgeSystem {
  Mat12d h = Mat12d::Zero();
  Vec12d g = Vec12d::Zero();
};

template <int Rows>
void accumulate(EdgeSystem& sys, const Eigen::Matrix<double, Rows, 6>& ji, const Eigen::Matrix<double, Rows, 6>& jj,
                const Eigen::Matrix<double, Rows, 1>& r, double w) {
  Eigen::Matrix<double, Rows, 12> j;
  j.template leftCols<6>() = ji;
  j.template rightCols<6>() = jj;
  sys.h.noalias() += w * j.transpose() * j;
  sys.g.noalias() += w * j.transpose() * r;
}

}  // namespace

NormalEquations build_normal_equations(const AlignmentProblem& problem, std::span<const DenseEdge> edges,
                                       const EnergyWeights& weights, double w_dense, const DenseParams& params,
                                       Execution exec) {
  const VariableMap vars = VariableMap::build(problem);
  NormalEquations eq;
  eq.rhs_ = VecXd::Zero(vars.dim);
  eq.diag_ = VecXd::Zero(vars.dim);
  eq.frame_rows_.assign(vars.dim / 6, {});

  const double s = std::sqrt(weights.w_sparse);
  for (const auto& set : problem.sets) {
    if (!set.valid || !problem.is_active(set.frame_i) || !problem.is_active(set.frame_j)) continue;
    const int vi = vars.of(set.frame_i);
    const int vj = vars.of(set.frame_j);
    if (vi < 0 && vj < 0) continue;
    const RigidTransform& ti = problem.poses[set.frame_i];
    const RigidTransform& tj = problem.poses[set.frame_j];
    for (const auto& c : set.pairs) {
      const Vec3d a = ti * c.p_i;
      const Vec3d b = tj * c.p_j;
      NormalEquations::Row row;
      row.var_i = vi;
      row.var_j = vj;
      row.j_i = s * point_jacobian(a);
      row.j_j = -s * point_jacobian(b);
      row.r = s * (a - b);
      const int index = static_cast<int>(eq.rows_.size());
      if (vi >= 0) eq.frame_rows_[vi / 6].push_back({index, true});
      if (vj >= 0) eq.frame_rows_[vj / 6].push_back({index, false});
      eq.rows_.push_back(row);
    }
  }

  for_each_index(exec, static_cast<std::ptrdiff_t>(eq.frame_rows_.size()), [&](std::ptrdiff_t f) {
    Vec6d g = Vec6d::Zero(), d = Vec6d::Zero();
    for (const auto& t : eq.frame_rows_[f]) {
      const auto& row = eq.rows_[t.row];
      const Mat36d& j = t.as_i ? row.j_i : row.j_j;
      g.noalias() += j.transpose() * row.r;
      d += j.colwise().squaredNorm().transpose();
    }
    eq.rhs_.segment<6>(6 * f) = -g;
    eq.diag_.segment<6>(6 * f) = d;
  });

  if (w_dense > 0.0 && !edges.empty()) {
    const double wp = w_dense * weights.w_photo;
    const double wg = w_dense * weights.w_geo;
    std::vector<EdgeSystem> local(edges.size());
    for_each_index(exec, static_cast<std::ptrdiff_t>(edges.size()), [&](std::ptrdiff_t e) {
      const DenseEdge& edge = edges[e];
      if (vars.of(edge.i) < 0 && vars.of(edge.j) < 0) return;
      EdgeSystem& sys = local[e];
      detail::for_each_dense_pixel(
          *problem.caches[edge.i], *problem.caches[edge.j], problem.poses[edge.i], problem.poses[edge.j], params,
          true, [&](const GeoResidual& geo, const PhotoResidual* photo) {
            accumulate<1>(sys, geo.j_i, geo.j_j, Eigen::Matrix<double, 1, 1>(geo.r), wg);
            if (photo) accumulate<2>(sys, photo->j_i, photo->j_j, photo->r, wp);
          });
    });
    eq.dense_ = MatXd::Zero(vars.dim, vars.dim);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const int off[2] = {vars.of(edges[e].i), vars.of(edges[e].j)};
      for (int a = 0; a < 2; ++a) {
        if (off[a] < 0) continue;
        eq.rhs_.segment<6>(off[a]) -= local[e].g.segment<6>(6 * a);
        for (int b = 0; b < 2; ++b) {
          if (off[b] < 0) continue;
          eq.dense_.block<6, 6>(off[a], off[b]) += local[e].h.block<6, 6>(6 * a, 6 * b);
        }
      }
    }
    eq.diag_ += eq.dense_.diagonal();
  }
  return eq;
}

void NormalEquations::apply(const VecXd& x, VecXd& y, Execution exec) const {
  std::vector<Vec3d> jx(rows_.size());
  for_each_index(exec, static_cast<std::ptrdiff_t>(rows_.size()), [&](std::ptrdiff_t k) {
    const Row& row = rows_[k];
    Vec3d t = Vec3d::Zero();
    if (row.var_i >= 0) t.noalias() += row.j_i * x.segment<6>(row.var_i);
    if (row.var_j >= 0) t.noalias() += row.j_j * x.segment<6>(row.var_j);
    jx[k] = t;
  });
  y = VecXd::Zero(dim());
  for_each_index(exec, static_cast<std::ptrdiff_t>(frame_rows_.size()), [&](std::ptrdiff_t f) {
    Vec6d acc = Vec6d::Zero();
    for (const auto& t : frame_rows_[f]) {
      const Row& row = rows_[t.row];
      acc.noalias() += (t.as_i ? row.j_i : row.j_j).transpose() * jx[t.row];
    }
    y.segment<6>(6 * f) = acc;
  });
  if (dense_.size() > 0) y.noalias() += dense_ * x;
}

MatXd NormalEquations::materialize() const {
  MatXd m = dense_.size() > 0 ? dense_ : MatXd::Zero(dim(), dim());
  for (const Row& row : rows_) {
    const int off[2] = {row.var_i, row.var_j};
    const Mat36d* j[2] = {&row.j_i, &row.j_j};
    for (int a = 0; a < 2; ++a) {
      if (off[a] < 0) continue;
      for (int b = 0; b < 2; ++b) {
        if (off[b] < 0) continue;
        m.block<6, 6>(off[a], off[b]) += j[a]->transpose() * *j[b];
      }
    }
  }
  return m;
}

}  // namespace gcf
