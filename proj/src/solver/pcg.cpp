#include "gcf/solver.hpp"

#include <cmath>

namespace gcf {

PcgResult pcg_solve(const LinearOperator& apply, const VecXd& b, const VecXd& diagonal, const PcgConfig& config) {
  const Eigen::Index n = b.size();
  PcgResult out;
  out.x = VecXd::Zero(n);
  // Frozen variables are excluded from the residual norm.
  VecXd inv = VecXd::Zero(n), mask = VecXd::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (diagonal[k] > 0.0) {
      inv[k] = 1.0 / diagonal[k];
      mask[k] = 1.0;
    }
  }
  const double b_norm = b.cwiseProduct(mask).norm();
  if (!std::isfinite(b_norm)) {
    out.diverged = true;
    return out;
  }
  if (n == 0 || b_norm == 0.0) return out;

  VecXd r = b, z, p, ap;
  double rz = 0.0;
  auto restart = [&] {
    z = inv.cwiseProduct(r);
    p = z;
    rz = r.dot(z);
  };
  restart();
  out.relative_residual = 1.0;

  for (int it = 1; it <= config.max_iterations; ++it) {
    if (rz <= 0.0) break;
    apply(p, ap);
    const double pap = p.dot(ap);
    if (!std::isfinite(pap)) {
      out.diverged = true;
      break;
    }
    if (pap <= 0.0) break;
    const double alpha = rz / pap;
    out.x.noalias() += alpha * p;
    out.iterations = it;
    if (config.restart_interval > 0 && it % config.restart_interval == 0) {
      apply(out.x, ap);
      r = b - ap;
      restart();
    } else {
      r.noalias() -= alpha * ap;
      z = inv.cwiseProduct(r);
      const double rz_next = r.dot(z);
      p = z + (rz_next / rz) * p;
      rz = rz_next;
    }
    out.relative_residual = r.cwiseProduct(mask).norm() / b_norm;
    if (!std::isfinite(out.relative_residual) || !out.x.allFinite()) {
      out.diverged = true;
      break;
    }
    if (out.relative_residual < config.tolerance) break;
  }
  return out;
}

PcgResult pcg_solve(const NormalEquations& eqs, const PcgConfig& config, Execution exec) {
  return pcg_solve([&](const VecXd& x, VecXd& y) { eqs.apply(x, y, exec); }, eqs.rhs(), eqs.diagonal(),
                   config);
}

}  // namespace gcf
