#include "gcf/solver.hpp"

namespace gcf {

void apply_increment(std::vector<RigidTransform>& poses, const VariableMap& vars, const VecXd& delta) {
  for (std::size_t f = 0; f < poses.size(); ++f) {
    const int off = vars.of(static_cast<int>(f));
    if (off < 0) continue;
    poses[f] = exp_twist(Twist::from_vector(delta.segment<6>(off))) * poses[f];
  }
}

SolveResult gauss_newton(const AlignmentProblem& problem, const EnergyWeights& weights, const SolverConfig& config) {
  AlignmentProblem work = problem;
  const VariableMap vars = VariableMap::build(work);
  SolveResult result;
  const int max_it = config.max_iterations;
  int increases = 0;

  for (int k = 0; k < max_it && vars.dim > 0; ++k) {
    IterationStats st;
    st.iteration = k;
    st.w_dense = config.use_dense ? weights.dense_weight_at(k, max_it) : 0.0;
    const std::vector<DenseEdge> edges =
        st.w_dense > 0.0 ? dense_edges(work, config.dense) : std::vector<DenseEdge>{};
    st.dense_edges = static_cast<int>(edges.size());
    st.energy_before = total_energy(work, work.poses, edges, weights, st.w_dense, config.dense, config.exec);
    result.iterations = k + 1;

    if (st.energy_before <= config.energy_floor) {
      st.energy_after = st.energy_before;
      st.accepted = true;
      result.stats.push_back(st);
      break;
    }

    const NormalEquations eqs = build_normal_equations(work, edges, weights, st.w_dense, config.dense, config.exec);
    const PcgResult step = pcg_solve(eqs, config.pcg, config.exec);
    st.pcg_iterations = step.iterations;
    if (step.diverged) {
      result.diverged = true;
      st.energy_after = st.energy_before;
      result.stats.push_back(st);
      break;
    }

    std::vector<RigidTransform> candidate = work.poses;
    apply_increment(candidate, vars, step.x);
    st.energy_after = total_energy(work, candidate, edges, weights, st.w_dense, config.dense, config.exec);
    st.accepted = st.energy_after <= st.energy_before;
    result.stats.push_back(st);

    if (!st.accepted) {
      if (++increases >= 2) {
        result.aborted = true;
        break;
      }
      continue;
    }
    increases = 0;
    work.poses = std::move(candidate);
    const bool final_weights = edges.empty() || st.w_dense == weights.w_dense;
    const double decrease = (st.energy_before - st.energy_after) / st.energy_before;
    if (final_weights && decrease < config.min_relative_decrease) break;
  }
  result.poses = std::move(work.poses);
  return result;
}

}  // namespace gcf
