#include "gcf/solver.hpp"

#include <numeric>

namespace gcf {

std::pair<double, int> max_residual(std::span<const RigidTransform> poses, std::span<const CorrespondenceSet> sets) {
  double best = 0.0;
  int index = -1;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    if (!sets[s].valid) continue;
    const RigidTransform& ti = poses[sets[s].frame_i];
    const RigidTransform& tj = poses[sets[s].frame_j];
    for (const auto& c : sets[s].pairs) {
      const double r = (ti * c.p_i - tj * c.p_j).norm();
      if (index < 0 || r > best) {
        best = r;
        index = static_cast<int>(s);
      }
    }
  }
  return {best, index};
}

namespace {

int find_root(std::vector<int>& parent, int x) {
  while (parent[x] != x) x = parent[x] = parent[parent[x]];
  return x;
}

bool in_problem(const AlignmentProblem& p, const CorrespondenceSet& s) {
  return s.valid && p.is_active(s.frame_i) && p.is_active(s.frame_j);
}

}  // namespace

PruneResult prune_after_solve(AlignmentProblem& problem, double threshold) {
  PruneResult out;
  std::vector<CorrespondenceSet> live;
  for (auto& s : problem.sets)
    if (in_problem(problem, s)) live.push_back(std::move(s));
  problem.sets = std::move(live);

  const auto [r_max, index] = max_residual(problem.poses, problem.sets);
  out.r_max = r_max;
  if (index >= 0 && r_max > threshold) {
    out.pruned = true;
    out.frame_i = problem.sets[index].frame_i;
    out.frame_j = problem.sets[index].frame_j;
    const auto before = problem.sets.size();
    std::erase_if(problem.sets, [&](const CorrespondenceSet& s) {
      return (s.frame_i == out.frame_i && s.frame_j == out.frame_j) ||
             (s.frame_i == out.frame_j && s.frame_j == out.frame_i);
    });
    out.removed_sets = static_cast<int>(before - problem.sets.size());
  }

  // Frames without a path of sets to the reference frame have no anchor.
  const int n = problem.frame_count();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  for (const auto& s : problem.sets) parent[find_root(parent, s.frame_i)] = find_root(parent, s.frame_j);
  if (problem.active.empty()) problem.active.assign(n, 1);
  const int anchor = n > 0 ? find_root(parent, 0) : -1;
  for (int f = 1; f < n; ++f) {
    if (!problem.active[f] || find_root(parent, f) == anchor) continue;
    problem.active[f] = 0;
    out.invalidated.push_back(f);
  }
  if (!out.invalidated.empty())
    std::erase_if(problem.sets, [&](const CorrespondenceSet& s) { return !in_problem(problem, s); });
  return out;
}

PrunedSolve solve_with_pruning(AlignmentProblem& problem, const EnergyWeights& weights, const SolverConfig& config,
                               double threshold) {
  PrunedSolve out;
  std::vector<IterationStats> history;
  for (;;) {
    out.solve = gauss_newton(problem, weights, config);
    problem.poses = out.solve.poses;
    PruneResult round = prune_after_solve(problem, threshold);
    if (!out.solve.stats.empty()) {
      out.solve.stats.back().r_max = round.r_max;
      out.solve.stats.back().pruned_pairs = round.removed_sets;
    }
    history.insert(history.end(), out.solve.stats.begin(), out.solve.stats.end());
    const bool again = round.pruned;
    out.rounds.push_back(std::move(round));
    if (!again) break;
  }
  out.solve.stats = std::move(history);
  return out;
}

}  // namespace gcf
