#include "gcf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace gcf {

AteResult ate_rmse(std::span<const RigidTransform> estimated, std::span<const RigidTransform> ground_truth,
                   std::span<const char> mask) {
  if (estimated.size() != ground_truth.size() || mask.size() != estimated.size())
    throw std::invalid_argument("trajectory sizes differ");
  std::vector<Vec3d> p, q;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    if (!mask[i]) continue;
    p.push_back(estimated[i].translation);
    q.push_back(ground_truth[i].translation);
  }
  const KabschResult k = kabsch(p, q);
  AteResult r;
  r.alignment = k.transform;
  r.pairs = static_cast<int>(p.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += (k.transform * p[i] - q[i]).squaredNorm();
  r.rmse = std::sqrt(sum / static_cast<double>(p.size()));
  return r;
}

AteResult ate_rmse(std::span<const RigidTransform> estimated, std::span<const RigidTransform> ground_truth) {
  const std::vector<char> all(estimated.size(), 1);
  return ate_rmse(estimated, ground_truth, all);
}

AteResult ate_rmse(const std::vector<TimedPose>& estimated, const std::vector<TimedPose>& ground_truth,
                   double max_difference) {
  std::vector<double> te, tg;
  for (const auto& e : estimated) te.push_back(e.timestamp);
  for (const auto& g : ground_truth) tg.push_back(g.timestamp);
  std::vector<RigidTransform> a, b;
  for (const Association& m : associate_timestamps(te, tg, max_difference)) {
    a.push_back(estimated[m.a].pose);
    b.push_back(ground_truth[m.b].pose);
  }
  return ate_rmse(a, b);
}

std::vector<std::pair<int, int>> overlapping_pairs(const LoopClosureTruth& truth) {
  std::vector<std::pair<int, int>> out;
  const int n = static_cast<int>(truth.caches.size());
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const double ab = frustum_overlap(*truth.caches[a], truth.poses[a], *truth.caches[b], truth.poses[b]);
      const double ba = frustum_overlap(*truth.caches[b], truth.poses[b], *truth.caches[a], truth.poses[a]);
      if (std::max(ab, ba) >= truth.min_overlap) out.emplace_back(a, b);
    }
  return out;
}

double reprojection_error(const PairProposal& p, const LoopClosureTruth& truth) {
  const CachedFrame& c = *truth.caches[p.a];
  const RigidTransform gt_ab = truth.poses[p.b].inverse() * truth.poses[p.a];
  double sum = 0.0;
  int count = 0;
  for (int y = 0; y < c.depth.height; ++y)
    for (int x = 0; x < c.depth.width; ++x) {
      if (!c.valid_depth(x, y)) continue;
      const Vec3d q = c.points(x, y).cast<double>();
      sum += (p.t_ab * q - gt_ab * q).norm();
      ++count;
    }
  return count ? sum / count : std::numeric_limits<double>::infinity();
}

PrecisionRecall loop_closure_pr(std::span<const PairProposal> proposals, const LoopClosureTruth& truth) {
  const auto truth_pairs = overlapping_pairs(truth);
  const std::set<std::pair<int, int>> truth_set(truth_pairs.begin(), truth_pairs.end());
  std::set<std::pair<int, int>> seen, correct;
  for (const PairProposal& p : proposals) {
    const auto key = std::minmax(p.a, p.b);
    if (!seen.insert(key).second) continue;
    const PairProposal ordered = p.a < p.b ? p : PairProposal{p.b, p.a, p.t_ab.inverse()};
    if (truth_set.count(key) && reprojection_error(ordered, truth) < truth.max_reprojection_error)
      correct.insert(key);
  }
  PrecisionRecall pr;
  pr.proposed = static_cast<int>(seen.size());
  pr.correct = static_cast<int>(correct.size());
  pr.truth = static_cast<int>(truth_set.size());
  pr.precision = pr.proposed ? static_cast<double>(pr.correct) / pr.proposed : 1.0;
  pr.recall = pr.truth ? static_cast<double>(pr.correct) / pr.truth : 0.0;
  return pr;
}

}  // namespace gcf
