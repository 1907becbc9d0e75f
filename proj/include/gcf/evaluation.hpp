#pragma once

#include "gcf/dataset.hpp"
#include "gcf/frame.hpp"
#include "gcf/geometry.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gcf {

struct AteResult {
  double rmse = 0.0;
  RigidTransform alignment;  // applied to the estimate
  int pairs = 0;
};

// Rigidly aligns the estimated positions onto ground truth, then reports the
// RMS of the remaining translation errors. Throws Underdetermined for fewer
// than three pairs.
AteResult ate_rmse(std::span<const RigidTransform> estimated, std::span<const RigidTransform> ground_truth);
// Same, restricted to entries with mask != 0.
AteResult ate_rmse(std::span<const RigidTransform> estimated, std::span<const RigidTransform> ground_truth,
                   std::span<const char> mask);
// Associates the two trajectories by timestamp first.
AteResult ate_rmse(const std::vector<TimedPose>& estimated, const std::vector<TimedPose>& ground_truth,
                   double max_difference = 0.02);

// A proposed correspondence between keyframes a < b with its transform from
// a's camera space into b's.
struct PairProposal {
  int a = 0;
  int b = 0;
  RigidTransform t_ab;
};

struct LoopClosureTruth {
  std::vector<const CachedFrame*> caches;      // one per keyframe
  std::vector<RigidTransform> poses;           // ground-truth camera to world
  double min_overlap = 0.3;
  double max_reprojection_error = 0.2;  // m
};

struct PrecisionRecall {
  double precision = 1.0;  // 1 by convention when nothing is proposed
  double recall = 0.0;     // 0 by convention when the truth set is empty
  int proposed = 0;
  int correct = 0;
  int truth = 0;
};

// Keyframe pairs whose views overlap by at least min_overlap in either
// direction under ground truth.
std::vector<std::pair<int, int>> overlapping_pairs(const LoopClosureTruth& truth);
// Mean distance between a's valid cache points carried by the proposal and by
// the ground-truth relative transform.
double reprojection_error(const PairProposal& p, const LoopClosureTruth& truth);
// Duplicate proposals for a pair count once.
PrecisionRecall loop_closure_pr(std::span<const PairProposal> proposals, const LoopClosureTruth& truth);

}  // namespace gcf
