#pragma once

#include "gcf/filters.hpp"
#include "gcf/frame.hpp"
#include "gcf/geometry.hpp"
#include "gcf/parallel.hpp"

#include <Eigen/Core>

#include <functional>
#include <span>
#include <vector>

namespace gcf {

using VecXd = Eigen::VectorXd;
using MatXd = Eigen::MatrixXd;
using Mat36d = Eigen::Matrix<double, 3, 6>;
using Mat26d = Eigen::Matrix<double, 2, 6>;
using Vec12d = Eigen::Matrix<double, 12, 1>;
using Mat12d = Eigen::Matrix<double, 12, 12>;

// Weights of the alignment energy. w_dense is the final value of a linear ramp
// from 0 that starts at outer iteration ramp_start and completes at ramp_end;
// ramp_end < 0 means the last outer iteration of the solve.
struct EnergyWeights {
  double w_sparse = 1.0;
  double w_dense = 1.0;
  double w_photo = 0.1;
  double w_geo = 1.0;
  int ramp_start = 0;
  int ramp_end = -1;

  // w_dense in effect at the given outer iteration of a solve with
  // max_iterations outer iterations.
  double dense_weight_at(int iteration, int max_iterations) const;
};

struct DenseParams {
  double max_view_angle_deg = 60.0;
  double tau_d = 0.15;  // m, point distance gate for dense pixel pairs
  double tau_n = 0.9;   // normal agreement gate
  // Every stride-th pixel in x and y contributes; 1 uses the full cache.
  int pixel_stride = 1;
};

// Ordered frame pair (i, j) that contributes dense residuals; i != j.
struct DenseEdge {
  int i = 0;
  int j = 0;
  bool operator==(const DenseEdge&) const = default;
};

// Pose-graph problem over frames 0..n-1. Frame 0 is the fixed reference and
// inactive frames are held fixed and carry no residuals.
struct AlignmentProblem {
  std::vector<RigidTransform> poses;
  std::vector<char> active;                 // empty means all active
  std::vector<CorrespondenceSet> sets;      // frame ids index poses
  std::vector<const CachedFrame*> caches;   // empty or null entries disable dense terms for a frame

  int frame_count() const { return static_cast<int>(poses.size()); }
  bool is_active(int f) const { return active.empty() || active[f] != 0; }
  bool has_cache(int f) const { return f < static_cast<int>(caches.size()) && caches[f] != nullptr; }
};

// Frame -> first scalar unknown, or -1 for frame 0 and inactive frames.
struct VariableMap {
  std::vector<int> offset;
  int dim = 0;

  static VariableMap build(const AlignmentProblem& problem);
  int of(int frame) const { return offset[frame]; }
};

// Pairs admitted to the dense terms at the given poses: view directions
// within the angle limit and nonzero frustum overlap. Both orders are listed.
std::vector<DenseEdge> dense_edges(const AlignmentProblem& problem, const DenseParams& params);

// ---- residual terms ------------------------------------------------------

struct SparseEval {
  std::vector<Vec3d> residuals;  // one per correspondence, set order
  double energy = 0.0;
};

// r = T_i p_i - T_j p_j for every correspondence of every valid set.
SparseEval eval_sparse(std::span<const RigidTransform> poses, std::span<const CorrespondenceSet> sets);

// Jacobians of T_i p w.r.t. a left increment exp(delta) T_i, delta = (omega, v).
Mat36d point_jacobian(const Vec3d& world_point);

struct DenseEval {
  double photo_energy = 0.0;
  double geo_energy = 0.0;
  int photo_count = 0;  // pixels, two residual components each
  int geo_count = 0;
};

// Photometric and geometric energies over the edges, one pass per edge.
DenseEval eval_dense(std::span<const RigidTransform> poses, std::span<const DenseEdge> edges,
                     std::span<const CachedFrame* const> caches, const DenseParams& params,
                     Execution exec = Execution::Serial);

// Single-pixel residuals with Jacobians w.r.t. left increments of T_i and
// T_j. Both return false when the pixel is masked: invalid source point,
// projection outside frame j, or the nearest-pixel partner failing the
// tau_d / tau_n gates.
struct PhotoResidual {
  Vec2d r = Vec2d::Zero();
  Mat26d j_i = Mat26d::Zero();
  Mat26d j_j = Mat26d::Zero();
};
bool photo_residual(const CachedFrame& ci, const CachedFrame& cj, const RigidTransform& ti,
                    const RigidTransform& tj, int x, int y, const DenseParams& params, PhotoResidual& out);

struct GeoResidual {
  double r = 0.0;
  Eigen::Matrix<double, 1, 6> j_i = Eigen::Matrix<double, 1, 6>::Zero();
  Eigen::Matrix<double, 1, 6> j_j = Eigen::Matrix<double, 1, 6>::Zero();
};
bool geo_residual(const CachedFrame& ci, const CachedFrame& cj, const RigidTransform& ti,
                  const RigidTransform& tj, int x, int y, const DenseParams& params, GeoResidual& out);

// Total weighted energy at the given poses with a fixed edge set.
double total_energy(const AlignmentProblem& problem, std::span<const RigidTransform> poses,
                    std::span<const DenseEdge> edges, const EnergyWeights& weights, double w_dense,
                    const DenseParams& params, Execution exec = Execution::Serial);

// ---- normal equations ----------------------------------------------------

// J^T J and -J^T F of the linearized energy. The sparse block is applied
// matrix-free in two passes (J, then J^T through per-frame correspondence
// lists); the dense block is assembled once per linearization.
class NormalEquations {
 public:
  NormalEquations() = default;

  int dim() const { return static_cast<int>(rhs_.size()); }
  // y = (J^T J) x
  void apply(const VecXd& x, VecXd& y, Execution exec = Execution::Serial) const;
  const VecXd& rhs() const { return rhs_; }
  const VecXd& diagonal() const { return diag_; }
  // Explicit J^T J, for tests and small problems.
  MatXd materialize() const;
  int sparse_rows() const { return static_cast<int>(rows_.size()); }

 private:
  friend NormalEquations build_normal_equations(const AlignmentProblem&, std::span<const DenseEdge>,
                                                const EnergyWeights&, double, const DenseParams&, Execution);
  // One sparse correspondence: Jacobian blocks already scaled by sqrt(w).
  struct Row {
    int var_i = -1;
    int var_j = -1;
    Mat36d j_i;
    Mat36d j_j;
    Vec3d r;
  };
  struct Touch {
    int row = 0;
    bool as_i = true;
  };
  std::vector<Row> rows_;
  std::vector<std::vector<Touch>> frame_rows_;   // indexed by variable offset / 6
  MatXd dense_;                                  // empty when no dense terms
  VecXd rhs_;
  VecXd diag_;
};

NormalEquations build_normal_equations(const AlignmentProblem& problem, std::span<const DenseEdge> edges,
                                       const EnergyWeights& weights, double w_dense, const DenseParams& params,
                                       Execution exec = Execution::Serial);

// ---- PCG -----------------------------------------------------------------

struct PcgConfig {
  int max_iterations = 50;
  double tolerance = 1e-6;  // on ||b - A x|| / ||b||
  int restart_interval = 20;
};

struct PcgResult {
  VecXd x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool diverged = false;  // a non-finite value appeared
};

using LinearOperator = std::function<void(const VecXd& x, VecXd& y)>;

// Jacobi-preconditioned CG from x = 0. Zero diagonal entries freeze their
// variable at zero.
PcgResult pcg_solve(const LinearOperator& apply, const VecXd& b, const VecXd& diagonal,
                    const PcgConfig& config = {});
PcgResult pcg_solve(const NormalEquations& eqs, const PcgConfig& config = {},
                    Execution exec = Execution::Serial);

// ---- Gauss-Newton --------------------------------------------------------

struct SolverConfig {
  int max_iterations = 10;
  double min_relative_decrease = 1e-9;
  // Energies at or below this are treated as already optimal.
  double energy_floor = 1e-20;
  PcgConfig pcg;
  DenseParams dense;
  bool use_dense = true;
  Execution exec = Execution::Serial;
};

struct IterationStats {
  int iteration = 0;
  double w_dense = 0.0;
  double energy_before = 0.0;
  double energy_after = 0.0;  // at the candidate poses, same weights and edges
  bool accepted = false;
  int pcg_iterations = 0;
  int dense_edges = 0;
  double r_max = 0.0;      // filled by solve_with_pruning for the last iteration of a round
  int pruned_pairs = 0;
};

struct SolveResult {
  std::vector<RigidTransform> poses;
  std::vector<IterationStats> stats;
  int iterations = 0;
  bool aborted = false;  // two consecutive energy increases
  bool diverged = false;
};

// Left-composed update: T_f <- exp(delta_f) T_f for every variable frame.
void apply_increment(std::vector<RigidTransform>& poses, const VariableMap& vars, const VecXd& delta);

SolveResult gauss_newton(const AlignmentProblem& problem, const EnergyWeights& weights,
                         const SolverConfig& config = {});

// ---- pruning -------------------------------------------------------------

inline constexpr double kMaxCorrespondenceResidual = 0.05;  // m

struct PruneResult {
  double r_max = 0.0;
  bool pruned = false;
  int frame_i = -1;  // pair whose sets were removed
  int frame_j = -1;
  int removed_sets = 0;
  std::vector<int> invalidated;  // frames newly flagged invalid
};

// Largest correspondence residual norm and the index of its set; -1 if none.
std::pair<double, int> max_residual(std::span<const RigidTransform> poses,
                                    std::span<const CorrespondenceSet> sets);

// One pruning round on problem.sets under problem.poses. If r_max exceeds the
// threshold, every set between the offending frame pair is dropped. Active
// frames left without any set, or cut off from frame 0, become inactive.
PruneResult prune_after_solve(AlignmentProblem& problem, double threshold = kMaxCorrespondenceResidual);

struct PrunedSolve {
  SolveResult solve;
  std::vector<PruneResult> rounds;
};

// Alternates gauss_newton and prune_after_solve until r_max <= threshold.
// problem.poses is updated with the final solution.
PrunedSolve solve_with_pruning(AlignmentProblem& problem, const EnergyWeights& weights,
                               const SolverConfig& config = {},
                               double threshold = kMaxCorrespondenceResidual);

}  // namespace gcf
