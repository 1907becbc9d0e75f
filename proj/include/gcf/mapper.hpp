#pragma once

#include "gcf/features.hpp"
#include "gcf/filters.hpp"
#include "gcf/frame.hpp"
#include "gcf/solver.hpp"

#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace gcf {

// One frame as the mapper sees it.
struct FrameInput {
  int index = 0;
  double timestamp = 0.0;
  CachedFrame cache;
  std::vector<Keypoint> keypoints;
};

struct MapperConfig {
  int chunk_size = 11;                 // adjacent chunks share one frame
  FilterConfig filter;
  MatchParams match;
  EnergyWeights weights;
  SolverConfig chunk_solver = [] {
    SolverConfig c;
    c.max_iterations = 10;
    return c;
  }();
  // Online global solves run a few sparse iterations per new keyframe.
  SolverConfig global_solver = [] {
    SolverConfig c;
    c.max_iterations = 3;
    c.use_dense = false;
    return c;
  }();
  SolverConfig final_solver = [] {
    SolverConfig c;
    c.max_iterations = 10;
    return c;
  }();
  double chunk_max_error = 0.05;       // m, chunk verification
  double merge_radius = 0.03;          // m, keyframe feature merging
  double prune_threshold = kMaxCorrespondenceResidual;
};

struct Chunk {
  int id = 0;
  std::vector<int> frames;                 // global frame ids in order
  int anchor = 0;                          // local index of the reference frame
  std::vector<RigidTransform> local_poses; // camera -> anchor camera
  std::vector<char> frame_valid;
  std::vector<CorrespondenceSet> sets;     // frame ids are local indices
  bool verified = false;
  double verify_error = 0.0;               // worst pairwise error under local_poses

  int keyframe_frame() const { return frames[anchor]; }
  int valid_count() const;
};

// Solves one chunk: all-pairs cascade, identity-initialized alignment with
// pruning, then dense re-verification. frames[0] is the nominal reference; if
// it has no correspondence set the first frame that has one takes its place.
Chunk process_chunk(std::span<const FrameInput* const> frames, const MapperConfig& config, int id = 0);

struct ChunkVerification {
  bool pass = true;
  double worst_error = 0.0;
  int worst_i = -1;  // local indices of the worst pair
  int worst_j = -1;
};

// Dense re-check of every pair of valid frames under the chunk's local poses.
// A pair fails on error above config.chunk_max_error; pairs that carry a
// correspondence set also fail when too few pixels survive.
ChunkVerification verify_chunk(const Chunk& chunk, std::span<const FrameInput* const> frames,
                               const MapperConfig& config);

struct FeatureCluster {
  Vec3d position = Vec3d::Zero();  // mean of the members
  std::vector<int> members;        // ascending input indices
};

// Single-linkage clusters at the given radius, followed by merging any two
// clusters whose means are closer than the radius until none remain. The
// output is a fixed point: clustering the positions again changes nothing.
std::vector<FeatureCluster> merge_features(std::span<const Vec3d> points, double radius);

enum class KeyframeStatus { Valid, CandidateInvalid };

struct Keyframe {
  int chunk = -1;
  int frame = -1;                        // global id of the chunk's anchor frame
  std::vector<Keypoint> features;        // one per retained descriptor, keyframe camera space
  std::vector<int> groups;               // representative id of each feature
  RigidTransform global_pose;
  KeyframeStatus status = KeyframeStatus::CandidateInvalid;

  int representative_count() const;
};

// Aggregates the keypoints that took part in the chunk's surviving
// correspondences into merged representatives in anchor camera space.
Keyframe build_keyframe(const Chunk& chunk, std::span<const FrameInput* const> frames,
                        const MapperConfig& config);

// Keeps the first (closest) match of every representative on either side.
std::vector<RawMatch> unique_group_matches(std::span<const RawMatch> matches, std::span<const int> groups_a,
                                           std::span<const int> groups_b);

// Cascade outcome for one keyframe pair, kept for loop-closure evaluation.
struct KeyframePairRecord {
  int kf_a = -1;  // older keyframe index
  int kf_b = -1;
  bool raw = false;
  bool keypoint = false;  // survived the keypoint and area filters
  bool verified = false;  // survived dense verification
  std::optional<RigidTransform> raw_transform;       // kf_a space -> kf_b space
  std::optional<RigidTransform> filtered_transform;
};

struct GlobalTrajectory {
  std::vector<RigidTransform> poses;
  std::vector<char> valid;
  std::vector<int> chunk;                  // owning chunk, -1 if none
  std::vector<RigidTransform> local_pose;  // delta applied within the owning chunk
  std::vector<double> timestamps;

  int registered() const;
};

struct MapperEvent {
  int chunk = -1;
  bool chunk_verified = false;
  bool keyframe_valid = false;
  int global_sets = 0;
  std::vector<IterationStats> stats;
};

// Online two-level mapper. Frames arrive with consecutive indices from 0.
class Mapper {
 public:
  explicit Mapper(MapperConfig config = {});

  // Stores the frame, computes its provisional pose and runs the chunk and
  // global solves when a chunk fills up. Returns an event per solved chunk.
  std::optional<MapperEvent> add_frame(FrameInput frame);
  // Solves the trailing partial chunk and, if requested, the dense global
  // keyframe pass.
  std::vector<MapperEvent> finish(bool dense_global = true);

  GlobalTrajectory trajectory() const;
  // Provisional pose computed on arrival; empty while tracking is lost.
  const std::optional<RigidTransform>& provisional_pose(int frame) const { return provisional_[frame]; }
  bool tracking_lost(int frame) const { return !provisional_[frame].has_value(); }
  // Keypoint transform from this frame's camera into the previous frame's;
  // empty when the two frames did not match.
  const std::optional<RigidTransform>& odometry(int frame) const { return odometry_[frame]; }

  int frame_count() const { return static_cast<int>(frames_.size()); }
  const FrameInput& frame(int f) const { return frames_[f]; }
  const std::vector<Chunk>& chunks() const { return chunks_; }
  const std::vector<Keyframe>& keyframes() const { return keyframes_; }
  // Keyframe index per chunk, -1 for discarded chunks.
  const std::vector<int>& chunk_keyframe() const { return chunk_keyframe_; }
  const std::vector<CorrespondenceSet>& global_sets() const { return global_sets_; }
  const std::vector<KeyframePairRecord>& pair_records() const { return pair_records_; }
  const MapperConfig& config() const { return config_; }

  // Re-runs the global keyframe solve over everything seen so far.
  MapperEvent optimize_global(const SolverConfig& solver);

 private:
  std::optional<RigidTransform> frame_to_frame(const FrameInput& frame) const;
  std::optional<RigidTransform> bootstrap_pose(const FrameInput& frame) const;
  std::optional<RigidTransform> relocalize(const FrameInput& frame) const;
  MapperEvent solve_chunk(int first, int last);
  void add_keyframe(Keyframe kf);
  void refresh_connectivity(std::optional<int> preferred, const std::optional<RigidTransform>& preferred_pose);
  std::optional<RigidTransform> best_known_pose(int frame) const;

  MapperConfig config_;
  std::deque<FrameInput> frames_;
  std::vector<std::optional<RigidTransform>> provisional_;
  std::vector<std::optional<RigidTransform>> odometry_;
  std::vector<Chunk> chunks_;
  std::vector<int> chunk_keyframe_;
  std::vector<Keyframe> keyframes_;
  std::vector<CorrespondenceSet> global_sets_;  // frame ids are keyframe indices
  std::vector<KeyframePairRecord> pair_records_;
  int next_chunk_start_ = 0;
};

}  // namespace gcf
