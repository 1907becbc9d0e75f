#pragma once

#include "gcf/frame.hpp"
#include "gcf/geometry.hpp"
#include "gcf/parallel.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <vector>

namespace gcf {

using BlockCoord = Eigen::Vector3i;
using VoxelCoord = Eigen::Vector3i;

inline constexpr int kBlockSide = 8;
inline constexpr int kBlockVoxels = kBlockSide * kBlockSide * kBlockSide;

// Accumulators of all samples fused into a voxel. The signed distance is
// sdf_sum / weight; weight == 0 means uninitialized.
struct Voxel {
  double sdf_sum = 0.0;
  double weight = 0.0;
  std::array<float, 3> color_sum{0.0f, 0.0f, 0.0f};

  double sdf() const { return weight > 0.0 ? sdf_sum / weight : 0.0; }
  bool operator==(const Voxel&) const = default;
};

struct VoxelBlock {
  BlockCoord coord = BlockCoord::Zero();
  std::array<Voxel, kBlockVoxels> voxels{};

  static int index(int x, int y, int z) { return (z * kBlockSide + y) * kBlockSide + x; }
  bool empty() const;
};

// Open-addressing map from block coordinate to block with linear probing and
// backward-shift deletion. Iteration order depends only on the sequence of
// operations.
class BlockHash {
 public:
  BlockHash();

  VoxelBlock* find(const BlockCoord& c);
  const VoxelBlock* find(const BlockCoord& c) const;
  // Returns the existing block or a freshly zeroed one.
  VoxelBlock& insert(const BlockCoord& c);
  bool erase(const BlockCoord& c);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return slots_.size(); }
  // Block coordinates in ascending (z, y, x) order.
  std::vector<BlockCoord> coords() const;

  static std::uint64_t hash(const BlockCoord& c);

 private:
  struct Slot {
    BlockCoord key = BlockCoord::Zero();
    std::int32_t block = -1;
  };
  std::size_t probe_start(const BlockCoord& c) const { return hash(c) & (slots_.size() - 1); }
  void grow();

  std::vector<Slot> slots_;
  std::deque<VoxelBlock> pool_;
  std::vector<std::int32_t> free_;
  std::size_t size_ = 0;
};

class DeintegrationMismatch : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct TsdfParams {
  double voxel_size = 0.004;  // m
  double truncation = 0.0;    // m; 0 selects max(0.02, 5 * voxel_size)
  float min_depth = 0.1f;
  float max_depth = 8.0f;
  // Off: every sample has weight 1. On: weight 1 / z^2 (z in meters).
  bool depth_weighted = false;
};

struct VoxelValue {
  double sdf = 0.0;
  double weight = 0.0;
  Eigen::Vector3f color = Eigen::Vector3f::Zero();  // 0..255
};

// Sparse TSDF with exactly invertible per-frame updates. The set of voxels a
// frame touches, and the sample it contributes to each, depend only on the
// frame and its pose.
class TsdfVolume {
 public:
  explicit TsdfVolume(TsdfParams params = {});

  void integrate(const RgbdFrame& frame, const Intrinsics& k, const RigidTransform& pose,
                 Execution exec = Execution::Serial);
  // Throws DeintegrationMismatch, leaving the volume unchanged, if any touched
  // voxel lacks the weight being removed.
  void deintegrate(const RgbdFrame& frame, const Intrinsics& k, const RigidTransform& pose,
                   Execution exec = Execution::Serial);

  std::optional<VoxelValue> voxel(const VoxelCoord& v) const;
  const VoxelBlock* block(const BlockCoord& b) const { return blocks_.find(b); }
  // Deserialization: stores a block verbatim, replacing any existing one.
  void restore_block(const VoxelBlock& b);
  std::vector<BlockCoord> block_coords() const { return blocks_.coords(); }
  std::size_t block_count() const { return blocks_.size(); }

  double voxel_size() const { return params_.voxel_size; }
  double truncation() const { return truncation_; }
  const TsdfParams& params() const { return params_; }

  // Blocks within the truncation band of the frame's valid depth samples.
  std::vector<BlockCoord> candidate_blocks(const RgbdFrame& frame, const Intrinsics& k,
                                           const RigidTransform& pose) const;

  Vec3d voxel_center(const VoxelCoord& v) const { return (v.cast<double>() + Vec3d::Constant(0.5)) * params_.voxel_size; }
  VoxelCoord voxel_of(const Vec3d& p) const;

 private:
  template <bool Remove>
  void update(const RgbdFrame& frame, const Intrinsics& k, const RigidTransform& pose, Execution exec);

  TsdfParams params_;
  double truncation_;
  BlockHash blocks_;
};

struct VolumeDifference {
  bool same_support = true;   // identical set of voxels with weight > 0
  double max_weight_diff = 0.0;
  double max_sdf_diff = 0.0;  // over voxels initialized in both
};

VolumeDifference compare_volumes(const TsdfVolume& a, const TsdfVolume& b);

}  // namespace gcf
