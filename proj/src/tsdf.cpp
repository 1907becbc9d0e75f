#include "gcf/tsdf.hpp"

#include <algorithm>
#include <cmath>

namespace gcf {

namespace {

int floor_div(int v, int d) { return v >= 0 ? v / d : -((-v + d - 1) / d); }

std::uint64_t pack(const BlockCoord& c) {
  constexpr std::int64_t bias = 1 << 20;
  return (std::uint64_t(c.x() + bias) << 42) | (std::uint64_t(c.y() + bias) << 21) | std::uint64_t(c.z() + bias);
}

BlockCoord unpack(std::uint64_t k) {
  constexpr std::int64_t bias = 1 << 20;
  constexpr std::uint64_t mask = (1u << 21) - 1;
  return {int(std::int64_t((k >> 42) & mask) - bias), int(std::int64_t((k >> 21) & mask) - bias),
          int(std::int64_t(k & mask) - bias)};
}

bool zyx_less(const BlockCoord& a, const BlockCoord& b) {
  if (a.z() != b.z()) return a.z() < b.z();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.x() < b.x();
}

}  // namespace

bool VoxelBlock::empty() const {
  return std::all_of(voxels.begin(), voxels.end(), [](const Voxel& v) { return v.weight == 0.0; });
}

// ---- BlockHash -------------------------------------------------------------

BlockHash::BlockHash() : slots_(1024) {}

std::uint64_t BlockHash::hash(const BlockCoord& c) {
  std::uint64_t z = pack(c) + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

VoxelBlock* BlockHash::find(const BlockCoord& c) {
  return const_cast<VoxelBlock*>(static_cast<const BlockHash*>(this)->find(c));
}

const VoxelBlock* BlockHash::find(const BlockCoord& c) const {
  const std::size_t mask = slots_.size() - 1;
  for (std::size_t i = probe_start(c);; i = (i + 1) & mask) {
    const Slot& s = slots_[i];
    if (s.block < 0) return nullptr;
    if (s.key == c) return &pool_[s.block];
  }
}

VoxelBlock& BlockHash::insert(const BlockCoord& c) {
  if (VoxelBlock* b = find(c)) return *b;
  if ((size_ + 1) * 2 > slots_.size()) grow();
  std::int32_t id;
  if (!free_.empty()) {
    id = free_.back();
    free_.pop_back();
  } else {
    id = static_cast<std::int32_t>(pool_.size());
    pool_.emplace_back();
  }
  pool_[id] = VoxelBlock{};
  pool_[id].coord = c;
  const std::size_t mask = slots_.size() - 1;
  std::size_t i = probe_start(c);
  while (slots_[i].block >= 0) i = (i + 1) & mask;
  slots_[i] = {c, id};
  ++size_;
  return pool_[id];
}

bool BlockHash::erase(const BlockCoord& c) {
  const std::size_t mask = slots_.size() - 1;
  std::size_t i = probe_start(c);
  for (;; i = (i + 1) & mask) {
    if (slots_[i].block < 0) return false;
    if (slots_[i].key == c) break;
  }
  free_.push_back(slots_[i].block);
  pool_[slots_[i].block] = VoxelBlock{};
  // Backward-shift deletion keeps every probe chain contiguous.
  std::size_t j = i;
  for (;;) {
    j = (j + 1) & mask;
    if (slots_[j].block < 0) break;
    const std::size_t k = probe_start(slots_[j].key);
    const bool movable = (j > i) ? (k <= i || k > j) : (k <= i && k > j);
    if (movable) {
      slots_[i] = slots_[j];
      i = j;
    }
  }
  slots_[i] = Slot{};
  --size_;
  return true;
}

std::vector<BlockCoord> BlockHash::coords() const {
  std::vector<BlockCoord> out;
  out.reserve(size_);
  for (const Slot& s : slots_)
    if (s.block >= 0) out.push_back(s.key);
  std::sort(out.begin(), out.end(), zyx_less);
  return out;
}

void BlockHash::grow() {
  std::vector<Slot> old = std::move(slots_);
  slots_.assign(old.size() * 2, Slot{});
  const std::size_t mask = slots_.size() - 1;
  for (const Slot& s : old) {
    if (s.block < 0) continue;
    std::size_t i = probe_start(s.key);
    while (slots_[i].block >= 0) i = (i + 1) & mask;
    slots_[i] = s;
  }
}

// ---- TsdfVolume --------------------------------------------------------------

TsdfVolume::TsdfVolume(TsdfParams params)
    : params_(params),
      truncation_(params.truncation > 0.0 ? params.truncation : std::max(0.02, 5.0 * params.voxel_size)) {
  if (!(params_.voxel_size > 0.0)) throw std::invalid_argument("voxel_size must be positive");
}

VoxelCoord TsdfVolume::voxel_of(const Vec3d& p) const {
  return (p / params_.voxel_size).array().floor().cast<int>().matrix();
}

std::vector<BlockCoord> TsdfVolume::candidate_blocks(const RgbdFrame& frame, const Intrinsics& k,
                                                     const RigidTransform& pose) const {
  const double block_len = kBlockSide * params_.voxel_size;
  const double inv_block = 1.0 / block_len;
  const double step = 0.5 * block_len;
  const int samples = static_cast<int>(std::ceil(2.0 * truncation_ / step));
  const Mat3d& r = pose.rotation;
  const Vec3d& t = pose.translation;
  std::vector<std::uint64_t> keys;
  // Neighboring pixels mostly hit the same block at the same sample depth.
  std::vector<std::uint64_t> last(samples + 1);
  for (int y = 0; y < frame.height(); ++y) {
    std::fill(last.begin(), last.end(), ~0ull);
    for (int x = 0; x < frame.width(); ++x) {
      const float d = frame.depth(x, y);
      if (!(d >= params_.min_depth && d <= params_.max_depth)) continue;
      const Vec3d ray = r * k.unproject(Vec2d(x, y), 1.0);
      for (int s = 0; s <= samples; ++s) {
        const double z = d - truncation_ + 2.0 * truncation_ * s / samples;
        if (z <= 0.0) continue;
        const Vec3d w = (t + ray * z) * inv_block;
        const std::uint64_t key = pack(BlockCoord(int(std::floor(w.x())), int(std::floor(w.y())), int(std::floor(w.z()))));
        if (key != last[s]) keys.push_back(key);
        last[s] = key;
      }
    }
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  std::vector<BlockCoord> out;
  out.reserve(keys.size());
  for (auto key : keys) out.push_back(unpack(key));
  std::sort(out.begin(), out.end(), zyx_less);
  return out;
}

namespace {

struct Sample {
  double d = 0.0;
  double w = 0.0;
  std::array<float, 3> color{};
};

}  // namespace

template <bool Remove>
void TsdfVolume::update(const RgbdFrame& frame, const Intrinsics& k, const RigidTransform& pose, Execution exec) {
  const std::vector<BlockCoord> coords = candidate_blocks(frame, k, pose);
  const RigidTransform world_to_cam = pose.inverse();
  const double trunc = truncation_;
  const TsdfParams& prm = params_;
  const double vs = prm.voxel_size;
  // Camera-space steps between neighboring voxel centers.
  const Vec3d ax = world_to_cam.rotation.col(0) * vs;
  const Vec3d ay = world_to_cam.rotation.col(1) * vs;
  const Vec3d az = world_to_cam.rotation.col(2) * vs;
  const int w = frame.width(), h = frame.height();

  // Calls body(voxel index, sample) for every voxel of the block the frame
  // writes to. Positions are stepped from the block origin, so a frame and
  // pose always yield the same samples.
  auto for_each_sample = [&](const BlockCoord& coord, auto&& body) {
    const Vec3d origin = world_to_cam * voxel_center(coord * kBlockSide);
    for (int z = 0; z < kBlockSide; ++z)
      for (int y = 0; y < kBlockSide; ++y) {
        const Vec3d row = origin + ay * y + az * z;
        for (int x = 0; x < kBlockSide; ++x) {
          const Vec3d p = row + ax * x;
          if (p.z() <= 0.0) continue;
          const double inv_z = 1.0 / p.z();
          const int px = static_cast<int>(std::floor(k.fx * p.x() * inv_z + k.cx + 0.5));
          const int py = static_cast<int>(std::floor(k.fy * p.y() * inv_z + k.cy + 0.5));
          if (px < 0 || py < 0 || px >= w || py >= h) continue;
          const float d = frame.depth(px, py);
          if (!(d >= prm.min_depth && d <= prm.max_depth)) continue;
          const double sdf = double(d) - p.z();
          if (sdf < -trunc) continue;
          Sample s;
          s.d = std::min(sdf, trunc);
          s.w = prm.depth_weighted ? 1.0 / (double(d) * double(d)) : 1.0;
          const Rgb8& c = frame.color(px, py);
          s.color = {float(s.w * c.r), float(s.w * c.g), float(s.w * c.b)};
          body(VoxelBlock::index(x, y, z), s);
        }
      }
  };

  std::vector<VoxelBlock*> blocks(coords.size(), nullptr);
  if constexpr (Remove) {
    // Samples are gathered once, checked against the volume, then applied,
    // so a mismatch leaves the volume untouched. Integration frees candidate
    // blocks that received no sample, so a missing block is only a mismatch
    // if this frame would write to it.
    for (std::size_t b = 0; b < coords.size(); ++b) blocks[b] = blocks_.find(coords[b]);
    std::vector<std::vector<std::pair<int, Sample>>> samples(coords.size());
    std::vector<char> ok(coords.size(), 1);
    for_each_index(exec, static_cast<std::ptrdiff_t>(coords.size()), [&](std::ptrdiff_t b) {
      for_each_sample(coords[b], [&](int i, const Sample& s) {
        const double wv = blocks[b] ? blocks[b]->voxels[i].weight : 0.0;
        if (wv - s.w < -1e-9 * std::max(1.0, wv)) ok[b] = 0;
        samples[b].emplace_back(i, s);
      });
    });
    if (std::find(ok.begin(), ok.end(), 0) != ok.end())
      throw DeintegrationMismatch("de-integration removes weight the volume does not hold");
    for_each_index(exec, static_cast<std::ptrdiff_t>(coords.size()), [&](std::ptrdiff_t b) {
      if (!blocks[b]) return;
      for (const auto& [i, s] : samples[b]) {
        Voxel& vox = blocks[b]->voxels[i];
        vox.sdf_sum -= s.w * s.d;
        vox.weight -= s.w;
        for (int ch = 0; ch < 3; ++ch) vox.color_sum[ch] -= s.color[ch];
        if (vox.weight <= 1e-12) vox = Voxel{};
      }
    });
  } else {
    for (const auto& c : coords) blocks_.insert(c);
    for (std::size_t b = 0; b < coords.size(); ++b) blocks[b] = blocks_.find(coords[b]);
    for_each_index(exec, static_cast<std::ptrdiff_t>(coords.size()), [&](std::ptrdiff_t b) {
      VoxelBlock& blk = *blocks[b];
      for_each_sample(coords[b], [&](int i, const Sample& s) {
        Voxel& vox = blk.voxels[i];
        vox.sdf_sum += s.w * s.d;
        vox.weight += s.w;
        for (int ch = 0; ch < 3; ++ch) vox.color_sum[ch] += s.color[ch];
      });
    });
  }

  // Only blocks holding weight stay allocated.
  for (std::size_t b = 0; b < coords.size(); ++b)
    if (blocks[b] && blocks[b]->empty()) blocks_.erase(coords[b]);
}

void TsdfVolume::integrate(const RgbdFrame& frame, const Intrinsics& k, const RigidTransform& pose, Execution exec) {
  update<false>(frame, k, pose, exec);
}

void TsdfVolume::deintegrate(const RgbdFrame& frame, const Intrinsics& k, const RigidTransform& pose,
                             Execution exec) {
  update<true>(frame, k, pose, exec);
}

void TsdfVolume::restore_block(const VoxelBlock& b) {
  if (b.empty()) {
    blocks_.erase(b.coord);
    return;
  }
  blocks_.insert(b.coord) = b;
}

std::optional<VoxelValue> TsdfVolume::voxel(const VoxelCoord& v) const {
  const BlockCoord b(floor_div(v.x(), kBlockSide), floor_div(v.y(), kBlockSide), floor_div(v.z(), kBlockSide));
  const VoxelBlock* blk = blocks_.find(b);
  if (!blk) return std::nullopt;
  const VoxelCoord l = v - b * kBlockSide;
  const Voxel& vox = blk->voxels[VoxelBlock::index(l.x(), l.y(), l.z())];
  if (vox.weight <= 0.0) return std::nullopt;
  VoxelValue out;
  out.sdf = vox.sdf();
  out.weight = vox.weight;
  out.color = Eigen::Vector3f(vox.color_sum[0], vox.color_sum[1], vox.color_sum[2]) / float(vox.weight);
  return out;
}

VolumeDifference compare_volumes(const TsdfVolume& a, const TsdfVolume& b) {
  std::vector<BlockCoord> coords = a.block_coords();
  const std::vector<BlockCoord> cb = b.block_coords();
  coords.insert(coords.end(), cb.begin(), cb.end());
  std::sort(coords.begin(), coords.end(), zyx_less);
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());

  VolumeDifference out;
  static const VoxelBlock kEmpty{};
  for (const auto& c : coords) {
    const VoxelBlock* ba = a.block(c);
    const VoxelBlock* bb = b.block(c);
    const VoxelBlock& ra = ba ? *ba : kEmpty;
    const VoxelBlock& rb = bb ? *bb : kEmpty;
    for (int i = 0; i < kBlockVoxels; ++i) {
      const Voxel& va = ra.voxels[i];
      const Voxel& vb = rb.voxels[i];
      if ((va.weight > 0.0) != (vb.weight > 0.0)) out.same_support = false;
      out.max_weight_diff = std::max(out.max_weight_diff, std::abs(va.weight - vb.weight));
      if (va.weight > 0.0 && vb.weight > 0.0)
        out.max_sdf_diff = std::max(out.max_sdf_diff, std::abs(va.sdf() - vb.sdf()));
    }
  }
  return out;
}

}  // namespace gcf
