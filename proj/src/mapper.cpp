#include "gcf/mapper.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <set>
#include <stdexcept>

namespace gcf {

int Chunk::valid_count() const {
  return static_cast<int>(std::count(frame_valid.begin(), frame_valid.end(), 1));
}

int Keyframe::representative_count() const {
  return groups.empty() ? 0 : *std::max_element(groups.begin(), groups.end()) + 1;
}

int GlobalTrajectory::registered() const {
  return static_cast<int>(std::count(valid.begin(), valid.end(), 1));
}

Chunk process_chunk(std::span<const FrameInput* const> frames, const MapperConfig& config, int id) {
  const int n = static_cast<int>(frames.size());
  Chunk chunk;
  chunk.id = id;
  for (const auto* f : frames) chunk.frames.push_back(f->index);
  chunk.local_poses.assign(n, RigidTransform::identity());
  chunk.frame_valid.assign(n, 0);

  std::vector<CorrespondenceSet> sets;
  std::vector<int> degree(n, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const auto& a = *frames[i];
      const auto& b = *frames[j];
      const auto matches = match_descriptors(a.keypoints, b.keypoints, config.match);
      CascadeResult r = filter_pair(matches, a.keypoints, b.keypoints, a.cache, b.cache, config.filter, i, j);
      if (!r.set.valid) continue;
      ++degree[i];
      ++degree[j];
      sets.push_back(std::move(r.set));
    }
  }
  const auto first = std::find_if(degree.begin(), degree.end(), [](int d) { return d > 0; });
  if (first == degree.end()) return chunk;
  chunk.anchor = static_cast<int>(first - degree.begin());

  // Problem index 0 is the anchor; the remaining frames keep their order.
  std::vector<int> order{chunk.anchor}, slot(n);
  for (int f = 0; f < n; ++f)
    if (f != chunk.anchor) order.push_back(f);
  for (int k = 0; k < n; ++k) slot[order[k]] = k;

  AlignmentProblem problem;
  problem.poses.assign(n, RigidTransform::identity());
  problem.active.assign(n, 0);
  for (int k = 0; k < n; ++k) {
    problem.active[k] = degree[order[k]] > 0;
    problem.caches.push_back(&frames[order[k]]->cache);
  }
  for (auto s : sets) {
    s.frame_i = slot[s.frame_i];
    s.frame_j = slot[s.frame_j];
    problem.sets.push_back(std::move(s));
  }
  solve_with_pruning(problem, config.weights, config.chunk_solver, config.prune_threshold);

  for (int k = 0; k < n; ++k) {
    chunk.local_poses[order[k]] = problem.poses[k];
    chunk.frame_valid[order[k]] = problem.active[k];
  }
  for (auto s : problem.sets) {
    s.frame_i = order[s.frame_i];
    s.frame_j = order[s.frame_j];
    chunk.sets.push_back(std::move(s));
  }
  if (chunk.sets.empty()) std::fill(chunk.frame_valid.begin(), chunk.frame_valid.end(), 0);
  if (chunk.valid_count() < 2) return chunk;

  const ChunkVerification v = verify_chunk(chunk, frames, config);
  chunk.verify_error = v.worst_error;
  chunk.verified = v.pass;
  return chunk;
}

ChunkVerification verify_chunk(const Chunk& chunk, std::span<const FrameInput* const> frames,
                               const MapperConfig& config) {
  const int n = static_cast<int>(chunk.frames.size());
  std::set<std::pair<int, int>> linked;
  for (const auto& s : chunk.sets) linked.insert(std::minmax(s.frame_i, s.frame_j));

  ChunkVerification out;
  for (int i = 0; i < n; ++i) {
    if (!chunk.frame_valid[i]) continue;
    for (int j = i + 1; j < n; ++j) {
      if (!chunk.frame_valid[j]) continue;
      const RigidTransform t_ij = chunk.local_poses[j].inverse() * chunk.local_poses[i];
      const VerifyResult r = dense_verify(frames[i]->cache, frames[j]->cache, t_ij, config.filter,
                                          config.chunk_max_error);
      bool fail = r.error > config.chunk_max_error;
      if (linked.count({i, j}) && !r.pass) fail = true;
      if (r.error >= out.worst_error) {
        out.worst_error = r.error;
        out.worst_i = i;
        out.worst_j = j;
      }
      if (fail) out.pass = false;
    }
  }
  return out;
}

namespace {

int find_root(std::vector<int>& parent, int x) {
  while (parent[x] != x) x = parent[x] = parent[parent[x]];
  return x;
}

std::vector<FeatureCluster> collect(std::vector<int>& parent, std::span<const Vec3d> points) {
  std::vector<FeatureCluster> clusters;
  std::vector<int> cluster_of(points.size(), -1);
  for (std::size_t k = 0; k < points.size(); ++k) {
    const int root = find_root(parent, static_cast<int>(k));
    if (cluster_of[root] < 0) {
      cluster_of[root] = static_cast<int>(clusters.size());
      clusters.emplace_back();
    }
    clusters[cluster_of[root]].members.push_back(static_cast<int>(k));
  }
  for (auto& c : clusters) {
    Vec3d sum = Vec3d::Zero();
    for (int m : c.members) sum += points[m];
    c.position = sum / double(c.members.size());
  }
  return clusters;
}

}  // namespace

std::vector<FeatureCluster> merge_features(std::span<const Vec3d> points, double radius) {
  std::vector<int> parent(points.size());
  std::iota(parent.begin(), parent.end(), 0);
  for (std::size_t a = 0; a < points.size(); ++a)
    for (std::size_t b = a + 1; b < points.size(); ++b)
      if ((points[a] - points[b]).norm() < radius)
        parent[find_root(parent, int(a))] = find_root(parent, int(b));

  for (;;) {
    std::vector<FeatureCluster> clusters = collect(parent, points);
    bool merged = false;
    for (std::size_t a = 0; a < clusters.size() && !merged; ++a) {
      for (std::size_t b = a + 1; b < clusters.size() && !merged; ++b) {
        if ((clusters[a].position - clusters[b].position).norm() < radius) {
          parent[find_root(parent, clusters[a].members.front())] = find_root(parent, clusters[b].members.front());
          merged = true;
        }
      }
    }
    if (!merged) return clusters;
  }
}

Keyframe build_keyframe(const Chunk& chunk, std::span<const FrameInput* const> frames, const MapperConfig& config) {
  Keyframe kf;
  kf.chunk = chunk.id;
  kf.frame = chunk.keyframe_frame();

  std::vector<std::pair<int, int>> instances;  // (local frame, keypoint)
  std::set<std::pair<int, int>> seen;
  auto add = [&](int f, int kp) {
    if (seen.insert({f, kp}).second) instances.emplace_back(f, kp);
  };
  for (const auto& s : chunk.sets) {
    if (!s.valid || !chunk.frame_valid[s.frame_i] || !chunk.frame_valid[s.frame_j]) continue;
    for (const auto& c : s.pairs) {
      add(s.frame_i, c.kp_i);
      add(s.frame_j, c.kp_j);
    }
  }
  std::vector<Vec3d> positions;
  positions.reserve(instances.size());
  for (const auto& [f, k] : instances) positions.push_back(chunk.local_poses[f] * frames[f]->keypoints[k].point_cam);

  const std::vector<FeatureCluster> clusters = merge_features(positions, config.merge_radius);
  for (std::size_t g = 0; g < clusters.size(); ++g) {
    for (int m : clusters[g].members) {
      const auto& [f, k] = instances[m];
      Keypoint kp = frames[f]->keypoints[k];
      kp.point_cam = clusters[g].position;
      kp.depth = kp.point_cam.z();
      kf.features.push_back(std::move(kp));
      kf.groups.push_back(static_cast<int>(g));
    }
  }
  return kf;
}

std::vector<RawMatch> unique_group_matches(std::span<const RawMatch> matches, std::span<const int> groups_a,
                                           std::span<const int> groups_b) {
  std::set<int> used_a, used_b;
  std::vector<RawMatch> out;
  for (const auto& m : matches) {
    const int ga = groups_a.empty() ? m.kp_a : groups_a[m.kp_a];
    const int gb = groups_b.empty() ? m.kp_b : groups_b[m.kp_b];
    if (used_a.count(ga) || used_b.count(gb)) continue;
    used_a.insert(ga);
    used_b.insert(gb);
    out.push_back(m);
  }
  return out;
}

// ---- Mapper ----------------------------------------------------------------

Mapper::Mapper(MapperConfig config) : config_(std::move(config)) {
  if (config_.chunk_size < 2) throw std::invalid_argument("chunk_size must be at least 2");
}

std::optional<RigidTransform> Mapper::best_known_pose(int f) const {
  for (int k = static_cast<int>(chunks_.size()) - 1; k >= 0; --k) {
    const Chunk& chunk = chunks_[k];
    if (chunk.frames.front() > f || chunk.frames.back() < f) continue;
    const int kf = chunk_keyframe_[k];
    const int local = f - chunk.frames.front();
    if (kf >= 0 && keyframes_[kf].status == KeyframeStatus::Valid && chunk.frame_valid[local])
      return keyframes_[kf].global_pose * chunk.local_poses[local];
  }
  return provisional_[f];
}

std::optional<RigidTransform> Mapper::frame_to_frame(const FrameInput& frame) const {
  if (frame.index == 0) return std::nullopt;
  const FrameInput& prev = frames_[frame.index - 1];
  const auto matches = match_descriptors(prev.keypoints, frame.keypoints, config_.match);
  const CorrespondenceSet set = keypoint_filter(matches, prev.keypoints, frame.keypoints, config_.filter);
  if (!set.valid) return std::nullopt;
  return set.t_ij.inverse();
}

std::optional<RigidTransform> Mapper::bootstrap_pose(const FrameInput& frame) const {
  const int f = frame.index;
  if (f == 0) return RigidTransform::identity();
  if (odometry_[f])
    if (const auto base = best_known_pose(f - 1)) return *base * *odometry_[f];
  return relocalize(frame);
}

std::optional<RigidTransform> Mapper::relocalize(const FrameInput& frame) const {
  std::optional<RigidTransform> best;
  std::size_t best_pairs = 0;
  for (const auto& kf : keyframes_) {
    if (kf.status != KeyframeStatus::Valid || kf.features.empty()) continue;
    const auto raw = match_descriptors(kf.features, frame.keypoints, config_.match, kf.groups, {});
    const auto matches = unique_group_matches(raw, kf.groups, {});
    const CascadeResult r = filter_pair(matches, kf.features, frame.keypoints, frames_[kf.frame].cache,
                                        frame.cache, config_.filter, kf.frame, frame.index);
    if (!r.set.valid || r.set.pairs.size() <= best_pairs) continue;
    best_pairs = r.set.pairs.size();
    best = kf.global_pose * r.set.t_ij.inverse();
  }
  return best;
}

std::optional<MapperEvent> Mapper::add_frame(FrameInput frame) {
  if (frame.index != frame_count())
    throw std::invalid_argument("frames must arrive with consecutive indices starting at 0");
  odometry_.push_back(frame_to_frame(frame));
  provisional_.push_back(bootstrap_pose(frame));
  frames_.push_back(std::move(frame));
  const int last = frame_count() - 1;
  if (last - next_chunk_start_ + 1 < config_.chunk_size) return std::nullopt;
  MapperEvent ev = solve_chunk(next_chunk_start_, last);
  next_chunk_start_ = last;
  return ev;
}

std::vector<MapperEvent> Mapper::finish(bool dense_global) {
  std::vector<MapperEvent> events;
  const int last = frame_count() - 1;
  if (last - next_chunk_start_ + 1 >= 2) {
    events.push_back(solve_chunk(next_chunk_start_, last));
    next_chunk_start_ = last;
  }
  SolverConfig batch = config_.global_solver;
  batch.max_iterations = std::max(batch.max_iterations, config_.final_solver.max_iterations);
  events.push_back(optimize_global(batch));
  if (dense_global) events.push_back(optimize_global(config_.final_solver));
  return events;
}

MapperEvent Mapper::solve_chunk(int first, int last) {
  std::vector<const FrameInput*> ptrs;
  for (int f = first; f <= last; ++f) ptrs.push_back(&frames_[f]);
  Chunk chunk = process_chunk(ptrs, config_, static_cast<int>(chunks_.size()));
  MapperEvent ev;
  ev.chunk = chunk.id;
  ev.chunk_verified = chunk.verified;
  chunks_.push_back(std::move(chunk));
  chunk_keyframe_.push_back(-1);
  const Chunk& c = chunks_.back();
  if (!c.verified) return ev;

  Keyframe kf = build_keyframe(c, ptrs, config_);
  chunk_keyframe_.back() = static_cast<int>(keyframes_.size());
  add_keyframe(std::move(kf));
  MapperEvent solved = optimize_global(config_.global_solver);
  ev.stats = std::move(solved.stats);
  ev.global_sets = solved.global_sets;
  ev.keyframe_valid = keyframes_.back().status == KeyframeStatus::Valid;
  return ev;
}

void Mapper::add_keyframe(Keyframe kf) {
  const int idx = static_cast<int>(keyframes_.size());
  std::optional<RigidTransform> preferred;
  const int c = kf.chunk;
  if (c > 0 && chunk_keyframe_[c - 1] >= 0) {
    const Chunk& prev = chunks_[c - 1];
    const Keyframe& prev_kf = keyframes_[chunk_keyframe_[c - 1]];
    if (prev_kf.status == KeyframeStatus::Valid && prev.frames.back() == kf.frame && prev.frame_valid.back())
      preferred = prev_kf.global_pose * prev.local_poses.back();
  }

  if (idx == 0) {
    kf.global_pose = provisional_[kf.frame].value_or(RigidTransform::identity());
    kf.status = KeyframeStatus::Valid;
    keyframes_.push_back(std::move(kf));
    return;
  }

  const CachedFrame& cache_new = frames_[kf.frame].cache;
  for (int j = 0; j < idx; ++j) {
    const Keyframe& old = keyframes_[j];
    KeyframePairRecord rec;
    rec.kf_a = j;
    rec.kf_b = idx;
    const auto raw = match_descriptors(old.features, kf.features, config_.match, old.groups, kf.groups);
    const auto matches = unique_group_matches(raw, old.groups, kf.groups);
    if (matches.size() >= 3) {
      std::vector<Vec3d> p, q;
      for (const auto& m : matches) {
        p.push_back(old.features[m.kp_a].point_cam);
        q.push_back(kf.features[m.kp_b].point_cam);
      }
      rec.raw_transform = kabsch(p, q).transform;
    }
    CascadeResult r = filter_pair(matches, old.features, kf.features, frames_[old.frame].cache, cache_new,
                                  config_.filter, j, idx);
    rec.raw = r.raw_proposal;
    rec.keypoint = r.passed_area;
    rec.verified = r.passed_dense;
    if (r.passed_keypoint) rec.filtered_transform = r.keypoint_transform;
    pair_records_.push_back(rec);
    if (r.set.valid) global_sets_.push_back(std::move(r.set));
  }
  kf.status = KeyframeStatus::CandidateInvalid;
  keyframes_.push_back(std::move(kf));
  refresh_connectivity(idx, preferred);
}

void Mapper::refresh_connectivity(std::optional<int> preferred, const std::optional<RigidTransform>& preferred_pose) {
  const int n = static_cast<int>(keyframes_.size());
  std::vector<std::vector<int>> adj(n);
  for (std::size_t s = 0; s < global_sets_.size(); ++s) {
    adj[global_sets_[s].frame_i].push_back(static_cast<int>(s));
    adj[global_sets_[s].frame_j].push_back(static_cast<int>(s));
  }
  std::vector<char> reached(n, 0);
  std::queue<int> q;
  reached[0] = 1;
  q.push(0);
  while (!q.empty()) {
    const int a = q.front();
    q.pop();
    for (int s : adj[a]) {
      const CorrespondenceSet& set = global_sets_[s];
      const int b = set.frame_i == a ? set.frame_j : set.frame_i;
      if (reached[b]) continue;
      reached[b] = 1;
      q.push(b);
      Keyframe& kb = keyframes_[b];
      if (kb.status == KeyframeStatus::Valid) continue;
      if (preferred && *preferred == b && preferred_pose) {
        kb.global_pose = *preferred_pose;
      } else {
        // t_ij maps frame_i space into frame_j space.
        const RigidTransform& pa = keyframes_[a].global_pose;
        kb.global_pose = set.frame_i == a ? pa * set.t_ij.inverse() : pa * set.t_ij;
      }
    }
  }
  for (int k = 0; k < n; ++k)
    keyframes_[k].status = reached[k] ? KeyframeStatus::Valid : KeyframeStatus::CandidateInvalid;
}

MapperEvent Mapper::optimize_global(const SolverConfig& solver) {
  MapperEvent ev;
  const int n = static_cast<int>(keyframes_.size());
  if (n < 2) return ev;
  AlignmentProblem problem;
  std::vector<CorrespondenceSet> parked;  // sets touching candidate-invalid keyframes
  for (const auto& kf : keyframes_) {
    problem.poses.push_back(kf.global_pose);
    problem.active.push_back(kf.status == KeyframeStatus::Valid);
    problem.caches.push_back(&frames_[kf.frame].cache);
  }
  for (auto& s : global_sets_) {
    if (problem.active[s.frame_i] && problem.active[s.frame_j])
      problem.sets.push_back(std::move(s));
    else
      parked.push_back(std::move(s));
  }
  const std::vector<char> before = problem.active;
  PrunedSolve solved = solve_with_pruning(problem, config_.weights, solver, config_.prune_threshold);
  for (int k = 0; k < n; ++k) {
    if (before[k]) keyframes_[k].global_pose = problem.poses[k];
    if (before[k] && !problem.active[k]) keyframes_[k].status = KeyframeStatus::CandidateInvalid;
  }
  global_sets_ = std::move(problem.sets);
  for (auto& s : parked) global_sets_.push_back(std::move(s));
  ev.stats = std::move(solved.solve.stats);
  ev.global_sets = static_cast<int>(global_sets_.size());
  return ev;
}

GlobalTrajectory Mapper::trajectory() const {
  const int n = frame_count();
  GlobalTrajectory t;
  t.poses.assign(n, RigidTransform::identity());
  t.valid.assign(n, 0);
  t.chunk.assign(n, -1);
  t.local_pose.assign(n, RigidTransform::identity());
  for (int f = 0; f < n; ++f) {
    t.timestamps.push_back(frames_[f].timestamp);
    if (provisional_[f]) t.poses[f] = *provisional_[f];
  }
  // Later chunks overwrite the shared frame of earlier ones.
  for (std::size_t c = 0; c < chunks_.size(); ++c) {
    const int k = chunk_keyframe_[c];
    if (k < 0 || keyframes_[k].status != KeyframeStatus::Valid) continue;
    const Chunk& chunk = chunks_[c];
    for (std::size_t l = 0; l < chunk.frames.size(); ++l) {
      if (!chunk.frame_valid[l]) continue;
      const int f = chunk.frames[l];
      t.poses[f] = keyframes_[k].global_pose * chunk.local_poses[l];
      t.valid[f] = 1;
      t.chunk[f] = static_cast<int>(c);
      t.local_pose[f] = chunk.local_poses[l];
    }
  }
  return t;
}

}  // namespace gcf
