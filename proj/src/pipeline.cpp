#include "gcf/pipeline.hpp"

#include "gcf/keypoint_io.hpp"
#include "gcf/reintegration.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

namespace gcf {
namespace {

class StageTimer {
 public:
  explicit StageTimer(double& sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() { sink_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  double& sink_;
  std::chrono::steady_clock::time_point start_;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream ss;
  ss << std::setprecision(precision) << v;
  return ss.str();
}

// Frames covered by solved chunks take the mapper's current verdict.
void publish(const Mapper& mapper, ReintegrationManager& reint) {
  if (mapper.chunks().empty()) return;
  const GlobalTrajectory t = mapper.trajectory();
  const int solved = mapper.chunks().back().frames.back() + 1;
  for (int f = 0; f < solved; ++f) {
    if (t.valid[f])
      reint.set_optimized(f, t.poses[f]);
    else
      reint.invalidate(f);
  }
}

void evaluate(const Sequence& sequence, const Mapper& mapper, PipelineResult& result) {
  EvalReport& r = result.report;
  const auto gt = sequence.ground_truth();
  if (!gt) return;
  const GlobalTrajectory& t = result.trajectory;
  if (r.registered >= 3) r.ate = ate_rmse(t.poses, *gt, t.valid).rmse;

  // Pure frame-to-frame composition; a broken link restarts from the
  // relocalized pose.
  std::vector<RigidTransform> chain(t.poses.size());
  std::vector<char> chained(t.poses.size(), 0);
  for (int f = 0; f < static_cast<int>(chain.size()); ++f) {
    if (f > 0 && chained[f - 1] && mapper.odometry(f)) {
      chain[f] = chain[f - 1] * *mapper.odometry(f);
      chained[f] = 1;
    } else if (result.provisional[f]) {
      chain[f] = *result.provisional[f];
      chained[f] = 1;
    }
  }
  if (std::count(chained.begin(), chained.end(), 1) >= 3) r.ate_chain = ate_rmse(chain, *gt, chained).rmse;

  const auto& kfs = mapper.keyframes();
  if (kfs.size() < 2) return;
  LoopClosureTruth truth;
  for (const Keyframe& kf : kfs) {
    truth.caches.push_back(&mapper.frame(kf.frame).cache);
    truth.poses.push_back((*gt)[kf.frame]);
  }
  std::vector<PairProposal> raw, keypoint, verified, optimized;
  for (const KeyframePairRecord& rec : mapper.pair_records()) {
    if (rec.raw && rec.raw_transform) raw.push_back({rec.kf_a, rec.kf_b, *rec.raw_transform});
    if (rec.keypoint && rec.filtered_transform) keypoint.push_back({rec.kf_a, rec.kf_b, *rec.filtered_transform});
    if (rec.verified && rec.filtered_transform) verified.push_back({rec.kf_a, rec.kf_b, *rec.filtered_transform});
  }
  for (const CorrespondenceSet& s : mapper.global_sets()) {
    if (!s.valid || kfs[s.frame_i].status != KeyframeStatus::Valid || kfs[s.frame_j].status != KeyframeStatus::Valid)
      continue;
    optimized.push_back({s.frame_i, s.frame_j, s.t_ij});
  }
  r.loop_closure = {{"Raw", loop_closure_pr(raw, truth)},
                    {"+KF", loop_closure_pr(keypoint, truth)},
                    {"+Verify", loop_closure_pr(verified, truth)},
                    {"Opt", loop_closure_pr(optimized, truth)}};
}

}  // namespace

void apply_execution(PipelineConfig& config) {
  const Execution exec = config.parallel ? Execution::Parallel : Execution::Serial;
  config.mapper.chunk_solver.exec = exec;
  config.mapper.global_solver.exec = exec;
  config.mapper.final_solver.exec = exec;
}

void EventLog::event(const std::string& stage, const std::vector<std::pair<std::string, std::string>>& fields) const {
  if (!out_) return;
  std::ostringstream line;
  line << "t=" << std::fixed << std::setprecision(3) << elapsed() << " stage=" << stage;
  for (const auto& [k, v] : fields) line << ' ' << k << '=' << v;
  *out_ << line.str() << '\n';
}

double EventLog::elapsed() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["frames"] = r.frames;
  j["registered"] = r.registered;
  j["unregistered"] = r.unregistered;
  j["tracking_lost"] = r.tracking_lost;
  j["chunks"] = r.chunks;
  j["keyframes"] = r.keyframes;
  j["valid_keyframes"] = r.valid_keyframes;
  j["global_sets"] = r.global_sets;
  j["ate_m"] = r.ate ? nlohmann::json(*r.ate) : nlohmann::json(nullptr);
  j["ate_chain_m"] = r.ate_chain ? nlohmann::json(*r.ate_chain) : nlohmann::json(nullptr);
  j["loop_closure"] = nlohmann::json::array();
  for (const StagePr& s : r.loop_closure)
    j["loop_closure"].push_back({{"stage", s.stage},
                                 {"precision", s.pr.precision},
                                 {"recall", s.pr.recall},
                                 {"proposed", s.pr.proposed},
                                 {"correct", s.pr.correct},
                                 {"truth", s.pr.truth}});
  j["timings_s"] = r.timings;
  j["mesh_vertices"] = r.mesh_vertices;
  j["mesh_triangles"] = r.mesh_triangles;
  return j.dump(2);
}

std::vector<TimedPose> registered_poses(const GlobalTrajectory& trajectory) {
  std::vector<TimedPose> out;
  for (std::size_t f = 0; f < trajectory.poses.size(); ++f)
    if (trajectory.valid[f]) out.push_back({trajectory.timestamps[f], trajectory.poses[f]});
  return out;
}

PipelineResult run_pipeline(const Sequence& sequence, const PipelineConfig& config_in, const EventLog& log) {
  PipelineConfig config = config_in;
  apply_execution(config);
  const Execution exec = config.parallel ? Execution::Parallel : Execution::Serial;
  const Intrinsics& k = sequence.intrinsics();

  std::unique_ptr<FeatureDetector> detector;
  if (!config.keypoints.empty())
    detector = std::make_unique<FileDetector>(read_keypoints(config.keypoints));
  else
    detector = std::make_unique<ReferenceDetector>(config.detector);

  PipelineResult result;
  result.mapper = std::make_unique<Mapper>(config.mapper);
  Mapper& mapper = *result.mapper;
  auto& timing = result.report.timings;
  for (const char* stage : {"load", "cache", "features", "mapping", "reintegration", "finish", "fusion", "mesh"})
    timing[stage] = 0.0;

  // Re-integration revisits every frame many times, so frames stay resident
  // once loaded.
  std::vector<RgbdFrame> resident;
  std::unique_ptr<ReintegrationManager> reint;
  if (config.reconstruct) {
    result.volume = std::make_unique<TsdfVolume>(config.tsdf);
    reint = std::make_unique<ReintegrationManager>(
        *result.volume, k, [&resident](int f) { return resident.at(f); }, config.n_fix, exec);
  }
  const bool online = config.mode == PipelineMode::Online;

  log.event("start", {{"frames", std::to_string(sequence.size())},
                      {"mode", online ? "online" : "batch"},
                      {"width", std::to_string(k.width)},
                      {"height", std::to_string(k.height)}});
  for (int i = 0; i < sequence.size(); ++i) {
    RgbdFrame frame;
    {
      StageTimer t(timing["load"]);
      frame = sequence.frame(i);
      frame.index = i;
      if (reint) resident.push_back(frame);
    }
    FrameInput input;
    input.index = i;
    input.timestamp = sequence.timestamp(i);
    {
      StageTimer t(timing["cache"]);
      input.cache = build_cache(frame, k, config.cache);
      input.cache.index = i;
    }
    {
      StageTimer t(timing["features"]);
      input.keypoints = detector->detect(frame, k);
    }
    std::optional<MapperEvent> ev;
    {
      StageTimer t(timing["mapping"]);
      ev = mapper.add_frame(std::move(input));
    }
    if (ev) {
      log.event("chunk", {{"id", std::to_string(ev->chunk)},
                          {"verified", std::to_string(ev->chunk_verified)},
                          {"keyframe_valid", std::to_string(ev->keyframe_valid)},
                          {"global_sets", std::to_string(ev->global_sets)}});
    }
    if (reint && online) {
      StageTimer t(timing["reintegration"]);
      reint->add_frame(i, mapper.provisional_pose(i), &frame);
      if (ev) publish(mapper, *reint);
      const ReintegrationReport rep = reint->step();
      if (!rep.moved.empty() || !rep.removed.empty())
        log.event("reintegrate", {{"frame", std::to_string(i)},
                                  {"moved", std::to_string(rep.moved.size())},
                                  {"removed", std::to_string(rep.removed.size())},
                                  {"max_before", fmt(rep.max_distance_before)},
                                  {"max_after", fmt(rep.max_distance_after)}});
    }
  }

  {
    StageTimer t(timing["finish"]);
    for (const MapperEvent& ev : mapper.finish(config.dense_global))
      log.event("finish", {{"chunk", std::to_string(ev.chunk)}, {"global_sets", std::to_string(ev.global_sets)}});
  }
  result.trajectory = mapper.trajectory();
  for (int f = 0; f < mapper.frame_count(); ++f) result.provisional.push_back(mapper.provisional_pose(f));

  if (reint) {
    StageTimer t(timing["fusion"]);
    if (online) {
      publish(mapper, *reint);
      const int steps = reint->flush();
      log.event("fusion", {{"flush_steps", std::to_string(steps)}});
    } else {
      for (int f = 0; f < sequence.size(); ++f) {
        reint->add_frame(f, std::nullopt);
        if (result.trajectory.valid[f]) reint->set_optimized(f, result.trajectory.poses[f]);
      }
      reint->flush();
    }
  }
  if (result.volume) {
    StageTimer t(timing["mesh"]);
    result.mesh = extract_mesh(*result.volume, exec);
  }

  EvalReport& r = result.report;
  r.frames = sequence.size();
  r.registered = result.trajectory.registered();
  r.unregistered = r.frames - r.registered;
  r.tracking_lost = static_cast<int>(
      std::count_if(result.provisional.begin(), result.provisional.end(), [](const auto& p) { return !p; }));
  r.chunks = static_cast<int>(mapper.chunks().size());
  r.keyframes = static_cast<int>(mapper.keyframes().size());
  r.valid_keyframes = static_cast<int>(std::count_if(mapper.keyframes().begin(), mapper.keyframes().end(),
                                                     [](const Keyframe& kf) { return kf.status == KeyframeStatus::Valid; }));
  r.global_sets = static_cast<int>(mapper.global_sets().size());
  r.mesh_vertices = result.mesh.vertices.size();
  r.mesh_triangles = result.mesh.triangles.size();
  evaluate(sequence, mapper, result);

  std::vector<std::pair<std::string, std::string>> fields{{"registered", std::to_string(r.registered)},
                                                          {"unregistered", std::to_string(r.unregistered)}};
  if (r.ate) fields.emplace_back("ate", fmt(*r.ate));
  if (r.ate_chain) fields.emplace_back("ate_chain", fmt(*r.ate_chain));
  for (const auto& [stage, seconds] : timing) fields.emplace_back("time_" + stage, fmt(seconds, 4));
  log.event("done", fields);
  return result;
}

void write_outputs(const std::filesystem::path& dir, const PipelineResult& result, bool save_volume_dump) {
  std::filesystem::create_directories(dir);
  write_tum_trajectory(dir / "trajectory.txt", registered_poses(result.trajectory));
  if (result.volume) {
    write_ply(dir / "mesh.ply", result.mesh);
    if (save_volume_dump) save_volume(dir / "volume.bin", *result.volume);
  }
  std::ofstream report(dir / "report.json");
  report << report_to_json(result.report) << '\n';
  if (!report) throw std::runtime_error("failed writing " + (dir / "report.json").string());
}

}  // namespace gcf
