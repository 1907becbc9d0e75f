#pragma once

#include "gcf/dataset.hpp"
#include "gcf/evaluation.hpp"
#include "gcf/features.hpp"
#include "gcf/mapper.hpp"
#include "gcf/mesh.hpp"
#include "gcf/tsdf.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace gcf {

enum class PipelineMode {
  Online,  // per-frame re-integration steps while mapping
  Batch,   // map everything, then fuse once at the final poses
};

struct PipelineConfig {
  MapperConfig mapper;
  CacheParams cache;
  ReferenceDetectorParams detector;
  std::filesystem::path keypoints;  // precomputed keypoints; empty runs the reference detector
  TsdfParams tsdf;
  int n_fix = 10;
  PipelineMode mode = PipelineMode::Online;
  bool reconstruct = true;
  bool dense_global = true;
  bool parallel = true;  // OpenMP kernels; results are identical either way
  // Dataset loading.
  double depth_scale = 5000.0;
  double max_time_difference = 0.02;  // s
};

// Applies the config's execution mode to every solver and kernel setting.
void apply_execution(PipelineConfig& config);

struct StagePr {
  std::string stage;  // Raw, +KF, +Verify, Opt
  PrecisionRecall pr;
};

struct EvalReport {
  int frames = 0;
  int registered = 0;
  int unregistered = 0;
  int tracking_lost = 0;  // frames without a provisional pose
  int chunks = 0;
  int keyframes = 0;
  int valid_keyframes = 0;
  int global_sets = 0;
  std::optional<double> ate;        // registered frames, final poses
  std::optional<double> ate_chain;  // composed frame-to-frame odometry
  std::vector<StagePr> loop_closure;
  std::map<std::string, double> timings;  // seconds per stage
  std::size_t mesh_vertices = 0;
  std::size_t mesh_triangles = 0;
};

std::string report_to_json(const EvalReport& report);

// key=value event lines with elapsed time since construction.
class EventLog {
 public:
  explicit EventLog(std::ostream* out = nullptr) : out_(out), start_(std::chrono::steady_clock::now()) {}
  void event(const std::string& stage, const std::vector<std::pair<std::string, std::string>>& fields = {}) const;
  double elapsed() const;

 private:
  std::ostream* out_;
  std::chrono::steady_clock::time_point start_;
};

struct PipelineResult {
  GlobalTrajectory trajectory;
  std::vector<std::optional<RigidTransform>> provisional;
  Mesh mesh;
  EvalReport report;
  std::unique_ptr<TsdfVolume> volume;  // null when reconstruction is off
  std::unique_ptr<Mapper> mapper;
};

PipelineResult run_pipeline(const Sequence& sequence, const PipelineConfig& config, const EventLog& log = EventLog());

// Registered frames only.
std::vector<TimedPose> registered_poses(const GlobalTrajectory& trajectory);

// Writes trajectory.txt, mesh.ply and report.json into dir, plus volume.bin
// when save_volume is set.
void write_outputs(const std::filesystem::path& dir, const PipelineResult& result, bool save_volume = false);

}  // namespace gcf
