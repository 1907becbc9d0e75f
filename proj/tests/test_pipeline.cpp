#include "support.hpp"

#include "gcf/config.hpp"
#include "gcf/keypoint_io.hpp"
#include "gcf/pipeline.hpp"

#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gcf;
using namespace gcf::test;

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gcf_test_pipeline" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

PipelineConfig coarse(bool parallel = true) {
  PipelineConfig c;
  c.tsdf.voxel_size = 0.02;
  c.parallel = parallel;
  return c;
}

SyntheticSequence short_loop(int frames) {
  SyntheticSpec s = loop_spec(300, 320, 240, 0.0);
  s.trajectory.resize(frames);
  return SyntheticSequence(s);
}

const SyntheticSequence& loop25() {
  static const SyntheticSequence seq = short_loop(25);
  return seq;
}

const PipelineResult& loop25_result() {
  static const PipelineResult r = run_pipeline(loop25(), coarse());
  return r;
}

bool same_poses(const GlobalTrajectory& a, const GlobalTrajectory& b) {
  if (a.poses.size() != b.poses.size() || a.valid != b.valid) return false;
  for (std::size_t f = 0; f < a.poses.size(); ++f)
    if (a.poses[f].rotation != b.poses[f].rotation || a.poses[f].translation != b.poses[f].translation) return false;
  return true;
}

}  // namespace

TEST_CASE("static camera") {
  const SyntheticSequence seq(static_spec(30));
  PipelineConfig c = coarse();
  c.tsdf.voxel_size = 0.01;
  const PipelineResult r = run_pipeline(seq, c);
  CHECK(r.report.frames == 30);
  CHECK(r.report.registered == 30);
  CHECK(r.report.registered + r.report.unregistered == r.report.frames);
  REQUIRE(r.report.ate);
  CHECK(*r.report.ate < 0.001);
  // Every pose is the first one; the ATE alone cannot see rotations here.
  for (int f = 0; f < 30; ++f) CHECK(max_abs_difference(r.trajectory.poses[f], r.trajectory.poses[0]) < 0.001);
  CHECK(r.report.mesh_triangles > 1000);
  CHECK(r.report.mesh_triangles == r.mesh.triangles.size());
}

TEST_CASE("short loop registers every frame") {
  const PipelineResult& r = loop25_result();
  CHECK(r.report.registered == 25);
  CHECK(r.report.chunks == 3);
  CHECK(r.report.keyframes == 3);
  REQUIRE(r.report.ate);
  CHECK(*r.report.ate < 0.005);
  REQUIRE(r.report.ate_chain);
  REQUIRE(r.report.loop_closure.size() == 4);
  CHECK(r.report.loop_closure[3].stage == "Opt");
  // Keyframes 0 and 2 are registered to each other but share less than the
  // overlap needed to count as a true pair, so they score as a false positive.
  const PrecisionRecall& opt = r.report.loop_closure[3].pr;
  CHECK(opt.truth == 2);
  CHECK(opt.correct == 2);
  CHECK(opt.proposed == 3);
  CHECK(opt.recall == 1.0);
  for (const char* stage : {"load", "cache", "features", "mapping", "reintegration", "finish", "fusion", "mesh"})
    CHECK(r.report.timings.count(stage) == 1);
}

TEST_CASE("runs are deterministic across repeats and thread counts") {
  const PipelineResult& a = loop25_result();
  const PipelineResult b = run_pipeline(loop25(), coarse(true));
  const PipelineResult serial = run_pipeline(loop25(), coarse(false));
  CHECK(same_poses(a.trajectory, b.trajectory));
  CHECK(same_poses(a.trajectory, serial.trajectory));
  const fs::path dir = fresh_dir("determinism");
  write_outputs(dir / "a", a);
  write_outputs(dir / "b", b);
  write_outputs(dir / "s", serial);
  CHECK(file_bytes(dir / "a" / "mesh.ply") == file_bytes(dir / "b" / "mesh.ply"));
  CHECK(file_bytes(dir / "a" / "mesh.ply") == file_bytes(dir / "s" / "mesh.ply"));
  CHECK(file_bytes(dir / "a" / "trajectory.txt") == file_bytes(dir / "s" / "trajectory.txt"));
}

TEST_CASE("online fusion converges to the batch volume") {
  const PipelineResult& online = loop25_result();
  PipelineConfig c = coarse();
  c.mode = PipelineMode::Batch;
  const PipelineResult batch = run_pipeline(loop25(), c);
  CHECK(same_poses(online.trajectory, batch.trajectory));
  REQUIRE(online.volume);
  REQUIRE(batch.volume);
  const VolumeDifference d = compare_volumes(*online.volume, *batch.volume);
  CHECK(d.same_support);
  CHECK(d.max_weight_diff == 0.0);
  CHECK(d.max_sdf_diff < 1e-5);
}

TEST_CASE("precomputed keypoints drive the mapper") {
  const fs::path dir = fresh_dir("keypoints");
  KeypointTable table;
  const ReferenceDetector det;
  for (int f = 0; f < loop25().size(); ++f) table[f] = det.detect(loop25().frame(f), loop25().intrinsics());
  write_keypoints_binary(dir / "kp.bin", table);
  PipelineConfig c = coarse();
  c.keypoints = dir / "kp.bin";
  c.reconstruct = false;
  const PipelineResult r = run_pipeline(loop25(), c);
  // The file holds single-precision pixels, which can flip individual match
  // decisions, so the trajectory is close to the detector run but not equal.
  CHECK(r.report.registered == 25);
  REQUIRE(r.report.ate);
  CHECK(*r.report.ate < 0.005);
  const GlobalTrajectory& ref = loop25_result().trajectory;
  for (int f = 0; f < loop25().size(); ++f) CHECK(max_abs_difference(r.trajectory.poses[f], ref.poses[f]) < 0.005);
  CHECK(same_poses(r.trajectory, run_pipeline(loop25(), c).trajectory));
  CHECK_FALSE(r.volume);
  CHECK(r.mesh.empty());
}

TEST_CASE("a sequence that never registers") {
  SyntheticSpec s = loop_spec(300, 320, 240, 0.0);
  s.trajectory.resize(12);
  s.occlusions = {{0, 12}};
  const PipelineResult r = run_pipeline(SyntheticSequence(s), coarse());
  CHECK(r.report.registered == 0);
  CHECK(r.report.unregistered == 12);
  // Frame 0 anchors the world and always has a pose.
  CHECK(r.report.tracking_lost == 11);
  CHECK_FALSE(r.report.ate);
  CHECK(r.mesh.empty());
  const fs::path dir = fresh_dir("lost");
  write_outputs(dir, r);
  CHECK(read_tum_trajectory(dir / "trajectory.txt").empty());
}

TEST_CASE("occluded frames are reported unregistered and tracking resumes") {
  SyntheticSpec s = loop_spec(300, 320, 240, 0.0);
  s.trajectory.resize(40);
  s.occlusions = {{14, 20}};
  PipelineConfig c = coarse();
  c.reconstruct = false;
  const PipelineResult r = run_pipeline(SyntheticSequence(s), c);
  for (int f = 14; f < 20; ++f) CHECK_FALSE(r.trajectory.valid[f]);
  for (int f = 20; f < 40; ++f) CHECK(r.trajectory.valid[f]);
  CHECK(r.report.registered == 34);
  REQUIRE(r.report.ate);
  CHECK(*r.report.ate < 0.01);
}

TEST_CASE("outputs") {
  const PipelineResult& r = loop25_result();
  const fs::path dir = fresh_dir("outputs");
  write_outputs(dir, r, true);
  const auto traj = read_tum_trajectory(dir / "trajectory.txt");
  REQUIRE(traj.size() == 25);
  for (int f = 0; f < 25; ++f) {
    CHECK(std::abs(traj[f].timestamp - loop25().timestamp(f)) < 1e-6);
    CHECK(max_abs_difference(traj[f].pose, r.trajectory.poses[f]) < 1e-8);
  }
  CHECK(read_ply(dir / "mesh.ply").triangles == r.mesh.triangles);
  const TsdfVolume vol = load_volume(dir / "volume.bin");
  CHECK(compare_volumes(vol, *r.volume).max_sdf_diff == 0.0);
  std::ifstream is(dir / "report.json");
  const nlohmann::json j = nlohmann::json::parse(is);
  CHECK(j["frames"] == 25);
  CHECK(j["registered"] == 25);
  CHECK(j["ate_m"].get<double>() == *r.report.ate);
  CHECK(j["loop_closure"].size() == 4);
  CHECK(j["mesh_triangles"] == r.mesh.triangles.size());
}

TEST_CASE("event lines") {
  std::ostringstream os;
  const EventLog log(&os);
  log.event("chunk", {{"id", "3"}, {"verified", "1"}});
  const std::string line = os.str();
  CHECK(line.rfind("t=", 0) == 0);
  CHECK(line.find(" stage=chunk id=3 verified=1\n") != std::string::npos);
  EventLog().event("silent");
}
