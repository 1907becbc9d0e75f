// Command-line front end: run, eval, synth, mesh, config.

#include "gcf/config.hpp"
#include "gcf/dataset.hpp"
#include "gcf/evaluation.hpp"
#include "gcf/mesh.hpp"
#include "gcf/pipeline.hpp"
#include "gcf/synthetic.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

namespace {

// Process exit codes.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNotRegistered = 3;

struct RunArgs {
  std::string dataset;
  std::string synthetic;
  std::string config;
  std::string output = "out";
  bool save_volume = false;
  bool serial = false;
  bool batch = false;
  bool quiet = false;
};

int run(const RunArgs& a) {
  gcf::PipelineConfig config = a.config.empty() ? gcf::PipelineConfig{} : gcf::load_config(a.config);
  if (a.serial) config.parallel = false;
  if (a.batch) config.mode = gcf::PipelineMode::Batch;

  std::unique_ptr<gcf::Sequence> sequence;
  if (!a.synthetic.empty()) {
    sequence = std::make_unique<gcf::SyntheticSequence>(gcf::load_synthetic(a.synthetic));
  } else {
    gcf::TumOptions opt;
    opt.depth_scale = config.depth_scale;
    opt.max_difference = config.max_time_difference;
    auto tum = std::make_unique<gcf::TumSequence>(gcf::load_tum(a.dataset, opt));
    std::cerr << "stage=load associated=" << tum->size() << " dropped_depth=" << tum->dropped_depth()
              << " dropped_color=" << tum->dropped_color() << '\n';
    sequence = std::move(tum);
  }

  const gcf::EventLog log(a.quiet ? nullptr : &std::cerr);
  const gcf::PipelineResult result = gcf::run_pipeline(*sequence, config, log);
  gcf::write_outputs(a.output, result, a.save_volume);
  const gcf::EvalReport& r = result.report;
  std::cout << "registered " << r.registered << " / " << r.frames << '\n';
  if (r.ate) std::cout << "ate_rmse_m " << *r.ate << '\n';
  return r.registered == 0 ? kExitNotRegistered : kExitOk;
}

int eval(const std::string& estimate, const std::string& ground_truth, double max_difference) {
  const auto est = gcf::read_tum_trajectory(estimate);
  const auto gt = gcf::read_tum_trajectory(ground_truth);
  const gcf::AteResult r = gcf::ate_rmse(est, gt, max_difference);
  std::cout << std::setprecision(9) << "pairs " << r.pairs << "\nate_rmse_m " << r.rmse << '\n';
  return kExitOk;
}

int synth(const std::string& spec_path, const std::string& output, double depth_scale) {
  const gcf::SyntheticSequence seq(gcf::load_synthetic(spec_path));
  gcf::write_tum(output, seq, depth_scale);
  std::cout << "wrote " << seq.size() << " frames to " << output << '\n';
  return kExitOk;
}

int mesh(const std::string& volume_path, const std::string& output, bool serial) {
  const gcf::TsdfVolume volume = gcf::load_volume(volume_path);
  const gcf::Mesh m = gcf::extract_mesh(volume, serial ? gcf::Execution::Serial : gcf::Execution::Parallel);
  const std::filesystem::path out(output);
  if (out.extension() == ".obj")
    gcf::write_obj(out, m);
  else
    gcf::write_ply(out, m);
  std::cout << "vertices " << m.vertices.size() << "\ntriangles " << m.triangles.size() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-D reconstruction with global pose optimization"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Reconstruct a dataset or a synthetic sequence");
  auto* source = run_cmd->add_option_group("source");
  source->add_option("--dataset", run_args.dataset, "TUM-layout dataset directory")->check(CLI::ExistingDirectory);
  source->add_option("--synthetic", run_args.synthetic, "Synthetic sequence spec (JSON)")->check(CLI::ExistingFile);
  source->require_option(1);
  run_cmd->add_option("--config", run_args.config, "Config file (JSON)")->check(CLI::ExistingFile);
  run_cmd->add_option("-o,--output", run_args.output, "Output directory");
  run_cmd->add_flag("--save-volume", run_args.save_volume, "Also write volume.bin");
  run_cmd->add_flag("--serial", run_args.serial, "Single-threaded kernels");
  run_cmd->add_flag("--batch", run_args.batch, "Fuse once after mapping instead of online");
  run_cmd->add_flag("-q,--quiet", run_args.quiet, "No event log on stderr");

  std::string estimate, ground_truth;
  double max_difference = 0.02;
  auto* eval_cmd = app.add_subcommand("eval", "ATE of a trajectory against ground truth");
  eval_cmd->add_option("estimate", estimate, "Estimated trajectory (TUM)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("ground_truth", ground_truth, "Ground-truth trajectory (TUM)")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--max-difference", max_difference, "Timestamp association tolerance (s)");

  std::string spec_path, synth_out;
  double depth_scale = 5000.0;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic sequence in the TUM layout");
  synth_cmd->add_option("spec", spec_path, "Synthetic sequence spec (JSON)")->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("-o,--output", synth_out, "Output directory")->required();
  synth_cmd->add_option("--depth-scale", depth_scale, "Depth PNG units per meter");

  std::string volume_path, mesh_out;
  bool mesh_serial = false;
  auto* mesh_cmd = app.add_subcommand("mesh", "Extract a mesh from a saved volume");
  mesh_cmd->add_option("volume", volume_path, "volume.bin from run --save-volume")->required()->check(CLI::ExistingFile);
  mesh_cmd->add_option("-o,--output", mesh_out, "Output mesh (.ply or .obj)")->required();
  mesh_cmd->add_flag("--serial", mesh_serial, "Single-threaded extraction");

  auto* config_cmd = app.add_subcommand("config", "Print the default config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return run(run_args);
    if (eval_cmd->parsed()) return eval(estimate, ground_truth, max_difference);
    if (synth_cmd->parsed()) return synth(spec_path, synth_out, depth_scale);
    if (mesh_cmd->parsed()) return mesh(volume_path, mesh_out, mesh_serial);
    if (config_cmd->parsed()) {
      std::cout << gcf::dump_config(gcf::PipelineConfig{}) << '\n';
      return kExitOk;
    }
  } catch (const gcf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const gcf::Underdetermined& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}
