#include "gcf/config.hpp"

#include <json.hpp>

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace gcf {
namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Walks the config once per direction so reading and writing share one key list.
class Reader {
 public:
  explicit Reader(const json& root) : stack_{&root} {}

  template <class T>
  void operator()(const char* key, T& value) {
    const json& obj = *stack_.back();
    mark(key);
    if (!obj.contains(key)) return;
    try {
      if constexpr (std::is_same_v<T, std::filesystem::path>)
        value = obj.at(key).get<std::string>();
      else
        value = obj.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path() + key + ": " + e.what());
    }
  }

  void group(const char* key, const std::function<void()>& body) {
    const json& obj = *stack_.back();
    mark(key);
    if (!obj.contains(key)) return;
    const json& child = obj.at(key);
    if (!child.is_object()) throw ConfigError(path() + key + ": expected an object");
    names_.push_back(key);
    stack_.push_back(&child);
    seen_.emplace_back();
    body();
    check_unknown();
    seen_.pop_back();
    stack_.pop_back();
    names_.pop_back();
  }

  void finish() { check_unknown(); }

 private:
  void mark(const char* key) { seen_.back().insert(key); }
  std::string path() const {
    std::string p;
    for (const auto& n : names_) p += n + ".";
    return p;
  }
  void check_unknown() const {
    for (const auto& [k, v] : stack_.back()->items())
      if (!seen_.back().count(k)) throw ConfigError("unknown config key " + path() + k);
  }

  std::vector<const json*> stack_;
  std::vector<std::string> names_;
  std::vector<std::set<std::string>> seen_{1};
};

class Writer {
 public:
  template <class T>
  void operator()(const char* key, const T& value) {
    if constexpr (std::is_same_v<T, std::filesystem::path>)
      (*stack_.back())[key] = value.string();
    else
      (*stack_.back())[key] = value;
  }
  void group(const char* key, const std::function<void()>& body) {
    json& child = (*stack_.back())[key] = json::object();
    stack_.push_back(&child);
    body();
    stack_.pop_back();
  }
  json root = json::object();

 private:
  std::vector<json*> stack_{&root};
};

template <class V, class C>
void visit_solver(V& v, C& s) {
  v("max_iterations", s.max_iterations);
  v("min_relative_decrease", s.min_relative_decrease);
  v("energy_floor", s.energy_floor);
  v("use_dense", s.use_dense);
  v("pcg_iterations", s.pcg.max_iterations);
  v("pcg_tolerance", s.pcg.tolerance);
  v("pcg_restart", s.pcg.restart_interval);
  v("max_view_angle_deg", s.dense.max_view_angle_deg);
  v("dense_tau_d", s.dense.tau_d);
  v("dense_tau_n", s.dense.tau_n);
  v("pixel_stride", s.dense.pixel_stride);
}

template <class V, class C>
void visit_config(V& v, C& c) {
  auto& m = c.mapper;
  v.group("chunk", [&] {
    v("size", m.chunk_size);
    v("max_error", m.chunk_max_error);
    v("merge_radius", m.merge_radius);
    v("prune_threshold", m.prune_threshold);
  });
  v.group("filter", [&] {
    v("max_kabsch_residual", m.filter.max_kabsch_residual);
    v("cond_limit", m.filter.cond_limit);
    v("min_area", m.filter.min_area);
    v("tau_d", m.filter.tau_d);
    v("tau_n", m.filter.tau_n);
    v("tau_c", m.filter.tau_c);
    v("max_verify_error", m.filter.max_verify_error);
    v("min_valid_fraction", m.filter.min_valid_fraction);
    v("n_min", m.filter.n_min);
    v("exact_obb", m.filter.exact_obb);
  });
  v.group("match", [&] { v("ratio", m.match.ratio); });
  v.group("energy", [&] {
    v("w_sparse", m.weights.w_sparse);
    v("w_dense", m.weights.w_dense);
    v("w_photo", m.weights.w_photo);
    v("w_geo", m.weights.w_geo);
    v("ramp_start", m.weights.ramp_start);
    v("ramp_end", m.weights.ramp_end);
  });
  v.group("solver", [&] {
    v.group("chunk", [&] { visit_solver(v, m.chunk_solver); });
    v.group("global", [&] { visit_solver(v, m.global_solver); });
    v.group("final", [&] { visit_solver(v, m.final_solver); });
  });
  v.group("cache", [&] {
    v("width", c.cache.width);
    v("height", c.cache.height);
    v("max_normal_depth_jump", c.cache.max_normal_depth_jump);
  });
  v.group("detector", [&] {
    v("octaves", c.detector.octaves);
    v("scales_per_octave", c.detector.scales_per_octave);
    v("sigma0", c.detector.sigma0);
    v("input_blur", c.detector.input_blur);
    v("min_contrast", c.detector.min_contrast);
    v("target_count", c.detector.target_count);
    v("edge_ratio", c.detector.edge_ratio);
    v("depth_consistency", c.detector.depth_consistency);
    v("keypoints", c.keypoints);
  });
  v.group("tsdf", [&] {
    v("voxel_size", c.tsdf.voxel_size);
    v("truncation", c.tsdf.truncation);
    v("min_depth", c.tsdf.min_depth);
    v("max_depth", c.tsdf.max_depth);
    v("depth_weighted", c.tsdf.depth_weighted);
    v("n_fix", c.n_fix);
  });
  v.group("pipeline", [&] {
    v("reconstruct", c.reconstruct);
    v("dense_global", c.dense_global);
    v("parallel", c.parallel);
    v("depth_scale", c.depth_scale);
    v("max_time_difference", c.max_time_difference);
  });
}

}  // namespace

PipelineConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  PipelineConfig config;
  Reader reader(root);
  std::string mode = config.mode == PipelineMode::Online ? "online" : "batch";
  reader("mode", mode);
  if (mode == "online")
    config.mode = PipelineMode::Online;
  else if (mode == "batch")
    config.mode = PipelineMode::Batch;
  else
    throw ConfigError("mode must be \"online\" or \"batch\"");
  visit_config(reader, config);
  reader.finish();
  if (config.mapper.chunk_size < 2) throw ConfigError("chunk.size must be at least 2");
  if (config.n_fix < 1) throw ConfigError("tsdf.n_fix must be positive");
  if (config.tsdf.voxel_size <= 0.0) throw ConfigError("tsdf.voxel_size must be positive");
  apply_execution(config);
  return config;
}

PipelineConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string dump_config(const PipelineConfig& config) {
  Writer writer;
  writer("mode", std::string(config.mode == PipelineMode::Online ? "online" : "batch"));
  PipelineConfig copy = config;
  visit_config(writer, copy);
  return writer.root.dump(2);
}

SyntheticSpec parse_synthetic(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  std::string preset = "loop";
  int frames = 300, width = 320, height = 240;
  double noise_sigma = 0.0, noise_quadratic = 0.0;
  std::uint64_t seed = 7, scene_seed = 1;
  std::vector<int> occlusion;
  Reader r(root);
  r("preset", preset);
  r("frames", frames);
  r("width", width);
  r("height", height);
  r("noise_sigma", noise_sigma);
  r("noise_quadratic", noise_quadratic);
  r("seed", seed);
  r("scene_seed", scene_seed);
  r("occlusion", occlusion);
  r.finish();
  if (frames < 1 || width < 1 || height < 1) throw ConfigError("frames, width and height must be positive");

  SyntheticSpec spec;
  if (preset == "loop") {
    spec = loop_spec(frames, width, height, noise_sigma);
  } else if (preset == "static") {
    spec = static_spec(frames, width, height);
    spec.noise.sigma = noise_sigma;
  } else if (preset == "occlusion") {
    if (occlusion.size() != 2) throw ConfigError("occlusion preset needs \"occlusion\": [first, count]");
    spec = occlusion_spec(frames, occlusion[0], occlusion[1], width, height, noise_sigma);
  } else {
    throw ConfigError("unknown preset " + preset);
  }
  if (preset != "occlusion" && !occlusion.empty()) {
    if (occlusion.size() != 2) throw ConfigError("occlusion must be [first, count]");
    spec.occlusions.push_back({occlusion[0], occlusion[0] + occlusion[1]});
  }
  spec.scene = room_scene(scene_seed);
  spec.noise.sigma_quadratic = noise_quadratic;
  spec.noise.seed = seed;
  return spec;
}

SyntheticSpec load_synthetic(const std::filesystem::path& path) { return parse_synthetic(read_file(path)); }

}  // namespace gcf
