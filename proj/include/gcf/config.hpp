#pragma once

#include "gcf/pipeline.hpp"
#include "gcf/synthetic.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gcf {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// JSON document grouped by module. Keys left out keep their defaults; unknown
// keys are rejected.
PipelineConfig parse_config(std::string_view json_text);
PipelineConfig load_config(const std::filesystem::path& path);
// Every key with its current value; parse_config(dump_config(c)) == c.
std::string dump_config(const PipelineConfig& config);

// Synthetic dataset description:
//   {"preset": "loop" | "static" | "occlusion", "frames": N, "width": W,
//    "height": H, "noise_sigma": m, "noise_quadratic": 1/m, "seed": s,
//    "occlusion": [first, count], "scene_seed": s}
SyntheticSpec parse_synthetic(std::string_view json_text);
SyntheticSpec load_synthetic(const std::filesystem::path& path);

}  // namespace gcf
