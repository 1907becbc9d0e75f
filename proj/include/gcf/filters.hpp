#pragma once

#include "gcf/features.hpp"
#include "gcf/frame.hpp"
#include "gcf/geometry.hpp"

#include <span>
#include <vector>

namespace gcf {

struct FilterConfig {
  double max_kabsch_residual = 0.02;  // m
  double cond_limit = 100.0;
  double min_area = 0.032;            // m^2
  double tau_d = 0.15;                // m
  double tau_n = 0.9;
  double tau_c = 0.1;
  double max_verify_error = 0.075;    // m
  double min_valid_fraction = 0.02;   // of w' * h'
  int n_min = 5;
  // Rotating calipers over the convex hull; false selects the cheaper box
  // aligned with the in-plane principal axes.
  bool exact_obb = true;
};

struct Correspondence {
  Vec3d p_i = Vec3d::Zero();  // camera space of frame i
  Vec3d p_j = Vec3d::Zero();  // camera space of frame j
  int kp_i = -1;
  int kp_j = -1;
};

// Verified matches between two frames. t_ij maps frame-i camera space into
// frame-j camera space.
struct CorrespondenceSet {
  int frame_i = -1;
  int frame_j = -1;
  std::vector<Correspondence> pairs;
  RigidTransform t_ij;
  bool valid = false;
};

// Greedy aggregation in match order with Kabsch re-estimation after every
// insertion. Inconsistent or unstable sets shed their worst correspondences.
CorrespondenceSet keypoint_filter(std::span<const RawMatch> matches, std::span<const Keypoint> kps_i,
                                  std::span<const Keypoint> kps_j, const FilterConfig& config = {},
                                  int frame_i = -1, int frame_j = -1);

// Area (m^2) of the 2D oriented bounding box of the points projected onto
// their two principal axes.
double spanned_area(std::span<const Vec3d> points, bool exact_obb = true);

bool surface_area_filter(std::span<const Vec3d> points_i, std::span<const Vec3d> points_j,
                         const FilterConfig& config = {});

struct DirectionalCheck {
  double mean_error = 0.0;  // m, over valid pixels
  int valid_count = 0;
};

// One-directional reprojection of cache_i into cache_j under t_ij.
DirectionalCheck reproject_check(const CachedFrame& cache_i, const CachedFrame& cache_j,
                                 const RigidTransform& t_ij, const FilterConfig& config = {});

struct VerifyResult {
  bool pass = false;
  double error = 0.0;  // larger of the two directional mean errors
  int valid_count = 0; // smaller of the two directional counts
};

// Two-sided check. max_error overrides config.max_verify_error when >= 0.
VerifyResult dense_verify(const CachedFrame& cache_i, const CachedFrame& cache_j, const RigidTransform& t_ij,
                          const FilterConfig& config = {}, double max_error = -1.0);

int min_valid_pixels(const CachedFrame& cache, const FilterConfig& config);

enum class CascadeStage { Raw, KeypointFilter, SurfaceArea, DenseVerify };

struct CascadeResult {
  CorrespondenceSet set;   // valid only if every stage passed
  int raw_matches = 0;
  bool raw_proposal = false;     // raw matches >= n_min
  bool passed_keypoint = false;
  bool passed_area = false;
  bool passed_dense = false;
  RigidTransform keypoint_transform;  // estimate of the keypoint stage when it passed
  VerifyResult verify;
};

// Full three-stage cascade for one frame pair.
CascadeResult filter_pair(std::span<const RawMatch> matches, std::span<const Keypoint> kps_i,
                          std::span<const Keypoint> kps_j, const CachedFrame& cache_i,
                          const CachedFrame& cache_j, const FilterConfig& config, int frame_i, int frame_j);

}  // namespace gcf
