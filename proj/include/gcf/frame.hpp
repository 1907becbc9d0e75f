#pragma once

#include "gcf/geometry.hpp"
#include "gcf/image.hpp"
#include "gcf/parallel.hpp"

#include <Eigen/Core>

namespace gcf {

// One registered color + depth capture. Depth in meters, 0 marks invalid.
struct RgbdFrame {
  int index = 0;
  double timestamp = 0.0;
  Image<Rgb8> color;
  Image<float> depth;

  int width() const { return depth.width; }
  int height() const { return depth.height; }
};

struct CacheParams {
  int width = 80;
  int height = 60;
  // Neighbor depth jump (meters) beyond which no normal is estimated.
  float max_normal_depth_jump = 0.1f;
};

// Downsampled per-frame data used by dense verification and the dense terms.
// Immutable after construction.
struct CachedFrame {
  int index = 0;
  Intrinsics intrinsics;
  Image<float> intensity;               // luminance in [0, 1]
  Image<Eigen::Vector2f> gradient;      // central differences of intensity
  Image<float> depth;                   // meters, 0 = invalid
  Image<Eigen::Vector3f> points;        // camera space; zero where invalid
  Image<Eigen::Vector3f> normals;       // unit; zero where not estimable

  bool valid_depth(int x, int y) const { return depth(x, y) > 0.0f; }
  bool valid_normal(int x, int y) const { return normals(x, y).squaredNorm() > 0.5f; }
  // Pixels carrying both a point and a normal.
  bool valid(int x, int y) const { return valid_depth(x, y) && valid_normal(x, y); }
  int valid_count() const;
};

// Builds the cache for a frame whose dimensions are integer multiples of the
// target resolution. Depth: block median of valid samples. Intensity: block
// mean of luminance. Throws std::invalid_argument for non-divisible sizes.
CachedFrame build_cache(const RgbdFrame& frame, const Intrinsics& k, const CacheParams& params = {});

// Same cache computed from already downsampled depth and intensity.
CachedFrame build_cache_from_low(int index, const Image<float>& depth_low,
                                 const Image<float>& intensity_low, const Intrinsics& k_low,
                                 const CacheParams& params = {});

// Fraction of a's valid points that land inside b's image with positive depth
// when carried into b's camera by pose_b^-1 * pose_a.
double frustum_overlap(const CachedFrame& a, const RigidTransform& pose_a, const CachedFrame& b,
                       const RigidTransform& pose_b);

}  // namespace gcf
