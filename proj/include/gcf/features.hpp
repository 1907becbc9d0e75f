#pragma once

#include "gcf/frame.hpp"
#include "gcf/geometry.hpp"

#include <map>
#include <memory>
#include <span>
#include <vector>

namespace gcf {

struct Keypoint {
  Vec2d pixel = Vec2d::Zero();       // full-resolution pixel coordinates
  double depth = 0.0;                // meters
  Vec3d point_cam = Vec3d::Zero();   // camera-space position
  double scale = 0.0;                // pixels
  double orientation = 0.0;          // radians
  std::vector<float> descriptor;     // unit L2 norm
};

struct RawMatch {
  int kp_a = 0;
  int kp_b = 0;
  float distance = 0.0f;
  bool operator==(const RawMatch&) const = default;
};

class FeatureDetector {
 public:
  virtual ~FeatureDetector() = default;
  // Keypoints with valid depth only.
  virtual std::vector<Keypoint> detect(const RgbdFrame& frame, const Intrinsics& k) const = 0;
};

struct ReferenceDetectorParams {
  int octaves = 3;
  int scales_per_octave = 3;
  double sigma0 = 1.6;
  double input_blur = 0.5;
  // Floor of the contrast threshold on the DoG response. The effective
  // threshold adapts upward so at most target_count keypoints survive.
  double min_contrast = 0.003;
  int target_count = 150;
  double edge_ratio = 10.0;
  // Depth samples under the keypoint must agree within this fraction.
  double depth_consistency = 0.03;
};

// Simplified scale-space detector: difference-of-Gaussian extrema over three
// octaves with sub-pixel refinement, a dominant-orientation histogram, and a
// 4x4x8 gradient-orientation descriptor.
class ReferenceDetector final : public FeatureDetector {
 public:
  explicit ReferenceDetector(ReferenceDetectorParams params = {}) : params_(params) {}
  std::vector<Keypoint> detect(const RgbdFrame& frame, const Intrinsics& k) const override;
  std::vector<Keypoint> detect_gray(const Image<float>& gray, const Image<float>& depth,
                                    const Intrinsics& k) const;

 private:
  ReferenceDetectorParams params_;
};

// Serves precomputed keypoints by frame index; camera points are recomputed
// from the stored pixel and depth with the supplied intrinsics.
class FileDetector final : public FeatureDetector {
 public:
  explicit FileDetector(std::map<int, std::vector<Keypoint>> per_frame)
      : per_frame_(std::move(per_frame)) {}
  std::vector<Keypoint> detect(const RgbdFrame& frame, const Intrinsics& k) const override;

 private:
  std::map<int, std::vector<Keypoint>> per_frame_;
};

struct MatchParams {
  float ratio = 0.8f;
};

// Mutual nearest neighbours under the ratio test, sorted by ascending
// distance. When groups are given, descriptors in the same group describe the
// same point and the second-nearest candidate is taken from a different group.
std::vector<RawMatch> match_descriptors(std::span<const Keypoint> a, std::span<const Keypoint> b,
                                        const MatchParams& params = {},
                                        std::span<const int> groups_a = {},
                                        std::span<const int> groups_b = {});

float descriptor_distance(std::span<const float> a, std::span<const float> b);

Image<float> to_gray(const Image<Rgb8>& color);

}  // namespace gcf
