#pragma once

#include "gcf/dataset.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

namespace gcf {

// Procedural albedo: fractal value noise in world space, so a surface point
// has the same color from every view.
struct Texture {
  std::uint64_t seed = 1;
  double frequency = 6.0;  // lattice cells per meter at the base octave
  int octaves = 3;
  double contrast = 2.0;
  Eigen::Vector3f color_a{0.15f, 0.2f, 0.35f};  // 0..1
  Eigen::Vector3f color_b{0.95f, 0.85f, 0.6f};
  bool flat = false;  // constant color_a

  Eigen::Vector3f albedo(const Vec3d& p) const;
};

// Fractal value noise in [0, 1].
double value_noise(const Vec3d& p, std::uint64_t seed, int octaves);

struct PlaneShape {
  Vec3d point = Vec3d::Zero();
  Vec3d normal = Vec3d::UnitZ();
};
struct SphereShape {
  Vec3d center = Vec3d::Zero();
  double radius = 1.0;
};
// Axis-aligned; visible from outside and from inside.
struct BoxShape {
  Vec3d min = -Vec3d::Ones();
  Vec3d max = Vec3d::Ones();
};

struct Shape {
  std::variant<PlaneShape, SphereShape, BoxShape> geometry;
  Texture texture;
};

struct RayHit {
  double t = 0.0;
  Vec3d normal = Vec3d::Zero();  // unit, facing the ray origin
  int shape = -1;
};

struct Scene {
  std::vector<Shape> shapes;
  Vec3d light_direction = Vec3d(0.3, -0.5, 0.8).normalized();

  // Nearest hit with t > 1e-9 along origin + t * direction.
  std::optional<RayHit> cast(const Vec3d& origin, const Vec3d& direction) const;
};

struct DepthNoise {
  double sigma = 0.0;            // m, constant term
  double sigma_quadratic = 0.0;  // 1/m, times depth^2
  std::uint64_t seed = 7;

  double sigma_at(double z) const { return sigma + sigma_quadratic * z * z; }
};

struct PoseKey {
  double frame = 0.0;
  RigidTransform pose;
};

// Per-frame poses from keys sorted by frame: translation linear, rotation
// slerp, clamped outside the key range.
std::vector<RigidTransform> interpolate_poses(const std::vector<PoseKey>& keys, int frames);

// Camera whose optical axis is yaw radians from +x in the x-y plane, tilted
// by pitch toward +z, with image rows running along -z.
RigidTransform look_pose(const Vec3d& position, double yaw, double pitch = 0.0);

struct SyntheticSpec {
  Scene scene;
  std::vector<RigidTransform> trajectory;  // camera to world
  Intrinsics intrinsics;
  double fps = 30.0;
  DepthNoise noise;
  float max_depth = 8.0f;
  // Frame ranges [first, last) rendered with the lens covered: black color,
  // no valid depth.
  std::vector<std::pair<int, int>> occlusions;
};

class SyntheticSequence final : public Sequence {
 public:
  explicit SyntheticSequence(SyntheticSpec spec) : spec_(std::move(spec)) {}

  int size() const override { return static_cast<int>(spec_.trajectory.size()); }
  double timestamp(int i) const override { return i / spec_.fps; }
  RgbdFrame frame(int i) const override;
  const Intrinsics& intrinsics() const override { return spec_.intrinsics; }
  std::optional<std::vector<RigidTransform>> ground_truth() const override { return spec_.trajectory; }

  const SyntheticSpec& spec() const { return spec_; }
  bool occluded(int i) const;

 private:
  SyntheticSpec spec_;
};

Intrinsics synthetic_intrinsics(int width, int height);

// Textured room (6 x 6 x 3 m) with furniture-sized boxes and spheres.
Scene room_scene(std::uint64_t seed = 1);

// Camera circling the room center while looking outward, closing the loop
// after one revolution.
SyntheticSpec loop_spec(int frames = 300, int width = 320, int height = 240, double noise_sigma = 0.0);

// Camera at rest facing one wall of the room.
SyntheticSpec static_spec(int frames = 20, int width = 320, int height = 240);

// Loop trajectory with the lens covered for [first, first + count).
SyntheticSpec occlusion_spec(int frames, int first, int count, int width = 320, int height = 240,
                             double noise_sigma = 0.0);

}  // namespace gcf
