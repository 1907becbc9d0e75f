#pragma once

// Seeded generators shared by the test suites.

#include "gcf/filters.hpp"
#include "gcf/frame.hpp"
#include "gcf/geometry.hpp"
#include "gcf/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace gcf::test {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline double gaussian(Rng& rng, double sigma) { return std::normal_distribution<double>(0.0, sigma)(rng); }

inline Vec3d random_vector(Rng& rng, double scale) {
  return {uniform(rng, -scale, scale), uniform(rng, -scale, scale), uniform(rng, -scale, scale)};
}

inline Vec3d random_unit(Rng& rng) {
  Vec3d v;
  do v = Vec3d(gaussian(rng, 1.0), gaussian(rng, 1.0), gaussian(rng, 1.0));
  while (v.norm() < 1e-6);
  return v.normalized();
}

inline Vec3d gaussian_vector(Rng& rng, double sigma) {
  return {gaussian(rng, sigma), gaussian(rng, sigma), gaussian(rng, sigma)};
}

// Rotation about a uniformly random axis by an angle uniform in [0, max_angle].
inline Mat3d random_rotation(Rng& rng, double max_angle = std::numbers::pi) {
  return Eigen::AngleAxisd(uniform(rng, 0.0, max_angle), random_unit(rng)).toRotationMatrix();
}

inline RigidTransform random_transform(Rng& rng, double max_angle = std::numbers::pi, double max_translation = 1.0) {
  return {random_rotation(rng, max_angle), random_vector(rng, max_translation)};
}

inline std::vector<Vec3d> random_points(Rng& rng, int n, double scale = 1.0) {
  std::vector<Vec3d> out(n);
  for (auto& p : out) p = random_vector(rng, scale);
  return out;
}

inline std::vector<Vec3d> transformed(const RigidTransform& t, const std::vector<Vec3d>& points) {
  std::vector<Vec3d> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(t * p);
  return out;
}

// Synthetic frame from per-pixel depth and color callbacks.
template <class DepthFn, class ColorFn>
RgbdFrame make_frame(int w, int h, DepthFn depth, ColorFn color) {
  RgbdFrame f;
  f.depth = Image<float>(w, h, 0.0f);
  f.color = Image<Rgb8>(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.depth(x, y) = depth(x, y);
      f.color(x, y) = color(x, y);
    }
  return f;
}

inline Rgb8 gray(int v) { return {std::uint8_t(v), std::uint8_t(v), std::uint8_t(v)}; }

// Renders single views of a scene at arbitrary poses.
class Renderer {
 public:
  Renderer(Scene scene, int width = 320, int height = 240) {
    spec_.scene = std::move(scene);
    spec_.intrinsics = synthetic_intrinsics(width, height);
  }
  RgbdFrame render(const RigidTransform& pose) const {
    SyntheticSpec s = spec_;
    s.trajectory = {pose};
    return SyntheticSequence(std::move(s)).frame(0);
  }
  const Intrinsics& intrinsics() const { return spec_.intrinsics; }

 private:
  SyntheticSpec spec_;
};

// Textured wall z = distance in front of an identity camera, spanning far
// beyond the view.
inline Scene wall_scene(double distance = 2.0, std::uint64_t seed = 3) {
  Scene s;
  Shape wall;
  wall.geometry = PlaneShape{Vec3d(0, 0, distance), Vec3d(0, 0, -1)};
  wall.texture.seed = seed;
  s.shapes.push_back(wall);
  return s;
}

// Exact correspondence sets between every pair of n frames observing a
// shared cloud of world points.
struct PoseGraphFixture {
  std::vector<RigidTransform> poses;  // ground truth camera to world
  std::vector<Vec3d> world;
  std::vector<CorrespondenceSet> sets;
};

inline PoseGraphFixture pose_graph(Rng& rng, int frames, int points_per_set, double noise_sigma = 0.0,
                                   double step = 0.1) {
  PoseGraphFixture fx;
  fx.poses.push_back(RigidTransform::identity());
  for (int f = 1; f < frames; ++f) {
    const RigidTransform delta{random_rotation(rng, 0.05), random_vector(rng, step)};
    fx.poses.push_back(fx.poses.back() * delta);
  }
  for (int i = 0; i < frames; ++i)
    for (int j = i + 1; j < frames; ++j) {
      CorrespondenceSet s;
      s.frame_i = i;
      s.frame_j = j;
      s.valid = true;
      for (int k = 0; k < points_per_set; ++k) {
        const Vec3d w = fx.poses[i] * Vec3d(uniform(rng, -1.0, 1.0), uniform(rng, -0.8, 0.8), uniform(rng, 1.0, 3.0));
        fx.world.push_back(w);
        Correspondence c;
        c.p_i = fx.poses[i].inverse() * w + gaussian_vector(rng, noise_sigma);
        c.p_j = fx.poses[j].inverse() * w + gaussian_vector(rng, noise_sigma);
        s.pairs.push_back(c);
      }
      s.t_ij = fx.poses[j].inverse() * fx.poses[i];
      fx.sets.push_back(std::move(s));
    }
  return fx;
}

}  // namespace gcf::test
