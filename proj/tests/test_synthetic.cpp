#include "support.hpp"

#include <doctest.h>

using namespace gcf;
using namespace gcf::test;

namespace {

SyntheticSpec wall_spec(int frames, double distance) {
  SyntheticSpec s;
  s.scene = wall_scene(distance);
  s.intrinsics = synthetic_intrinsics(160, 120);
  s.trajectory.assign(frames, RigidTransform::identity());
  return s;
}

}  // namespace

TEST_CASE("static camera facing a plane sees constant depth") {
  const SyntheticSequence seq(wall_spec(3, 1.7));
  for (int i = 0; i < 3; ++i) {
    const RgbdFrame f = seq.frame(i);
    CHECK(f.depth.width == 160);
    for (float d : f.depth.data) CHECK(d == doctest::Approx(1.7).epsilon(1e-6));
    CHECK(f.color == seq.frame(0).color);
  }
  CHECK(seq.timestamp(3) == doctest::Approx(0.1));
}

TEST_CASE("ray casts against each primitive") {
  Scene s;
  s.shapes.push_back({SphereShape{Vec3d(0, 0, 5), 1.0}, {}});
  s.shapes.push_back({BoxShape{Vec3d(-1, -1, 10), Vec3d(1, 1, 12)}, {}});
  s.shapes.push_back({PlaneShape{Vec3d(0, 0, 20), Vec3d(0, 0, 1)}, {}});
  auto hit = s.cast(Vec3d::Zero(), Vec3d::UnitZ());
  REQUIRE(hit);
  CHECK(hit->shape == 0);
  CHECK(hit->t == doctest::Approx(4.0));
  CHECK((hit->normal - Vec3d(0, 0, -1)).norm() < 1e-12);
  // Past the sphere's silhouette the box is next.
  hit = s.cast(Vec3d(0.9, 0.9, 0), Vec3d::UnitZ());
  REQUIRE(hit);
  CHECK(hit->shape == 1);
  CHECK(hit->t == doctest::Approx(10.0));
  hit = s.cast(Vec3d(3, 0, 0), Vec3d::UnitZ());
  REQUIRE(hit);
  CHECK(hit->shape == 2);
  CHECK(hit->t == doctest::Approx(20.0));
  // Normals face the ray origin, also from inside a box.
  CHECK((hit->normal - Vec3d(0, 0, -1)).norm() < 1e-12);
  hit = s.cast(Vec3d(0, 0, 11), Vec3d::UnitX());
  REQUIRE(hit);
  CHECK(hit->t == doctest::Approx(1.0));
  CHECK((hit->normal - Vec3d(-1, 0, 0)).norm() < 1e-12);
  CHECK_FALSE(s.cast(Vec3d::Zero(), -Vec3d::UnitZ()));
}

TEST_CASE("rendered depth agrees with the geometry") {
  // Every valid pixel back-projects onto some surface of the room.
  const SyntheticSequence seq(loop_spec(300, 160, 120, 0.0));
  const Scene& scene = seq.spec().scene;
  for (int i : {0, 75, 150}) {
    const RgbdFrame f = seq.frame(i);
    const RigidTransform& pose = seq.spec().trajectory[i];
    int valid = 0;
    for (int y = 0; y < 120; y += 7)
      for (int x = 0; x < 160; x += 7) {
        const float d = f.depth(x, y);
        if (d <= 0.0f) continue;
        ++valid;
        const Vec3d p = pose * seq.intrinsics().unproject(Vec2d(x, y), d);
        const Vec3d dir = (p - pose.translation).normalized();
        const auto hit = scene.cast(pose.translation, dir);
        REQUIRE(hit);
        CHECK((pose.translation + hit->t * dir - p).norm() < 1e-5);
      }
    CHECK(valid == 23 * 18);
  }
}

TEST_CASE("textures are fixed in the world") {
  // A wall point seen from two positions has the same albedo and therefore,
  // under the same shading, the same color.
  SyntheticSpec s = wall_spec(2, 2.0);
  const Intrinsics& k = s.intrinsics;
  // Slide by exactly eight pixels at 2 m.
  const int dx = 8;
  s.trajectory[1] = RigidTransform{Mat3d::Identity(), Vec3d(2.0 * dx / k.fx, 0.0, 0.0)};
  const SyntheticSequence seq(s);
  const RgbdFrame a = seq.frame(0), b = seq.frame(1);
  int same = 0, total = 0, worst = 0;
  for (int y = 0; y < 120; ++y)
    for (int x = dx; x < 160; ++x) {
      ++total;
      const Rgb8 ca = a.color(x, y), cb = b.color(x - dx, y);
      same += ca == cb;
      worst = std::max({worst, std::abs(ca.r - cb.r), std::abs(ca.g - cb.g), std::abs(ca.b - cb.b)});
    }
  // Ray directions differ in the last bits, which can flip a rounding.
  CHECK(same >= 0.99 * total);
  CHECK(worst <= 1);
  CHECK(value_noise(Vec3d(0.3, 0.2, 0.1), 4, 3) >= 0.0);
  CHECK(value_noise(Vec3d(0.3, 0.2, 0.1), 4, 3) <= 1.0);
  CHECK(value_noise(Vec3d(0.3, 0.2, 0.1), 4, 3) == value_noise(Vec3d(0.3, 0.2, 0.1), 4, 3));
  CHECK(value_noise(Vec3d(0.3, 0.2, 0.1), 4, 3) != value_noise(Vec3d(0.3, 0.2, 0.1), 5, 3));
}

TEST_CASE("depth noise has the requested variance") {
  SyntheticSpec s = wall_spec(20, 1.5);
  s.noise.sigma = 0.005;
  const SyntheticSequence seq(s);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (int i = 0; i < 20; ++i)
    for (float d : seq.frame(i).depth.data) {
      const double e = d - 1.5;
      sum += e;
      sq += e * e;
      ++n;
    }
  const double mean = sum / n;
  const double variance = sq / n - mean * mean;
  // 25 mm^2 within 2%; n = 384000 gives a standard error near 0.2%.
  CHECK(variance == doctest::Approx(25e-6).epsilon(0.02));
  CHECK(std::abs(mean) < 1e-4);
  // Noise is a deterministic function of the frame index.
  CHECK(seq.frame(3).depth == seq.frame(3).depth);
  CHECK_FALSE(seq.frame(3).depth == seq.frame(4).depth);

  SyntheticSpec q = wall_spec(5, 2.0);
  q.noise.sigma_quadratic = 0.002;
  CHECK(q.noise.sigma_at(2.0) == doctest::Approx(0.008));
  const SyntheticSequence qs(q);
  sq = 0.0;
  n = 0;
  for (int i = 0; i < 5; ++i)
    for (float d : qs.frame(i).depth.data) {
      sq += (d - 2.0) * (d - 2.0);
      ++n;
    }
  CHECK(std::sqrt(sq / n) == doctest::Approx(0.008).epsilon(0.02));
}

TEST_CASE("pose interpolation") {
  const RigidTransform a = RigidTransform::identity();
  const RigidTransform b{Eigen::AngleAxisd(1.0, Vec3d::UnitZ()).toRotationMatrix(), Vec3d(2, 0, 0)};
  const auto poses = interpolate_poses({{2.0, a}, {6.0, b}}, 9);
  REQUIRE(poses.size() == 9);
  CHECK(max_abs_difference(poses[0], a) == 0.0);
  CHECK(max_abs_difference(poses[2], a) < 1e-15);
  CHECK(max_abs_difference(poses[6], b) < 1e-12);
  CHECK(max_abs_difference(poses[8], b) < 1e-12);
  const RigidTransform mid{Eigen::AngleAxisd(0.5, Vec3d::UnitZ()).toRotationMatrix(), Vec3d(1, 0, 0)};
  CHECK(max_abs_difference(poses[4], mid) < 1e-12);
  const RigidTransform quarter{Eigen::AngleAxisd(0.25, Vec3d::UnitZ()).toRotationMatrix(), Vec3d(0.5, 0, 0)};
  CHECK(max_abs_difference(poses[3], quarter) < 1e-12);
}

TEST_CASE("look pose axes") {
  const RigidTransform p = look_pose(Vec3d(1, 2, 3), std::numbers::pi / 2, 0.3);
  CHECK((p.rotation.transpose() * p.rotation - Mat3d::Identity()).norm() < 1e-12);
  CHECK(p.rotation.determinant() == doctest::Approx(1.0));
  CHECK((p.rotation.col(2) - Vec3d(0, std::cos(0.3), std::sin(0.3))).norm() < 1e-12);
  // Image rows run downward in the world.
  CHECK(p.rotation.col(1).z() < 0.0);
  CHECK(std::abs(p.rotation.col(0).z()) < 1e-12);
  CHECK(p.translation == Vec3d(1, 2, 3));
}

TEST_CASE("loop trajectory closes") {
  const SyntheticSpec s = loop_spec(300);
  REQUIRE(s.trajectory.size() == 300);
  // The step from the last frame back to the first matches a regular step.
  const double regular = (s.trajectory[1].translation - s.trajectory[0].translation).norm();
  const double closing = (s.trajectory[0].translation - s.trajectory[299].translation).norm();
  CHECK(closing == doctest::Approx(regular).epsilon(0.05));
  double longest = 0.0;
  for (int f = 1; f < 300; ++f)
    longest = std::max(longest, (s.trajectory[f].translation - s.trajectory[f - 1].translation).norm());
  CHECK(longest < 0.03);
}

TEST_CASE("occluded frames are blank") {
  const SyntheticSequence seq(occlusion_spec(60, 20, 10, 160, 120));
  for (int i : {19, 20, 29, 30}) {
    const RgbdFrame f = seq.frame(i);
    const bool blank = std::all_of(f.depth.data.begin(), f.depth.data.end(), [](float d) { return d == 0.0f; }) &&
                       std::all_of(f.color.data.begin(), f.color.data.end(), [](Rgb8 c) { return c == Rgb8{}; });
    CHECK(blank == (i >= 20 && i < 30));
    CHECK(seq.occluded(i) == (i >= 20 && i < 30));
  }
  REQUIRE(seq.ground_truth());
  CHECK(seq.ground_truth()->size() == 60);
}

TEST_CASE("intrinsics scale with resolution") {
  const Intrinsics k = synthetic_intrinsics(320, 240);
  CHECK(k.fx == 262.5);
  CHECK(k.fy == 262.5);
  CHECK(k.cx == 159.5);
  CHECK(k.cy == 119.5);
}
