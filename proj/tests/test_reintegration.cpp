#include "support.hpp"

#include "gcf/reintegration.hpp"

#include <doctest.h>

#include <cmath>

using namespace gcf;
using namespace gcf::test;

namespace {

const TsdfParams kParams{.voxel_size = 0.02};

// Frames rendered once and served by id, like a sequence on disk.
struct Fixture {
  std::vector<RgbdFrame> frames;
  std::vector<RigidTransform> truth;
  Intrinsics intrinsics;

  explicit Fixture(int count) {
    const SyntheticSequence seq(loop_spec(300, 160, 120, 0.0));
    intrinsics = seq.intrinsics();
    for (int k = 0; k < count; ++k) {
      frames.push_back(seq.frame(7 * k));
      truth.push_back(seq.spec().trajectory[7 * k]);
    }
  }
  ReintegrationManager::FrameSource source() const {
    return [this](int f) { return frames.at(f); };
  }
  TsdfVolume direct(const std::vector<int>& ids) const {
    TsdfVolume v(kParams);
    for (int f : ids) v.integrate(frames[f], intrinsics, truth[f]);
    return v;
  }
};

const Fixture& fixture() {
  static const Fixture fx(25);
  return fx;
}

std::vector<int> iota(int n) {
  std::vector<int> out(n);
  for (int k = 0; k < n; ++k) out[k] = k;
  return out;
}

}  // namespace

TEST_CASE("transform distance") {
  const RigidTransform a{from_euler_zyx(Vec3d(0.3, -0.2, 0.1)), Vec3d(1, 2, 3)};
  CHECK(transform_distance(a, a) == 0.0);
  const RigidTransform yaw{from_euler_zyx(Vec3d(0.4, -0.2, 0.1)), Vec3d(1, 2, 3)};
  CHECK(transform_distance(a, yaw) == doctest::Approx(0.2).epsilon(1e-12));
  const RigidTransform moved{a.rotation, Vec3d(1.3, 2.4, 3)};
  CHECK(transform_distance(a, moved) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("euler angles round trip") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3d ypr(uniform(rng, -3.1, 3.1), uniform(rng, -1.5, 1.5), uniform(rng, -3.1, 3.1));
    const Mat3d r = from_euler_zyx(ypr);
    CHECK((euler_zyx(r) - ypr).norm() < 1e-9);
    CHECK((from_euler_zyx(euler_zyx(r)) - r).norm() < 1e-12);
  }
  // Gimbal lock: roll folds into yaw and the rotation is still reproduced, to
  // the square-root precision asin has next to 1.
  const Mat3d locked = from_euler_zyx(Vec3d(0.7, std::numbers::pi / 2, 0.3));
  const Vec3d e = euler_zyx(locked);
  CHECK(e[2] == 0.0);
  CHECK((from_euler_zyx(e) - locked).norm() < 1e-7);
}

TEST_CASE("staleness") {
  FrameState s;
  CHECK(s.staleness() == 0.0);
  s.optimized_pose = RigidTransform::identity();
  CHECK(std::isinf(s.staleness()));
  s.integrated_pose = RigidTransform{Mat3d::Identity(), Vec3d(0, 0, 0.1)};
  CHECK(s.staleness() == doctest::Approx(0.1));
  s.invalid = true;
  CHECK(s.staleness() == 0.0);
}

TEST_CASE("steps are no-ops when every pose is current") {
  const Fixture& fx = fixture();
  TsdfVolume vol(kParams);
  ReintegrationManager m(vol, fx.intrinsics, fx.source());
  for (int f = 0; f < 5; ++f) {
    m.add_frame(f, fx.truth[f], &fx.frames[f]);
    m.set_optimized(f, fx.truth[f]);
  }
  const ReintegrationReport r = m.step();
  CHECK(r.moved.empty());
  CHECK(r.removed.empty());
  CHECK(r.max_distance_before == 0.0);
  CHECK(m.flush() == 0);
  const VolumeDifference d = compare_volumes(vol, fx.direct(iota(5)));
  CHECK(d.same_support);
  CHECK(d.max_weight_diff == 0.0);
}

TEST_CASE("perturbed poses reach the optimized volume in three steps") {
  const Fixture& fx = fixture();
  Rng rng(2);
  TsdfVolume vol(kParams);
  ReintegrationManager m(vol, fx.intrinsics, fx.source(), 10);
  for (int f = 0; f < 25; ++f) {
    const RigidTransform off = fx.truth[f] * random_transform(rng, 0.05, 0.05);
    m.add_frame(f, off);
  }
  for (int f = 0; f < 25; ++f) m.set_optimized(f, fx.truth[f]);

  std::vector<bool> moved(25, false);
  for (int step = 0; step < 3; ++step) {
    // The chosen frames are exactly the ten largest distances.
    std::vector<std::pair<double, int>> ranked;
    for (const auto& s : m.states())
      if (s.staleness() > 0.0) ranked.push_back({-s.staleness(), s.frame});
    std::sort(ranked.begin(), ranked.end());
    std::vector<int> expected;
    for (std::size_t k = 0; k < std::min<std::size_t>(10, ranked.size()); ++k) expected.push_back(ranked[k].second);
    CHECK(m.stale_order() == expected);

    const ReintegrationReport r = m.step();
    CHECK(r.moved == expected);
    CHECK(r.max_distance_before == doctest::Approx(-ranked.front().first));
    CHECK(r.max_distance_after <= r.max_distance_before);
    for (int f : r.moved) {
      CHECK_FALSE(moved[f]);
      moved[f] = true;
    }
  }
  CHECK(m.stale_order().empty());
  for (const auto& s : m.states()) CHECK(max_abs_difference(*s.integrated_pose, *s.optimized_pose) == 0.0);

  const VolumeDifference d = compare_volumes(vol, fx.direct(iota(25)));
  CHECK(d.same_support);
  CHECK(d.max_weight_diff == 0.0);
  CHECK(d.max_sdf_diff < 1e-5);
}

TEST_CASE("flush takes ceil(stale / n_fix) steps") {
  const Fixture& fx = fixture();
  Rng rng(3);
  for (int n_fix : {1, 4, 10, 30}) {
    for (int stale : {0, 3, 9}) {
      TsdfVolume vol(kParams);
      ReintegrationManager m(vol, fx.intrinsics, fx.source(), n_fix);
      for (int f = 0; f < 9; ++f) {
        const RigidTransform initial = f < stale ? fx.truth[f] * random_transform(rng, 0.02, 0.02) : fx.truth[f];
        m.add_frame(f, initial, &fx.frames[f]);
        m.set_optimized(f, fx.truth[f]);
      }
      CHECK(m.flush() == (stale + n_fix - 1) / n_fix);
    }
  }
}

TEST_CASE("ties go to the lower frame id") {
  const Fixture& fx = fixture();
  TsdfVolume vol(kParams);
  ReintegrationManager m(vol, fx.intrinsics, fx.source(), 3);
  // Dyadic translations make the distances exactly equal.
  const auto snapped = [&](int f, double dx) {
    const Vec3d t = (fx.truth[f].translation * 1024.0).array().round() / 1024.0;
    return RigidTransform{fx.truth[f].rotation, t + Vec3d(dx, 0, 0)};
  };
  for (int f = 0; f < 6; ++f) {
    m.add_frame(f, snapped(f, 0.0), &fx.frames[f]);
    m.set_optimized(f, snapped(f, 1.0 / 128));
  }
  // Equal distances everywhere except frame 4, which is pushed further.
  m.set_optimized(4, snapped(4, 1.0 / 16));
  CHECK(m.stale_order() == std::vector<int>{4, 0, 1});
}

TEST_CASE("frames without a starting pose are integrated first") {
  const Fixture& fx = fixture();
  TsdfVolume vol(kParams);
  ReintegrationManager m(vol, fx.intrinsics, fx.source(), 2);
  m.add_frame(0, fx.truth[0] * RigidTransform{Mat3d::Identity(), Vec3d(0.3, 0, 0)});
  m.add_frame(1, std::nullopt);
  m.add_frame(2, std::nullopt);
  CHECK_FALSE(m.states()[1].integrated());
  CHECK(m.stale_order().empty());
  for (int f = 0; f < 3; ++f) m.set_optimized(f, fx.truth[f]);
  CHECK(m.stale_order() == std::vector<int>{1, 2});
  m.step();
  CHECK(m.stale_order() == std::vector<int>{0});
  m.step();
  const VolumeDifference d = compare_volumes(vol, fx.direct({0, 1, 2}));
  CHECK(d.same_support);
  CHECK(d.max_weight_diff == 0.0);
  CHECK(d.max_sdf_diff < 1e-5);
  CHECK_THROWS_AS(m.add_frame(7, std::nullopt), std::invalid_argument);
}

TEST_CASE("invalidated frames leave the volume") {
  const Fixture& fx = fixture();
  TsdfVolume vol(kParams);
  ReintegrationManager m(vol, fx.intrinsics, fx.source());
  for (int f = 0; f < 6; ++f) {
    m.add_frame(f, fx.truth[f]);
    m.set_optimized(f, fx.truth[f]);
  }
  m.invalidate(2);
  m.invalidate(4);
  const ReintegrationReport r = m.step();
  CHECK(r.removed == std::vector<int>{2, 4});
  CHECK(r.moved.empty());
  CHECK_FALSE(m.states()[2].integrated());
  CHECK(m.stale_order().empty());
  const VolumeDifference d = compare_volumes(vol, fx.direct({0, 1, 3, 5}));
  CHECK(d.same_support);
  CHECK(d.max_weight_diff == 0.0);
  CHECK(d.max_sdf_diff < 1e-5);

  // A frame validated again comes back through the queue.
  m.set_optimized(2, fx.truth[2]);
  CHECK(m.stale_order() == std::vector<int>{2});
  m.step();
  CHECK(compare_volumes(vol, fx.direct({0, 1, 2, 3, 5})).max_weight_diff == 0.0);
}

TEST_CASE("bookkeeping errors surface as deintegration mismatches") {
  const Fixture& fx = fixture();
  TsdfVolume vol(kParams);
  ReintegrationManager m(vol, fx.intrinsics, fx.source());
  m.add_frame(0, fx.truth[0]);
  m.set_optimized(0, fx.truth[0] * RigidTransform{Mat3d::Identity(), Vec3d(0.1, 0, 0)});
  vol = TsdfVolume(kParams);
  CHECK_THROWS_AS(m.step(), DeintegrationMismatch);
  CHECK_THROWS_AS(ReintegrationManager(vol, fx.intrinsics, fx.source(), 0), std::invalid_argument);
}
