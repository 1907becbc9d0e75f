// Acceptance runner: one line per criterion, exit status 1 if any gating
// criterion fails. Criterion 10 needs external data and never gates.

#include "support.hpp"

#include "gcf/config.hpp"
#include "gcf/dataset.hpp"
#include "gcf/pipeline.hpp"
#include "gcf/reintegration.hpp"
#include "gcf/solver.hpp"
#include "gcf/tsdf.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>

using namespace gcf;
using namespace gcf::test;

namespace fs = std::filesystem;

namespace {

const fs::path kSource = GCF_SOURCE_DIR;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Collects failed sub-checks with a short label each.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failed_.push_back(what);
  }
  bool ok() const { return failed_.empty(); }
  std::string failures() const {
    std::string out;
    for (const auto& f : failed_) out += (out.empty() ? "" : "; ") + f;
    return out;
  }

 private:
  std::vector<std::string> failed_;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Outcome finish(const Checks& c, const std::string& detail) {
  return {c.ok(), c.ok() ? detail : detail + " | failed: " + c.failures()};
}

// ---- 1 ---------------------------------------------------------------------

Outcome tsdf_symmetry() {
  const Renderer renderer(room_scene(), 640, 480);
  const Intrinsics& k = renderer.intrinsics();
  Rng rng(101);
  auto random_pose = [&] {
    const Vec3d position(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -0.3, 0.6));
    return look_pose(position, uniform(rng, -std::numbers::pi, std::numbers::pi), uniform(rng, -0.4, 0.4));
  };
  TsdfVolume volume(TsdfParams{.voxel_size = 0.01});
  for (int f = 0; f < 3; ++f) volume.integrate(renderer.render(random_pose()), k, random_pose(), Execution::Parallel);
  const TsdfVolume base = volume;

  Checks c;
  double worst_sdf = 0.0, worst_weight = 0.0, worst_time = 0.0, total_time = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const RigidTransform pose = random_pose();
    const RgbdFrame frame = renderer.render(pose);
    const auto t0 = Clock::now();
    volume.integrate(frame, k, pose, Execution::Parallel);
    volume.deintegrate(frame, k, pose, Execution::Parallel);
    const double t = seconds_since(t0);
    worst_time = std::max(worst_time, t);
    total_time += t;
    const VolumeDifference d = compare_volumes(volume, base);
    c.expect(d.same_support, fmt("support changed at trial %d", trial));
    worst_sdf = std::max(worst_sdf, d.max_sdf_diff);
    worst_weight = std::max(worst_weight, d.max_weight_diff);
  }
  c.expect(worst_weight == 0.0, "weights not restored exactly");
  c.expect(worst_sdf < 1e-5, "sdf drift >= 1e-5 m");
  c.expect(worst_time < 1.0, "integrate + deintegrate >= 1 s");
  return finish(c, fmt("100 frames 640x480 @1cm: max |dW| %.1g, max |dD| %.2g m, mean %.3f s, worst %.3f s per frame pair",
                       worst_weight, worst_sdf, total_time / 100, worst_time));
}

// ---- 2 ---------------------------------------------------------------------

Outcome reintegration_fixed_point() {
  const SyntheticSequence seq(loop_spec(300, 320, 240, 0.0));
  std::vector<RgbdFrame> frames;
  std::vector<RigidTransform> truth;
  for (int f = 0; f < 25; ++f) {
    frames.push_back(seq.frame(12 * f));
    truth.push_back(seq.spec().trajectory[12 * f]);
  }
  const TsdfParams params{.voxel_size = 0.01};
  TsdfVolume volume(params);
  ReintegrationManager m(volume, seq.intrinsics(), [&](int f) { return frames.at(f); }, 10, Execution::Parallel);
  Rng rng(102);
  for (int f = 0; f < 25; ++f) m.add_frame(f, truth[f] * random_transform(rng, 0.05, 0.05));
  for (int f = 0; f < 25; ++f) m.set_optimized(f, truth[f]);
  int steps = 0;
  while (!m.stale_order().empty() && steps < 10) {
    m.step();
    ++steps;
  }
  TsdfVolume direct(params);
  for (int f = 0; f < 25; ++f) direct.integrate(frames[f], seq.intrinsics(), truth[f], Execution::Parallel);
  const VolumeDifference d = compare_volumes(volume, direct);
  Checks c;
  c.expect(m.stale_order().empty(), "no fixed point");
  c.expect(steps <= 3, "more than 3 steps");
  c.expect(d.same_support, "support differs");
  c.expect(d.max_weight_diff == 0.0, "weights differ");
  c.expect(d.max_sdf_diff < 1e-5, "sdf differs by >= 1e-5 m");
  return finish(c, fmt("25 frames, N_fix 10: fixed point after %d steps, max |dW| %.1g, max |dD| %.2g m", steps,
                       d.max_weight_diff, d.max_sdf_diff));
}

// ---- 3 ---------------------------------------------------------------------

Outcome kabsch_stability() {
  Rng rng(103);
  Checks c;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = random_points(rng, 3 + trial % 20, uniform(rng, 0.1, 3.0));
    const RigidTransform t = random_transform(rng, std::numbers::pi, 5.0);
    const KabschResult r = kabsch(p, transformed(t, p));
    worst = std::max(worst, (r.transform.matrix() - t.matrix()).cwiseAbs().maxCoeff());
  }
  c.expect(worst < 1e-9, "recovery error >= 1e-9");
  double least_cond = std::numeric_limits<double>::infinity();
  int flagged = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3d dir = random_unit(rng), origin = random_vector(rng, 2.0);
    std::vector<Vec3d> line;
    for (int k = 0; k < 3 + trial % 20; ++k) line.push_back(origin + dir * uniform(rng, -1.0, 1.0));
    const StabilityReport r = condition_analysis(line, transformed(random_transform(rng), line));
    flagged += !r.stable;
    least_cond = std::min(least_cond, r.cond_cov_p);
  }
  c.expect(flagged == 1000, "collinear set accepted");
  c.expect(least_cond > 100.0, "collinear condition <= 100");
  return finish(c, fmt("1000 trials: max |T - T*| %.2g; collinear flagged %d/1000, min condition %.3g", worst, flagged,
                       least_cond));
}

// ---- 4 ---------------------------------------------------------------------

std::vector<Keypoint> keypoints_at(const std::vector<Vec3d>& points) {
  std::vector<Keypoint> out(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) out[k].point_cam = points[k];
  return out;
}

std::vector<RawMatch> identity_matches(int n) {
  std::vector<RawMatch> m;
  for (int k = 0; k < n; ++k) m.push_back({k, k, 0.01f * float(k)});
  return m;
}

const Intrinsics kLow = Intrinsics{}.downsampled(8, 8);

template <class DepthFn>
CachedFrame low_cache(DepthFn depth, float intensity = 0.5f) {
  Image<float> d(80, 60, 0.0f), i(80, 60, intensity);
  for (int y = 0; y < 60; ++y)
    for (int x = 0; x < 80; ++x) d(x, y) = depth(x, y);
  return build_cache_from_low(0, d, i, kLow);
}

CachedFrame flat_cache(float depth, float intensity = 0.5f) {
  return low_cache([&](int, int) { return depth; }, intensity);
}

CachedFrame tilted_cache(double angle) {
  return low_cache([&](int x, int) {
    const double a = (x - kLow.cx) / kLow.fx;
    return static_cast<float>(2.0 * std::cos(angle) / (std::cos(angle) - a * std::sin(angle)));
  });
}

Outcome filter_thresholds() {
  Checks c;
  const RigidTransform id = RigidTransform::identity();

  // Kabsch residual: octahedron plus its displaced center, whose residual is
  // 6/7 of the displacement.
  {
    const Vec3d center(0, 0, 2);
    std::vector<Vec3d> p;
    for (int axis = 0; axis < 3; ++axis) p.push_back(center + 0.5 * Vec3d::Unit(axis));
    for (int axis = 0; axis < 3; ++axis) p.push_back(center - 0.5 * Vec3d::Unit(axis));
    p.push_back(center);
    const Vec3d dir = Vec3d(1, 2, -2).normalized();
    auto kept = [&](double residual) {
      auto q = p;
      q.back() += residual * 7.0 / 6.0 * dir;
      return keypoint_filter(identity_matches(7), keypoints_at(p), keypoints_at(q)).pairs.size();
    };
    c.expect(kept(0.0199) == 7, "residual 0.0199 m shed");
    c.expect(kept(0.0201) == 6, "residual 0.0201 m kept");
  }
  // Area.
  {
    auto square = [](double side) {
      std::vector<Vec3d> p;
      for (double x : {0.0, side})
        for (double y : {0.0, side}) p.push_back(Vec3d(x, y, 2.0));
      return p;
    };
    c.expect(surface_area_filter(square(std::sqrt(0.0321)), square(std::sqrt(0.0321))), "area 0.0321 rejected");
    c.expect(!surface_area_filter(square(std::sqrt(0.0319)), square(std::sqrt(0.0319))), "area 0.0319 accepted");
  }
  // tau_d: every pixel compares depths delta * |ray| apart, |ray| >= 1.
  {
    const CachedFrame near = flat_cache(2.0f);
    c.expect(reproject_check(near, flat_cache(2.149f), id).valid_count > 0, "tau_d 0.149 rejected everywhere");
    c.expect(reproject_check(near, flat_cache(2.151f), id).valid_count == 0, "tau_d 0.151 accepted");
  }
  // tau_n.
  {
    const CachedFrame wall = flat_cache(2.0f);
    c.expect(reproject_check(wall, tilted_cache(std::acos(0.905)), id).valid_count > 100, "tau_n 0.905 rejected");
    c.expect(reproject_check(wall, tilted_cache(std::acos(0.895)), id).valid_count == 0, "tau_n 0.895 accepted");
  }
  // tau_c.
  {
    const CachedFrame a = flat_cache(2.0f, 0.5f);
    c.expect(reproject_check(a, flat_cache(2.0f, 0.595f), id).valid_count == a.valid_count(), "tau_c 0.095 rejected");
    c.expect(reproject_check(a, flat_cache(2.0f, 0.605f), id).valid_count == 0, "tau_c 0.105 accepted");
  }
  // Verification error.
  {
    const CachedFrame a = flat_cache(2.0f);
    double pass_max = 0.0, fail_min = 1.0;
    for (double delta = 0.060; delta <= 0.090; delta += 0.0005) {
      const VerifyResult r = dense_verify(a, flat_cache(static_cast<float>(2.0 + delta)), id);
      c.expect(r.pass == (r.error <= 0.075), fmt("verify verdict wrong at error %.4f", r.error));
      if (r.pass) pass_max = std::max(pass_max, r.error);
      else fail_min = std::min(fail_min, r.error);
    }
    c.expect(pass_max > 0.073 && fail_min < 0.077, "verification sweep does not straddle 0.075");
  }
  // N_min.
  {
    const std::vector<Vec3d> p{{-0.4, -0.3, 2.0}, {0.4, -0.3, 2.2}, {0.0, 0.35, 1.8}, {0.3, 0.3, 2.4}, {-0.3, 0.2, 1.6}};
    const auto kps = keypoints_at(p);
    c.expect(keypoint_filter(identity_matches(5), kps, kps).valid, "5 correspondences rejected");
    c.expect(!keypoint_filter(identity_matches(4), kps, kps).valid, "4 correspondences accepted");
  }
  // 96 valid pixels at 80 x 60: a full (a + 2) x (b + 2) block has a x b normals.
  {
    auto block = [](int a, int b) {
      return low_cache([=](int x, int y) { return x >= 10 && x < 12 + a && y >= 10 && y < 12 + b ? 2.0f : 0.0f; });
    };
    const CachedFrame full = flat_cache(2.0f);
    c.expect(min_valid_pixels(full, FilterConfig{}) == 96, "minimum is not 96 pixels");
    c.expect(dense_verify(block(12, 8), full, id).pass, "96 pixels rejected");
    c.expect(!dense_verify(block(19, 5), full, id).pass, "95 pixels accepted");
  }
  return finish(c, "residual 0.02 m, area 0.032 m^2, tau_d 0.15, tau_n 0.9, tau_c 0.1, verify 0.075 m, N_min 5, "
                   "96 px: both sides");
}

// ---- 5 ---------------------------------------------------------------------

RigidTransform left_perturbed(const RigidTransform& t, const Vec6d& delta) {
  return exp_twist(Twist::from_vector(delta)) * t;
}

bool smooth_at(const Vec2d& uv) {
  for (int a = 0; a < 2; ++a) {
    const double frac = uv[a] - std::floor(uv[a]);
    if (std::abs(frac - 0.5) < 1e-3 || frac < 1e-3 || frac > 1.0 - 1e-3) return false;
  }
  return true;
}

Outcome solver_correctness() {
  Checks c;
  Rng rng(105);
  const Renderer renderer(room_scene(2));
  const Intrinsics& k = renderer.intrinsics();
  const std::vector<RigidTransform> truth{look_pose(Vec3d(0.1, 0.0, 0.0), 0.3, 0.05),
                                          look_pose(Vec3d(0.15, 0.02, 0.05), 0.33, 0.04),
                                          look_pose(Vec3d(0.2, -0.03, 0.08), 0.37, 0.06)};
  std::vector<CachedFrame> caches;
  for (const auto& p : truth) caches.push_back(build_cache(renderer.render(p), k));

  // Matrix-free against materialized J^T J.
  double worst_apply = 0.0;
  {
    AlignmentProblem p;
    p.poses = truth;
    for (const auto& cache : caches) p.caches.push_back(&cache);
    p.sets = pose_graph(rng, 3, 12, 0.002).sets;
    for (std::size_t f = 1; f < 3; ++f) p.poses[f] = RigidTransform{random_rotation(rng, 0.01), random_vector(rng, 0.01)} * p.poses[f];
    const auto edges = dense_edges(p, DenseParams{});
    for (double w_dense : {0.0, 1.0}) {
      const NormalEquations eq = build_normal_equations(p, edges, EnergyWeights{}, w_dense, DenseParams{});
      const MatXd h = eq.materialize();
      for (int trial = 0; trial < 10; ++trial) {
        const VecXd x = VecXd::Random(eq.dim());
        VecXd y;
        eq.apply(x, y);
        worst_apply = std::max(worst_apply, (y - h * x).cwiseAbs().maxCoeff() / std::max(1.0, (h * x).cwiseAbs().maxCoeff()));
      }
    }
  }
  c.expect(worst_apply < 1e-10, "matrix-free product differs");

  // PCG against a direct solve.
  double worst_pcg = 0.0;
  for (int dim = 6; dim <= 120; dim += 6) {
    MatXd m(dim, dim);
    for (int r = 0; r < dim; ++r)
      for (int col = 0; col < dim; ++col) m(r, col) = gaussian(rng, 1.0);
    const MatXd a = m * m.transpose() + dim * MatXd::Identity(dim, dim);
    VecXd b(dim);
    for (int r = 0; r < dim; ++r) b[r] = gaussian(rng, 1.0);
    PcgConfig cfg;
    cfg.max_iterations = 10 * dim;
    cfg.tolerance = 1e-13;
    const PcgResult res = pcg_solve([&](const VecXd& x, VecXd& y) { y = a * x; }, b, a.diagonal(), cfg);
    worst_pcg = std::max(worst_pcg, (res.x - a.ldlt().solve(b)).cwiseAbs().maxCoeff());
  }
  c.expect(worst_pcg < 1e-8, "pcg differs from the direct solve");

  // Jacobians against central differences.
  const double eps = 1e-6;
  double worst_jac = 0.0;
  int checked_photo = 0, checked_geo = 0;
  for (int config = 0; config < 50; ++config) {
    const int i = config % 3, j = (i + 1 + config % 2) % 3;
    const RigidTransform ti = RigidTransform{random_rotation(rng, 0.005), random_vector(rng, 0.005)} * truth[i];
    const RigidTransform tj = RigidTransform{random_rotation(rng, 0.005), random_vector(rng, 0.005)} * truth[j];
    const CachedFrame& ci = caches[i];
    const CachedFrame& cj = caches[j];
    for (int sample = 0; sample < 20; ++sample) {
      const int x = std::uniform_int_distribution<int>(1, 78)(rng);
      const int y = std::uniform_int_distribution<int>(1, 58)(rng);
      GeoResidual geo;
      PhotoResidual photo;
      if (!geo_residual(ci, cj, ti, tj, x, y, DenseParams{}, geo)) continue;
      const Vec2d uv = cj.intrinsics.project_unchecked(tj.inverse() * (ti * ci.points(x, y).cast<double>()));
      if (!smooth_at(uv)) continue;
      const bool has_photo = photo_residual(ci, cj, ti, tj, x, y, DenseParams{}, photo);
      for (int side = 0; side < 2; ++side)
        for (int a = 0; a < 6; ++a) {
          const Vec6d d = eps * Vec6d::Unit(a);
          const RigidTransform ti_p = side == 0 ? left_perturbed(ti, d) : ti, ti_m = side == 0 ? left_perturbed(ti, -d) : ti;
          const RigidTransform tj_p = side == 1 ? left_perturbed(tj, d) : tj, tj_m = side == 1 ? left_perturbed(tj, -d) : tj;
          GeoResidual gp, gm;
          if (!geo_residual(ci, cj, ti_p, tj_p, x, y, DenseParams{}, gp) ||
              !geo_residual(ci, cj, ti_m, tj_m, x, y, DenseParams{}, gm)) {
            c.expect(false, "geometric residual masked under a tiny step");
            continue;
          }
          const double an = side == 0 ? geo.j_i(a) : geo.j_j(a);
          worst_jac = std::max(worst_jac, std::abs((gp.r - gm.r) / (2 * eps) - an) / std::max(1.0, std::abs(an)));
          ++checked_geo;
          if (!has_photo) continue;
          PhotoResidual pp, pm;
          if (!photo_residual(ci, cj, ti_p, tj_p, x, y, DenseParams{}, pp) ||
              !photo_residual(ci, cj, ti_m, tj_m, x, y, DenseParams{}, pm)) {
            c.expect(false, "photometric residual masked under a tiny step");
            continue;
          }
          const Vec2d an2 = side == 0 ? photo.j_i.col(a) : photo.j_j.col(a);
          worst_jac = std::max(worst_jac, ((pp.r - pm.r) / (2 * eps) - an2).cwiseAbs().maxCoeff() /
                                              std::max(1.0, an2.cwiseAbs().maxCoeff()));
          ++checked_photo;
        }
    }
    const RigidTransform t = random_transform(rng);
    const Vec3d p = random_vector(rng, 2.0);
    const Mat36d an = point_jacobian(t * p);
    for (int a = 0; a < 6; ++a) {
      const Vec6d d = eps * Vec6d::Unit(a);
      const Vec3d fd = (left_perturbed(t, d) * p - left_perturbed(t, -d) * p) / (2 * eps);
      worst_jac = std::max(worst_jac, (fd - an.col(a)).cwiseAbs().maxCoeff() / std::max(1.0, an.col(a).cwiseAbs().maxCoeff()));
    }
  }
  c.expect(worst_jac < 1e-4, "jacobian mismatch");
  c.expect(checked_geo > 1000 && checked_photo > 1000, "too few jacobian samples");
  return finish(c, fmt("apply vs materialized %.2g (rel); pcg vs direct %.2g (n <= 120); jacobians %.2g rel over 50 "
                       "configurations (%d geo, %d photo, 300 sparse columns)",
                       worst_apply, worst_pcg, worst_jac, checked_geo, checked_photo));
}

// ---- 6 ---------------------------------------------------------------------

Outcome chunk_solve() {
  Checks c;
  Rng rng(106);
  SolverConfig cfg;
  cfg.use_dense = false;
  cfg.max_iterations = 20;
  cfg.pcg.max_iterations = 200;
  cfg.pcg.tolerance = 1e-12;
  auto solve = [&](double noise) {
    const PoseGraphFixture fx = pose_graph(rng, 11, 15, noise);
    AlignmentProblem p;
    p.poses.assign(11, RigidTransform::identity());
    p.sets = fx.sets;
    return ate_rmse(gauss_newton(p, EnergyWeights{}, cfg).poses, fx.poses).rmse;
  };
  double exact = 0.0, noisy = 0.0;
  for (int trial = 0; trial < 20; ++trial) exact = std::max(exact, solve(0.0));
  for (int seed = 0; seed < 20; ++seed) noisy = std::max(noisy, solve(0.005));
  c.expect(exact < 1e-6, "exact chunk ATE >= 1e-6 m");
  c.expect(noisy < 0.005, "noisy chunk ATE >= 5 mm");
  return finish(c, fmt("11 frames from identity: worst ATE exact %.2g m (20 chunks), 5 mm noise %.2g m (20 seeds)",
                       exact, noisy));
}

// ---- 7 ---------------------------------------------------------------------

Outcome loop_closure() {
  const SyntheticSequence seq(load_synthetic(kSource / "configs" / "synthetic" / "loop.json"));
  const PipelineConfig config = load_config(kSource / "configs" / "fine.json");
  const auto t0 = Clock::now();
  const PipelineResult r = run_pipeline(seq, config);
  const double minutes = seconds_since(t0) / 60.0;
  Checks c;
  c.expect(r.report.ate_chain && *r.report.ate_chain > 0.03, "chained ATE <= 3 cm");
  c.expect(r.report.ate && *r.report.ate < 0.01, "optimized ATE >= 1 cm");
  c.expect(minutes < 10.0, "wall clock >= 10 min");
  return finish(c, fmt("300 frames: chained ATE %.2f cm, optimized ATE %.2f cm, %d/%d registered, %.1f min",
                       r.report.ate_chain.value_or(-0.01) * 100, r.report.ate.value_or(-0.01) * 100,
                       r.report.registered, r.report.frames, minutes));
}

// ---- 8 ---------------------------------------------------------------------

Outcome pruning_precision() {
  Rng rng(108);
  const PoseGraphFixture fx = pose_graph(rng, 30, 10, 0.002, 0.1);
  AlignmentProblem p;
  p.poses = fx.poses;
  for (const auto& s : fx.sets)
    if (s.frame_j - s.frame_i <= 4) p.sets.push_back(s);
  const std::size_t true_sets = p.sets.size();

  // False loop closures: frame i's points claimed at a wrong place in frame j.
  std::set<std::pair<int, int>> injected;
  while (injected.size() < 20) {
    const int i = std::uniform_int_distribution<int>(0, 29)(rng), j = std::uniform_int_distribution<int>(0, 29)(rng);
    if (j - i <= 4 || !injected.insert({i, j}).second) continue;
    const RigidTransform lie{random_rotation(rng, 0.5), random_unit(rng) * uniform(rng, 0.3, 1.0)};
    CorrespondenceSet s;
    s.frame_i = i;
    s.frame_j = j;
    s.valid = true;
    for (int k = 0; k < 10; ++k) {
      Correspondence corr;
      corr.p_i = Vec3d(uniform(rng, -1.0, 1.0), uniform(rng, -0.8, 0.8), uniform(rng, 1.0, 3.0));
      corr.p_j = fx.poses[j].inverse() * (lie * (fx.poses[i] * corr.p_i));
      s.pairs.push_back(corr);
    }
    s.t_ij = fx.poses[j].inverse() * lie * fx.poses[i];
    p.sets.push_back(std::move(s));
  }
  for (std::size_t f = 1; f < p.poses.size(); ++f)
    p.poses[f] = RigidTransform{random_rotation(rng, 0.01), random_vector(rng, 0.01)} * p.poses[f];

  SolverConfig cfg;
  cfg.use_dense = false;
  cfg.pcg.max_iterations = 200;
  const PrunedSolve solve = solve_with_pruning(p, EnergyWeights{}, cfg);
  int remaining_false = 0, kept_true = 0;
  for (const auto& s : p.sets) {
    if (injected.count({s.frame_i, s.frame_j})) ++remaining_false;
    else ++kept_true;
  }
  const double retained = double(kept_true) / true_sets;
  Checks c;
  c.expect(remaining_false == 0, "injected set survived");
  c.expect(retained >= 0.95, "fewer than 95% of true sets retained");
  return finish(c, fmt("20 injected: %d removed; true sets kept %d/%zu (%.1f%%); %zu pruning rounds, ATE %.2g m",
                       20 - remaining_false, kept_true, true_sets, 100 * retained, solve.rounds.size(),
                       ate_rmse(p.poses, fx.poses).rmse));
}

// ---- 9 ---------------------------------------------------------------------

Outcome relocalization() {
  const SyntheticSpec spec = load_synthetic(kSource / "configs" / "synthetic" / "occlusion.json");
  const SyntheticSequence seq(spec);
  PipelineConfig config = load_config(kSource / "configs" / "fine.json");
  config.reconstruct = false;
  const PipelineResult r = run_pipeline(seq, config);
  const auto [first, last] = spec.occlusions.at(0);
  Checks c;
  int occluded_registered = 0, later_unregistered = 0;
  for (int f = first; f < last; ++f) occluded_registered += r.trajectory.valid[f];
  for (int f = last; f < seq.size(); ++f) later_unregistered += !r.trajectory.valid[f];
  int first_back = -1;
  for (int f = last; f < seq.size() && first_back < 0; ++f)
    if (r.trajectory.valid[f]) first_back = f;
  c.expect(occluded_registered == 0, "an occluded frame was registered");
  c.expect(first_back >= 0, "tracking never resumed");
  c.expect(later_unregistered == 0, "frames after the occlusion left unregistered");
  c.expect(r.report.ate && *r.report.ate < 0.015, "ATE >= 1.5 cm");
  return finish(c, fmt("occluded [%d, %d): %d registered inside, first frame back %d, %d unregistered after, "
                       "%d/%d registered, ATE %.2f cm",
                       first, last, occluded_registered, first_back, later_unregistered, r.report.registered,
                       r.report.frames, r.report.ate.value_or(-0.01) * 100));
}

// ---- 10 --------------------------------------------------------------------

// GCF_ICL_NUIM names a directory holding kt0..kt3 in the TUM layout, each with
// a precomputed keypoints.bin (or keypoints.txt).
Outcome icl_nuim_stretch() {
  const char* root = std::getenv("GCF_ICL_NUIM");
  if (!root) return {false, "not run: set GCF_ICL_NUIM to a directory with kt0..kt3 and precomputed keypoints"};
  const double reference_cm[4] = {0.6, 0.4, 0.6, 1.1};
  Checks c;
  std::string detail;
  for (int s = 0; s < 4; ++s) {
    const fs::path dir = fs::path(root) / ("kt" + std::to_string(s));
    PipelineConfig config;
    for (const char* name : {"keypoints.bin", "keypoints.txt"})
      if (fs::exists(dir / name)) config.keypoints = dir / name;
    if (config.keypoints.empty() || !fs::exists(dir)) {
      c.expect(false, dir.string() + " or its keypoints missing");
      continue;
    }
    config.reconstruct = false;
    const PipelineResult r = run_pipeline(load_tum(dir), config);
    const double ate_cm = r.report.ate.value_or(1e9) * 100;
    c.expect(ate_cm <= 3.0 * reference_cm[s], fmt("kt%d ATE %.2f cm > 3x %.1f cm", s, ate_cm, reference_cm[s]));
    detail += fmt("%skt%d %.2f cm", detail.empty() ? "" : ", ", s, ate_cm);
  }
  return finish(c, detail.empty() ? "no sequence ran" : detail);
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
    bool gating;
  };
  const std::vector<Criterion> criteria{
      {1, "TSDF symmetry", tsdf_symmetry, true},
      {2, "Re-integration fixed point", reintegration_fixed_point, true},
      {3, "Kabsch and stability", kabsch_stability, true},
      {4, "Filter thresholds", filter_thresholds, true},
      {5, "Solver correctness", solver_correctness, true},
      {6, "Chunk solve accuracy", chunk_solve, true},
      {7, "Loop closure", loop_closure, true},
      {8, "Pruning precision", pruning_precision, true},
      {9, "Relocalization", relocalization, true},
      {10, "ICL-NUIM stretch", icl_nuim_stretch, false},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const char* verdict = o.pass ? "PASS" : (cr.gating ? "FAIL" : "FAIL (non-gating)");
    std::printf("[%2d] %-28s %s  %s\n", cr.id, cr.name, verdict, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass && cr.gating) ++failed;
  }
  std::printf("%d of 9 gating criteria passed\n", 9 - failed);
  return failed ? 1 : 0;
}
