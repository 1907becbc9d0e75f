#include "gcf/filters.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace gcf {

namespace {

struct Tightness {
  KabschResult fit;
  std::vector<double> residuals;
  bool ok = false;
};

Tightness evaluate(const std::vector<Vec3d>& p, const std::vector<Vec3d>& q, const FilterConfig& cfg) {
  Tightness t;
  t.fit = kabsch(p, q);
  t.residuals.resize(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) t.residuals[k] = (t.fit.transform * p[k] - q[k]).norm();
  const bool tight = t.fit.max_residual <= cfg.max_kabsch_residual;
  t.ok = tight && condition_analysis(p, q, cfg.cond_limit).stable;
  return t;
}

}  // namespace

CorrespondenceSet keypoint_filter(std::span<const RawMatch> matches, std::span<const Keypoint> kps_i,
                                  std::span<const Keypoint> kps_j, const FilterConfig& cfg, int frame_i,
                                  int frame_j) {
  CorrespondenceSet out;
  out.frame_i = frame_i;
  out.frame_j = frame_j;

  std::vector<Correspondence> cur;
  std::vector<Vec3d> p, q;
  auto sync = [&] {
    p.clear();
    q.clear();
    for (const auto& c : cur) {
      p.push_back(c.p_i);
      q.push_back(c.p_j);
    }
  };

  for (const auto& m : matches) {
    // A keypoint may take part in at most one correspondence.
    const bool reused = std::any_of(cur.begin(), cur.end(), [&](const Correspondence& c) {
      return c.kp_i == m.kp_a || c.kp_j == m.kp_b;
    });
    if (reused) continue;
    cur.push_back({kps_i[m.kp_a].point_cam, kps_j[m.kp_b].point_cam, m.kp_a, m.kp_b});
    sync();
    while (cur.size() >= 3) {
      const Tightness t = evaluate(p, q, cfg);
      if (t.ok) break;
      const auto worst = std::max_element(t.residuals.begin(), t.residuals.end()) - t.residuals.begin();
      cur.erase(cur.begin() + worst);
      sync();
    }
  }

  if (cur.size() >= 3 && static_cast<int>(cur.size()) >= cfg.n_min) {
    const Tightness t = evaluate(p, q, cfg);
    if (t.ok) {
      out.pairs = std::move(cur);
      out.t_ij = t.fit.transform;
      out.valid = true;
    }
  }
  return out;
}

namespace {

using Vec2 = Eigen::Vector2d;

double cross2(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Andrew's monotone chain, counter-clockwise without collinear points.
std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

// Minimum-area enclosing rectangle: one side is collinear with a hull edge.
double min_area_rectangle(const std::vector<Vec2>& hull) {
  if (hull.size() < 3) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < hull.size(); ++e) {
    const Vec2 edge = hull[(e + 1) % hull.size()] - hull[e];
    const double len = edge.norm();
    if (len <= 0.0) continue;
    const Vec2 u = edge / len;
    const Vec2 v(-u.y(), u.x());
    double umin = std::numeric_limits<double>::infinity(), umax = -umin, vmin = umin, vmax = -umin;
    for (const auto& p : hull) {
      const double a = p.dot(u), b = p.dot(v);
      umin = std::min(umin, a);
      umax = std::max(umax, a);
      vmin = std::min(vmin, b);
      vmax = std::max(vmax, b);
    }
    best = std::min(best, (umax - umin) * (vmax - vmin));
  }
  return best;
}

}  // namespace

double spanned_area(std::span<const Vec3d> points, bool exact_obb) {
  if (points.size() < 3) return 0.0;
  Vec3d mean = Vec3d::Zero();
  for (const auto& p : points) mean += p;
  mean /= double(points.size());
  Mat3d cov = Mat3d::Zero();
  for (const auto& p : points) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3d> eig(cov);
  // Eigenvalues ascend; the two principal axes are the last two columns.
  const Vec3d a1 = eig.eigenvectors().col(2);
  const Vec3d a2 = eig.eigenvectors().col(1);
  std::vector<Vec2> proj;
  proj.reserve(points.size());
  for (const auto& p : points) proj.emplace_back((p - mean).dot(a1), (p - mean).dot(a2));
  if (!exact_obb) {
    double umin = std::numeric_limits<double>::infinity(), umax = -umin, vmin = umin, vmax = -umin;
    for (const auto& p : proj) {
      umin = std::min(umin, p.x());
      umax = std::max(umax, p.x());
      vmin = std::min(vmin, p.y());
      vmax = std::max(vmax, p.y());
    }
    return (umax - umin) * (vmax - vmin);
  }
  return min_area_rectangle(convex_hull(std::move(proj)));
}

bool surface_area_filter(std::span<const Vec3d> points_i, std::span<const Vec3d> points_j,
                         const FilterConfig& cfg) {
  return spanned_area(points_i, cfg.exact_obb) >= cfg.min_area &&
         spanned_area(points_j, cfg.exact_obb) >= cfg.min_area;
}

namespace {

double intensity_at(const Image<float>& img, const Vec2d& uv) {
  BilinearSample<double> s;
  if (sample_bilinear(img, uv.x(), uv.y(), s)) return s.value;
  const int x = std::clamp(static_cast<int>(std::lround(uv.x())), 0, img.width - 1);
  const int y = std::clamp(static_cast<int>(std::lround(uv.y())), 0, img.height - 1);
  return img(x, y);
}

}  // namespace

DirectionalCheck reproject_check(const CachedFrame& ci, const CachedFrame& cj, const RigidTransform& t_ij,
                                 const FilterConfig& cfg) {
  DirectionalCheck out;
  double sum = 0.0;
  for (int y = 0; y < ci.depth.height; ++y) {
    for (int x = 0; x < ci.depth.width; ++x) {
      if (!ci.valid(x, y)) continue;
      const Vec3d p = t_ij * ci.points(x, y).cast<double>();
      if (p.z() <= 0.0) continue;
      const Vec2d uv = cj.intrinsics.project_unchecked(p);
      const int u = static_cast<int>(std::lround(uv.x()));
      const int v = static_cast<int>(std::lround(uv.y()));
      if (!cj.depth.in_bounds(u, v) || !cj.valid(u, v)) continue;
      const double dist = (p - cj.points(u, v).cast<double>()).norm();
      if (!(dist < cfg.tau_d)) continue;
      const Vec3d n = t_ij.rotation * ci.normals(x, y).cast<double>();
      if (!(n.dot(cj.normals(u, v).cast<double>()) > cfg.tau_n)) continue;
      const double photo = std::abs(double(ci.intensity(x, y)) - intensity_at(cj.intensity, uv));
      if (!(photo < cfg.tau_c)) continue;
      ++out.valid_count;
      sum += dist;
    }
  }
  out.mean_error = out.valid_count > 0 ? sum / out.valid_count : 0.0;
  return out;
}

int min_valid_pixels(const CachedFrame& cache, const FilterConfig& cfg) {
  return static_cast<int>(std::ceil(cfg.min_valid_fraction * cache.depth.width * cache.depth.height - 1e-9));
}

VerifyResult dense_verify(const CachedFrame& ci, const CachedFrame& cj, const RigidTransform& t_ij,
                          const FilterConfig& cfg, double max_error) {
  const double limit = max_error >= 0.0 ? max_error : cfg.max_verify_error;
  const DirectionalCheck fwd = reproject_check(ci, cj, t_ij, cfg);
  const DirectionalCheck bwd = reproject_check(cj, ci, t_ij.inverse(), cfg);
  VerifyResult r;
  r.error = std::max(fwd.mean_error, bwd.mean_error);
  r.valid_count = std::min(fwd.valid_count, bwd.valid_count);
  r.pass = r.error <= limit && fwd.valid_count >= min_valid_pixels(ci, cfg) &&
           bwd.valid_count >= min_valid_pixels(cj, cfg);
  return r;
}

CascadeResult filter_pair(std::span<const RawMatch> matches, std::span<const Keypoint> kps_i,
                          std::span<const Keypoint> kps_j, const CachedFrame& cache_i,
                          const CachedFrame& cache_j, const FilterConfig& cfg, int frame_i, int frame_j) {
  CascadeResult r;
  r.raw_matches = static_cast<int>(matches.size());
  r.raw_proposal = r.raw_matches >= cfg.n_min;
  r.set.frame_i = frame_i;
  r.set.frame_j = frame_j;
  if (!r.raw_proposal) return r;

  CorrespondenceSet set = keypoint_filter(matches, kps_i, kps_j, cfg, frame_i, frame_j);
  if (!set.valid) return r;
  r.passed_keypoint = true;
  r.keypoint_transform = set.t_ij;

  std::vector<Vec3d> pi, pj;
  for (const auto& c : set.pairs) {
    pi.push_back(c.p_i);
    pj.push_back(c.p_j);
  }
  if (!surface_area_filter(pi, pj, cfg)) return r;
  r.passed_area = true;

  r.verify = dense_verify(cache_i, cache_j, set.t_ij, cfg);
  if (!r.verify.pass) return r;
  r.passed_dense = true;
  r.set = std::move(set);
  return r;
}

}  // namespace gcf
