#include "gcf/frame.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace gcf {

int CachedFrame::valid_count() const {
  int n = 0;
  for (int y = 0; y < depth.height; ++y)
    for (int x = 0; x < depth.width; ++x) n += valid(x, y) ? 1 : 0;
  return n;
}

namespace {

void fill_derived(CachedFrame& c, const CacheParams& params) {
  const int w = c.depth.width;
  const int h = c.depth.height;
  c.points = Image<Eigen::Vector3f>(w, h, Eigen::Vector3f::Zero());
  c.normals = Image<Eigen::Vector3f>(w, h, Eigen::Vector3f::Zero());
  c.gradient = Image<Eigen::Vector2f>(w, h, Eigen::Vector2f::Zero());

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float d = c.depth(x, y);
      if (d > 0.0f) c.points(x, y) = c.intrinsics.unproject(Vec2d(x, y), d).cast<float>();
    }
  }

  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      const float d = c.depth(x, y);
      if (d <= 0.0f) continue;
      const float l = c.depth(x - 1, y), r = c.depth(x + 1, y);
      const float u = c.depth(x, y - 1), b = c.depth(x, y + 1);
      if (l <= 0.0f || r <= 0.0f || u <= 0.0f || b <= 0.0f) continue;
      const float jump = params.max_normal_depth_jump;
      if (std::abs(l - d) > jump || std::abs(r - d) > jump || std::abs(u - d) > jump ||
          std::abs(b - d) > jump)
        continue;
      const Eigen::Vector3f dx = c.points(x + 1, y) - c.points(x - 1, y);
      const Eigen::Vector3f dy = c.points(x, y + 1) - c.points(x, y - 1);
      Eigen::Vector3f n = dy.cross(dx);
      const float len = n.norm();
      if (!(len > 0.0f)) continue;
      n /= len;
      if (n.dot(c.points(x, y)) > 0.0f) n = -n;
      c.normals(x, y) = n;
    }
  }

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
      const int yu = std::max(y - 1, 0), yb = std::min(y + 1, h - 1);
      c.gradient(x, y) = Eigen::Vector2f(0.5f * (c.intensity(xr, y) - c.intensity(xl, y)),
                                         0.5f * (c.intensity(x, yb) - c.intensity(x, yu)));
    }
  }
}

}  // namespace

CachedFrame build_cache(const RgbdFrame& frame, const Intrinsics& k, const CacheParams& params) {
  const int W = frame.width(), H = frame.height();
  if (W <= 0 || H <= 0 || W % params.width != 0 || H % params.height != 0 ||
      frame.color.width != W || frame.color.height != H)
    throw std::invalid_argument("build_cache: frame size not divisible into cache blocks");
  const int fx = W / params.width;
  const int fy = H / params.height;

  Image<float> depth_low(params.width, params.height, 0.0f);
  Image<float> intensity_low(params.width, params.height, 0.0f);
  std::vector<float> samples;
  samples.reserve(std::size_t(fx) * fy);
  for (int y = 0; y < params.height; ++y) {
    for (int x = 0; x < params.width; ++x) {
      samples.clear();
      float lum = 0.0f;
      for (int by = 0; by < fy; ++by) {
        for (int bx = 0; bx < fx; ++bx) {
          const int px = x * fx + bx, py = y * fy + by;
          const float d = frame.depth(px, py);
          if (d > 0.0f) samples.push_back(d);
          lum += luminance(frame.color(px, py));
        }
      }
      intensity_low(x, y) = lum / float(fx * fy);
      if (!samples.empty()) {
        auto mid = samples.begin() + (samples.size() - 1) / 2;
        std::nth_element(samples.begin(), mid, samples.end());
        depth_low(x, y) = *mid;
      }
    }
  }
  return build_cache_from_low(frame.index, depth_low, intensity_low, k.downsampled(fx, fy), params);
}

CachedFrame build_cache_from_low(int index, const Image<float>& depth_low,
                                 const Image<float>& intensity_low, const Intrinsics& k_low,
                                 const CacheParams& params) {
  CachedFrame c;
  c.index = index;
  c.intrinsics = k_low;
  c.depth = depth_low;
  c.intensity = intensity_low;
  fill_derived(c, params);
  return c;
}

double frustum_overlap(const CachedFrame& a, const RigidTransform& pose_a, const CachedFrame& b,
                       const RigidTransform& pose_b) {
  const RigidTransform a_to_b = pose_b.inverse() * pose_a;
  int total = 0, inside = 0;
  for (int y = 0; y < a.depth.height; ++y) {
    for (int x = 0; x < a.depth.width; ++x) {
      if (!a.valid_depth(x, y)) continue;
      ++total;
      const Vec3d p = a_to_b * a.points(x, y).cast<double>();
      if (p.z() <= 0.0) continue;
      if (b.intrinsics.contains(b.intrinsics.project_unchecked(p))) ++inside;
    }
  }
  return total == 0 ? 0.0 : double(inside) / double(total);
}

}  // namespace gcf
