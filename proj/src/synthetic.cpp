#include "gcf/synthetic.hpp"

#include "gcf/parallel.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace gcf {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double lattice(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ static_cast<std::uint64_t>(x));
  h = splitmix(h ^ static_cast<std::uint64_t>(y));
  h = splitmix(h ^ static_cast<std::uint64_t>(z));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double noise_octave(const Vec3d& p, std::uint64_t seed) {
  const Vec3d f = p.array().floor();
  const auto ix = static_cast<std::int64_t>(f.x()), iy = static_cast<std::int64_t>(f.y()),
             iz = static_cast<std::int64_t>(f.z());
  const double u = smooth(p.x() - f.x()), v = smooth(p.y() - f.y()), w = smooth(p.z() - f.z());
  double c[2][2][2];
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) c[dz][dy][dx] = lattice(ix + dx, iy + dy, iz + dz, seed);
  const auto lerp = [](double a, double b, double t) { return a + t * (b - a); };
  const double y0 = lerp(lerp(c[0][0][0], c[0][0][1], u), lerp(c[0][1][0], c[0][1][1], u), v);
  const double y1 = lerp(lerp(c[1][0][0], c[1][0][1], u), lerp(c[1][1][0], c[1][1][1], u), v);
  return lerp(y0, y1, w);
}

// Ray-shape intersections; return +inf on a miss.
struct Intersect {
  const Vec3d& o;
  const Vec3d& d;
  RayHit* hit;

  static constexpr double kMin = 1e-9;

  double operator()(const PlaneShape& s) const {
    const double denom = s.normal.dot(d);
    if (std::abs(denom) < 1e-12) return kInf;
    const double t = s.normal.dot(s.point - o) / denom;
    if (t <= kMin) return kInf;
    hit->normal = s.normal.normalized();
    return t;
  }
  double operator()(const SphereShape& s) const {
    const Vec3d oc = o - s.center;
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return kInf;
    const double root = std::sqrt(disc);
    double t = -b - root;
    if (t <= kMin) t = -b + root;
    if (t <= kMin) return kInf;
    hit->normal = (o + t * d - s.center) / s.radius;
    return t;
  }
  double operator()(const BoxShape& s) const {
    double t_near = -kInf, t_far = kInf;
    int axis_near = 0, axis_far = 0;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(d[a]) < 1e-15) {
        if (o[a] < s.min[a] || o[a] > s.max[a]) return kInf;
        continue;
      }
      double t0 = (s.min[a] - o[a]) / d[a], t1 = (s.max[a] - o[a]) / d[a];
      if (t0 > t1) std::swap(t0, t1);
      if (t0 > t_near) {
        t_near = t0;
        axis_near = a;
      }
      if (t1 < t_far) {
        t_far = t1;
        axis_far = a;
      }
    }
    if (t_near > t_far) return kInf;
    double t;
    int axis;
    if (t_near > kMin) {
      t = t_near;
      axis = axis_near;
    } else if (t_far > kMin) {
      t = t_far;
      axis = axis_far;
    } else {
      return kInf;
    }
    hit->normal = Vec3d::Zero();
    hit->normal[axis] = 1.0;
    return t;
  }

  static constexpr double kInf = std::numeric_limits<double>::infinity();
};

}  // namespace

double value_noise(const Vec3d& p, std::uint64_t seed, int octaves) {
  double sum = 0.0, amp = 0.5, norm = 0.0, freq = 1.0;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * noise_octave(p * freq, seed + static_cast<std::uint64_t>(o) * 1013u);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return norm > 0.0 ? sum / norm : 0.0;
}

Eigen::Vector3f Texture::albedo(const Vec3d& p) const {
  if (flat) return color_a;
  const Vec3d q = p * frequency;
  const double n1 = std::clamp(0.5 + contrast * (value_noise(q, seed, octaves) - 0.5), 0.0, 1.0);
  const double n2 = value_noise(q * 1.7 + Vec3d(17.3, -4.1, 9.7), seed ^ 0xA5A5A5A5ull, octaves);
  const Eigen::Vector3f mixed = color_a + static_cast<float>(n1) * (color_b - color_a);
  return mixed * static_cast<float>(0.6 + 0.4 * n2);
}

std::optional<RayHit> Scene::cast(const Vec3d& origin, const Vec3d& direction) const {
  std::optional<RayHit> best;
  double best_t = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    RayHit h;
    const double t = std::visit(Intersect{origin, direction, &h}, shapes[s].geometry);
    if (t < best_t) {
      best_t = t;
      h.t = t;
      h.shape = static_cast<int>(s);
      if (h.normal.dot(direction) > 0.0) h.normal = -h.normal;
      best = h;
    }
  }
  return best;
}

std::vector<RigidTransform> interpolate_poses(const std::vector<PoseKey>& keys, int frames) {
  std::vector<RigidTransform> out;
  if (keys.empty()) return std::vector<RigidTransform>(frames);
  for (int f = 0; f < frames; ++f) {
    auto hi = std::find_if(keys.begin(), keys.end(), [&](const PoseKey& k) { return k.frame >= f; });
    if (hi == keys.begin()) {
      out.push_back(keys.front().pose);
      continue;
    }
    if (hi == keys.end()) {
      out.push_back(keys.back().pose);
      continue;
    }
    const PoseKey& b = *hi;
    const PoseKey& a = *(hi - 1);
    const double t = (f - a.frame) / (b.frame - a.frame);
    const Eigen::Quaterniond qa(a.pose.rotation), qb(b.pose.rotation);
    out.push_back({qa.slerp(t, qb).toRotationMatrix(), a.pose.translation + t * (b.pose.translation - a.pose.translation)});
  }
  return out;
}

RigidTransform look_pose(const Vec3d& position, double yaw, double pitch) {
  const Vec3d z(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch));
  const Vec3d x = Vec3d(0.0, 0.0, -1.0).cross(z).normalized();
  const Vec3d y = z.cross(x);
  RigidTransform t;
  t.rotation.col(0) = x;
  t.rotation.col(1) = y;
  t.rotation.col(2) = z;
  t.translation = position;
  return t;
}

bool SyntheticSequence::occluded(int i) const {
  return std::any_of(spec_.occlusions.begin(), spec_.occlusions.end(),
                     [&](const auto& r) { return i >= r.first && i < r.second; });
}

RgbdFrame SyntheticSequence::frame(int i) const {
  const Intrinsics& k = spec_.intrinsics;
  RgbdFrame f;
  f.index = i;
  f.timestamp = timestamp(i);
  f.color = Image<Rgb8>(k.width, k.height);
  f.depth = Image<float>(k.width, k.height, 0.0f);
  if (occluded(i)) return f;

  const RigidTransform& pose = spec_.trajectory.at(i);
  for_each_index(Execution::Parallel, k.height, [&](std::ptrdiff_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < k.width; ++x) {
      const Vec3d ray_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Vec3d dir = (pose.rotation * ray_cam).normalized();
      const auto hit = spec_.scene.cast(pose.translation, dir);
      if (!hit) continue;
      const Vec3d p = pose.translation + hit->t * dir;
      const double z = (pose.inverse() * p).z();
      if (z <= 0.0 || z > spec_.max_depth) continue;
      f.depth(x, y) = static_cast<float>(z);
      const float shade = 0.7f + 0.3f * static_cast<float>(std::abs(hit->normal.dot(spec_.scene.light_direction)));
      const Eigen::Vector3f c = spec_.scene.shapes[hit->shape].texture.albedo(p) * shade * 255.0f;
      const auto byte = [](float v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); };
      f.color(x, y) = {byte(c[0]), byte(c[1]), byte(c[2])};
    }
  });

  if (spec_.noise.sigma > 0.0 || spec_.noise.sigma_quadratic > 0.0) {
    std::mt19937_64 rng(splitmix(spec_.noise.seed ^ splitmix(static_cast<std::uint64_t>(i))));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (float& d : f.depth.data) {
      const double n = normal(rng);
      if (d <= 0.0f) continue;
      const double noisy = d + spec_.noise.sigma_at(d) * n;
      d = noisy > 0.0 ? static_cast<float>(noisy) : 0.0f;
    }
  }
  return f;
}

Intrinsics synthetic_intrinsics(int width, int height) {
  Intrinsics k;
  const double s = width / 640.0;
  k.fx = 525.0 * s;
  k.fy = 525.0 * height / 480.0;
  k.cx = (width - 1) / 2.0;
  k.cy = (height - 1) / 2.0;
  k.width = width;
  k.height = height;
  return k;
}

Scene room_scene(std::uint64_t seed) {
  Scene scene;
  Texture walls;
  walls.seed = seed;
  walls.frequency = 5.0;
  scene.shapes.push_back({BoxShape{Vec3d(-3.0, -3.0, -1.2), Vec3d(3.0, 3.0, 1.8)}, walls});

  const std::array<Eigen::Vector3f, 4> palette_a{Eigen::Vector3f(0.6f, 0.1f, 0.1f), Eigen::Vector3f(0.1f, 0.45f, 0.15f),
                                                 Eigen::Vector3f(0.1f, 0.15f, 0.55f), Eigen::Vector3f(0.5f, 0.4f, 0.05f)};
  constexpr int kObjects = 8;
  for (int o = 0; o < kObjects; ++o) {
    const double angle = 2.0 * std::numbers::pi * (o + 0.25) / kObjects;
    const double radius = 2.0 + 0.25 * (o % 3);
    const Vec3d c(radius * std::cos(angle), radius * std::sin(angle), -0.5 + 0.35 * (o % 4));
    Texture t;
    t.seed = seed * 31 + static_cast<std::uint64_t>(o) + 2;
    t.frequency = 8.0;
    t.color_a = palette_a[o % 4];
    t.color_b = Eigen::Vector3f(0.95f, 0.95f, 0.9f);
    if (o % 2 == 0) {
      const Vec3d half(0.25 + 0.05 * (o % 3), 0.3, 0.25 + 0.1 * (o % 2));
      scene.shapes.push_back({BoxShape{c - half, c + half}, t});
    } else {
      scene.shapes.push_back({SphereShape{c, 0.3 + 0.05 * (o % 3)}, t});
    }
  }
  return scene;
}

SyntheticSpec loop_spec(int frames, int width, int height, double noise_sigma) {
  SyntheticSpec spec;
  spec.scene = room_scene();
  spec.intrinsics = synthetic_intrinsics(width, height);
  spec.noise.sigma = noise_sigma;
  for (int f = 0; f < frames; ++f) {
    const double theta = 2.0 * std::numbers::pi * f / frames;
    const Vec3d position(0.8 * std::cos(theta), 0.8 * std::sin(theta), 0.1 * std::sin(3.0 * theta));
    const double yaw = theta + 0.35 * std::sin(2.0 * theta);
    const double pitch = 0.1 * std::sin(5.0 * theta);
    spec.trajectory.push_back(look_pose(position, yaw, pitch));
  }
  return spec;
}

SyntheticSpec static_spec(int frames, int width, int height) {
  SyntheticSpec spec;
  spec.scene = room_scene();
  spec.intrinsics = synthetic_intrinsics(width, height);
  spec.trajectory.assign(frames, look_pose(Vec3d(0.8, 0.0, 0.0), 0.0));
  return spec;
}

SyntheticSpec occlusion_spec(int frames, int first, int count, int width, int height, double noise_sigma) {
  SyntheticSpec spec = loop_spec(frames, width, height, noise_sigma);
  spec.occlusions.push_back({first, first + count});
  return spec;
}

}  // namespace gcf
