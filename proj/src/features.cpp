#include "gcf/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace gcf {

Image<float> to_gray(const Image<Rgb8>& color) {
  Image<float> g(color.width, color.height);
  for (std::size_t i = 0; i < color.data.size(); ++i) g.data[i] = luminance(color.data[i]);
  return g;
}

namespace {

Image<float> gaussian_blur(const Image<float>& src, double sigma) {
  if (sigma <= 0.0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k = static_cast<float>(k / sum);

  const int w = src.width, h = src.height;
  Image<float> tmp(w, h), dst(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * src(std::clamp(x + i, 0, w - 1), y);
      tmp(x, y) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp(x, std::clamp(y + i, 0, h - 1));
      dst(x, y) = acc;
    }
  }
  return dst;
}

Image<float> half_size(const Image<float>& src) {
  Image<float> dst(src.width / 2, src.height / 2);
  for (int y = 0; y < dst.height; ++y)
    for (int x = 0; x < dst.width; ++x) dst(x, y) = src(2 * x, 2 * y);
  return dst;
}

Image<float> subtract(const Image<float>& a, const Image<float>& b) {
  Image<float> d(a.width, a.height);
  for (std::size_t i = 0; i < a.data.size(); ++i) d.data[i] = a.data[i] - b.data[i];
  return d;
}

struct Octave {
  std::vector<Image<float>> gauss;
  std::vector<Image<float>> dog;
  std::vector<double> sigmas;  // in octave pixels
};

struct Candidate {
  int octave;
  double x, y, s;   // refined position in octave pixels and scale index
  double response;  // |DoG| at the refined position
};

double dominant_orientation(const Image<float>& g, double x, double y, double sigma) {
  constexpr int kBins = 36;
  std::array<double, kBins> hist{};
  const double weight_sigma = 1.5 * sigma;
  const int radius = static_cast<int>(std::lround(3.0 * weight_sigma));
  const int cx = static_cast<int>(std::lround(x)), cy = static_cast<int>(std::lround(y));
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const int px = cx + dx, py = cy + dy;
      if (px < 1 || py < 1 || px + 1 >= g.width || py + 1 >= g.height) continue;
      const double gx = g(px + 1, py) - g(px - 1, py);
      const double gy = g(px, py + 1) - g(px, py - 1);
      const double mag = std::hypot(gx, gy);
      const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * weight_sigma * weight_sigma));
      double angle = std::atan2(gy, gx);
      if (angle < 0) angle += 2.0 * M_PI;
      const int bin = static_cast<int>(angle / (2.0 * M_PI) * kBins) % kBins;
      hist[bin] += w * mag;
    }
  }
  std::array<double, kBins> smooth{};
  for (int i = 0; i < kBins; ++i)
    smooth[i] = 0.25 * hist[(i + kBins - 1) % kBins] + 0.5 * hist[i] + 0.25 * hist[(i + 1) % kBins];
  const int peak = static_cast<int>(std::max_element(smooth.begin(), smooth.end()) - smooth.begin());
  const double l = smooth[(peak + kBins - 1) % kBins], c = smooth[peak], r = smooth[(peak + 1) % kBins];
  const double denom = l - 2.0 * c + r;
  const double offset = std::abs(denom) > 1e-12 ? 0.5 * (l - r) / denom : 0.0;
  double angle = (peak + 0.5 + offset) * 2.0 * M_PI / kBins;
  if (angle >= 2.0 * M_PI) angle -= 2.0 * M_PI;
  return angle;
}

std::vector<float> describe(const Image<float>& g, double x, double y, double sigma, double orientation) {
  constexpr int kCells = 4, kOri = 8;
  std::vector<float> desc(kCells * kCells * kOri, 0.0f);
  const double cell = 3.0 * sigma;
  const double co = std::cos(orientation), si = std::sin(orientation);
  const int radius = static_cast<int>(std::ceil(cell * std::sqrt(2.0) * (kCells + 1) * 0.5));
  const int cx = static_cast<int>(std::lround(x)), cy = static_cast<int>(std::lround(y));
  const double win_sigma = 0.5 * kCells;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const int px = cx + dx, py = cy + dy;
      if (px < 1 || py < 1 || px + 1 >= g.width || py + 1 >= g.height) continue;
      const double ox = px - x, oy = py - y;
      // Rotate into the keypoint frame, in units of cells.
      const double rx = (co * ox + si * oy) / cell;
      const double ry = (-si * ox + co * oy) / cell;
      const double bx = rx + kCells / 2.0 - 0.5;
      const double by = ry + kCells / 2.0 - 0.5;
      if (bx <= -1.0 || by <= -1.0 || bx >= kCells || by >= kCells) continue;
      const double gx = g(px + 1, py) - g(px - 1, py);
      const double gy = g(px, py + 1) - g(px, py - 1);
      const double mag = std::hypot(gx, gy);
      double angle = std::atan2(gy, gx) - orientation;
      while (angle < 0.0) angle += 2.0 * M_PI;
      while (angle >= 2.0 * M_PI) angle -= 2.0 * M_PI;
      const double bo = angle / (2.0 * M_PI) * kOri;
      const double w = mag * std::exp(-(rx * rx + ry * ry) / (2.0 * win_sigma * win_sigma));
      const int x0 = static_cast<int>(std::floor(bx)), y0 = static_cast<int>(std::floor(by));
      const int o0 = static_cast<int>(std::floor(bo));
      const double fx = bx - x0, fy = by - y0, fo = bo - o0;
      for (int iy = 0; iy < 2; ++iy) {
        const int yy = y0 + iy;
        if (yy < 0 || yy >= kCells) continue;
        const double wy = iy ? fy : 1.0 - fy;
        for (int ix = 0; ix < 2; ++ix) {
          const int xx = x0 + ix;
          if (xx < 0 || xx >= kCells) continue;
          const double wx = ix ? fx : 1.0 - fx;
          for (int io = 0; io < 2; ++io) {
            const int oo = (o0 + io) % kOri;
            const double wo = io ? fo : 1.0 - fo;
            desc[(yy * kCells + xx) * kOri + oo] += static_cast<float>(w * wx * wy * wo);
          }
        }
      }
    }
  }
  auto normalize = [&desc] {
    double n = 0.0;
    for (float v : desc) n += double(v) * v;
    n = std::sqrt(n);
    if (n > 0.0)
      for (auto& v : desc) v = static_cast<float>(v / n);
    return n > 0.0;
  };
  if (!normalize()) return {};
  for (auto& v : desc) v = std::min(v, 0.2f);
  normalize();
  return desc;
}

// Bilinear depth at a sub-pixel location. Returns 0 when a neighbour is
// invalid or the neighbours straddle a depth discontinuity.
double depth_at(const Image<float>& depth, const Vec2d& p, double consistency) {
  const int x0 = static_cast<int>(std::floor(p.x())), y0 = static_cast<int>(std::floor(p.y()));
  if (x0 < 0 || y0 < 0 || x0 + 1 >= depth.width || y0 + 1 >= depth.height) return 0.0;
  const double d00 = depth(x0, y0), d10 = depth(x0 + 1, y0), d01 = depth(x0, y0 + 1),
               d11 = depth(x0 + 1, y0 + 1);
  const double lo = std::min({d00, d10, d01, d11}), hi = std::max({d00, d10, d01, d11});
  if (lo > 0.0 && hi - lo <= consistency * lo) {
    const double ax = p.x() - x0, ay = p.y() - y0;
    return (1 - ay) * ((1 - ax) * d00 + ax * d10) + ay * ((1 - ax) * d01 + ax * d11);
  }
  return 0.0;
}

}  // namespace

std::vector<Keypoint> ReferenceDetector::detect(const RgbdFrame& frame, const Intrinsics& k) const {
  return detect_gray(to_gray(frame.color), frame.depth, k);
}

std::vector<Keypoint> ReferenceDetector::detect_gray(const Image<float>& gray, const Image<float>& depth,
                                                     const Intrinsics& k) const {
  const int S = params_.scales_per_octave;
  std::vector<Octave> octaves;
  Image<float> base = gaussian_blur(
      gray, std::sqrt(std::max(0.0, params_.sigma0 * params_.sigma0 - params_.input_blur * params_.input_blur)));
  for (int o = 0; o < params_.octaves; ++o) {
    if (base.width < 16 || base.height < 16) break;
    Octave oct;
    oct.gauss.push_back(base);
    oct.sigmas.push_back(params_.sigma0);
    for (int s = 1; s < S + 3; ++s) {
      const double sig_prev = params_.sigma0 * std::pow(2.0, double(s - 1) / S);
      const double sig = params_.sigma0 * std::pow(2.0, double(s) / S);
      oct.gauss.push_back(gaussian_blur(oct.gauss.back(), std::sqrt(sig * sig - sig_prev * sig_prev)));
      oct.sigmas.push_back(sig);
    }
    for (int s = 0; s + 1 < static_cast<int>(oct.gauss.size()); ++s)
      oct.dog.push_back(subtract(oct.gauss[s + 1], oct.gauss[s]));
    base = half_size(oct.gauss[S]);
    octaves.push_back(std::move(oct));
  }

  std::vector<Candidate> candidates;
  const double pre = 0.5 * params_.min_contrast;
  const double edge = (params_.edge_ratio + 1.0) * (params_.edge_ratio + 1.0) / params_.edge_ratio;
  constexpr int kBorder = 5;
  for (int o = 0; o < static_cast<int>(octaves.size()); ++o) {
    const auto& dog = octaves[o].dog;
    const int w = dog[0].width, h = dog[0].height;
    for (int s = 1; s <= S; ++s) {
      for (int y = kBorder; y < h - kBorder; ++y) {
        for (int x = kBorder; x < w - kBorder; ++x) {
          const float v = dog[s](x, y);
          if (std::abs(v) <= pre) continue;
          bool is_max = true, is_min = true;
          for (int ds = -1; ds <= 1 && (is_max || is_min); ++ds)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                if (!ds && !dy && !dx) continue;
                const float n = dog[s + ds](x + dx, y + dy);
                if (n >= v) is_max = false;
                if (n <= v) is_min = false;
              }
          if (!is_max && !is_min) continue;

          // Quadratic refinement in (x, y, scale).
          int xi = x, yi = y, si = s;
          Eigen::Vector3d offset = Eigen::Vector3d::Zero();
          Eigen::Vector3d grad;
          bool ok = false;
          for (int iter = 0; iter < 5; ++iter) {
            const auto& d0 = dog[si];
            const auto& dm = dog[si - 1];
            const auto& dp = dog[si + 1];
            grad << 0.5 * (d0(xi + 1, yi) - d0(xi - 1, yi)), 0.5 * (d0(xi, yi + 1) - d0(xi, yi - 1)),
                0.5 * (dp(xi, yi) - dm(xi, yi));
            const double c = d0(xi, yi);
            Eigen::Matrix3d hess;
            hess(0, 0) = d0(xi + 1, yi) + d0(xi - 1, yi) - 2 * c;
            hess(1, 1) = d0(xi, yi + 1) + d0(xi, yi - 1) - 2 * c;
            hess(2, 2) = dp(xi, yi) + dm(xi, yi) - 2 * c;
            hess(0, 1) = hess(1, 0) =
                0.25 * (d0(xi + 1, yi + 1) - d0(xi - 1, yi + 1) - d0(xi + 1, yi - 1) + d0(xi - 1, yi - 1));
            hess(0, 2) = hess(2, 0) =
                0.25 * (dp(xi + 1, yi) - dp(xi - 1, yi) - dm(xi + 1, yi) + dm(xi - 1, yi));
            hess(1, 2) = hess(2, 1) =
                0.25 * (dp(xi, yi + 1) - dp(xi, yi - 1) - dm(xi, yi + 1) + dm(xi, yi - 1));
            if (std::abs(hess.determinant()) < 1e-18) break;
            offset = -hess.ldlt().solve(grad);
            if (!offset.allFinite()) break;
            if (offset.cwiseAbs().maxCoeff() < 0.5) {
              ok = true;
              break;
            }
            xi += static_cast<int>(std::lround(offset.x()));
            yi += static_cast<int>(std::lround(offset.y()));
            si += static_cast<int>(std::lround(offset.z()));
            if (si < 1 || si > S || xi < kBorder || yi < kBorder || xi >= w - kBorder || yi >= h - kBorder)
              break;
          }
          if (!ok) continue;
          const auto& d0 = dog[si];
          const double response = std::abs(d0(xi, yi) + 0.5 * grad.dot(offset));
          if (response < params_.min_contrast) continue;
          const double dxx = d0(xi + 1, yi) + d0(xi - 1, yi) - 2 * d0(xi, yi);
          const double dyy = d0(xi, yi + 1) + d0(xi, yi - 1) - 2 * d0(xi, yi);
          const double dxy =
              0.25 * (d0(xi + 1, yi + 1) - d0(xi - 1, yi + 1) - d0(xi + 1, yi - 1) + d0(xi - 1, yi - 1));
          const double tr = dxx + dyy, det = dxx * dyy - dxy * dxy;
          if (det <= 0.0 || tr * tr / det >= edge) continue;
          candidates.push_back({o, xi + offset.x(), yi + offset.y(), si + offset.z(), response});
        }
      }
    }
  }

  // Duplicates can arise when refinement moves two extrema to the same
  // location; keep the strongest.
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.octave != b.octave) return a.octave < b.octave;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  std::vector<Keypoint> out;
  for (const auto& c : candidates) {
    if (static_cast<int>(out.size()) >= params_.target_count) break;
    const double factor = std::ldexp(1.0, c.octave);
    const Vec2d pixel(c.x * factor, c.y * factor);
    bool duplicate = false;
    for (const auto& kp : out)
      if ((kp.pixel - pixel).squaredNorm() < 1.0) duplicate = true;
    if (duplicate) continue;
    const double d = depth_at(depth, pixel, params_.depth_consistency);
    if (!(d > 0.0)) continue;
    const auto& oct = octaves[c.octave];
    const int s_round = std::clamp(static_cast<int>(std::lround(c.s)), 0, static_cast<int>(oct.gauss.size()) - 1);
    const double sigma_oct = params_.sigma0 * std::pow(2.0, c.s / S);
    Keypoint kp;
    kp.pixel = pixel;
    kp.depth = d;
    kp.point_cam = k.unproject(pixel, d);
    kp.scale = sigma_oct * factor;
    kp.orientation = dominant_orientation(oct.gauss[s_round], c.x, c.y, sigma_oct);
    kp.descriptor = describe(oct.gauss[s_round], c.x, c.y, sigma_oct, kp.orientation);
    if (kp.descriptor.empty()) continue;
    out.push_back(std::move(kp));
  }
  return out;
}

std::vector<Keypoint> FileDetector::detect(const RgbdFrame& frame, const Intrinsics& k) const {
  auto it = per_frame_.find(frame.index);
  if (it == per_frame_.end()) return {};
  std::vector<Keypoint> out;
  for (Keypoint kp : it->second) {
    if (!(kp.depth > 0.0)) continue;
    kp.point_cam = k.unproject(kp.pixel, kp.depth);
    out.push_back(std::move(kp));
  }
  return out;
}

float descriptor_distance(std::span<const float> a, std::span<const float> b) {
  float s = 0.0f;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    const float d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {

struct Nearest {
  int best = -1;
  float d1 = std::numeric_limits<float>::infinity();
  float d2 = std::numeric_limits<float>::infinity();
};

// Nearest neighbour of each row. The runner-up is the nearest column of a
// different group; without groups every column is its own group.
std::vector<Nearest> nearest_rows(const Eigen::MatrixXf& dist, std::span<const int> groups_cols) {
  std::vector<Nearest> out(dist.rows());
  for (int r = 0; r < dist.rows(); ++r) {
    Nearest n;
    for (int c = 0; c < dist.cols(); ++c) {
      if (dist(r, c) < n.d1) {
        n.d1 = dist(r, c);
        n.best = c;
      }
    }
    for (int c = 0; c < dist.cols(); ++c) {
      if (c == n.best) continue;
      if (!groups_cols.empty() && groups_cols[c] == groups_cols[n.best]) continue;
      n.d2 = std::min(n.d2, dist(r, c));
    }
    out[r] = n;
  }
  return out;
}

}  // namespace

std::vector<RawMatch> match_descriptors(std::span<const Keypoint> a, std::span<const Keypoint> b,
                                        const MatchParams& params, std::span<const int> groups_a,
                                        std::span<const int> groups_b) {
  if (a.empty() || b.empty()) return {};
  const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
  const int dim = static_cast<int>(a[0].descriptor.size());
  Eigen::MatrixXf da(dim, na), db(dim, nb);
  for (int i = 0; i < na; ++i)
    for (int d = 0; d < dim; ++d) da(d, i) = d < static_cast<int>(a[i].descriptor.size()) ? a[i].descriptor[d] : 0.0f;
  for (int j = 0; j < nb; ++j)
    for (int d = 0; d < dim; ++d) db(d, j) = d < static_cast<int>(b[j].descriptor.size()) ? b[j].descriptor[d] : 0.0f;
  // |a - b|^2 = |a|^2 + |b|^2 - 2 a.b
  Eigen::MatrixXf dist = -2.0f * (da.transpose() * db);
  const Eigen::VectorXf sa = da.colwise().squaredNorm().transpose();
  const Eigen::RowVectorXf sb = db.colwise().squaredNorm();
  dist.colwise() += sa;
  dist.rowwise() += sb;
  dist = dist.cwiseMax(0.0f).cwiseSqrt();

  const auto ab = nearest_rows(dist, groups_b);
  const Eigen::MatrixXf dist_t = dist.transpose();
  const auto ba = nearest_rows(dist_t, groups_a);
  auto passes = [&](const Nearest& n) { return n.best >= 0 && n.d1 < params.ratio * n.d2; };

  std::vector<RawMatch> out;
  for (int i = 0; i < na; ++i) {
    const auto& n = ab[i];
    if (!passes(n)) continue;
    const auto& back = ba[n.best];
    if (!passes(back) || back.best != i) continue;
    // The Gram-form distances only rank; report the exact distance.
    out.push_back({i, n.best, descriptor_distance(a[i].descriptor, b[n.best].descriptor)});
  }
  std::sort(out.begin(), out.end(), [](const RawMatch& x, const RawMatch& y) {
    if (x.distance != y.distance) return x.distance < y.distance;
    if (x.kp_a != y.kp_a) return x.kp_a < y.kp_a;
    return x.kp_b < y.kp_b;
  });
  return out;
}

}  // namespace gcf
