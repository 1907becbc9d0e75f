#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace gcf {

// Row-major image with value semantics.
template <class T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, const T& fill = T{}) : width(w), height(h), data(std::size_t(w) * h, fill) {}

  T& operator()(int x, int y) { return data[std::size_t(y) * width + x]; }
  const T& operator()(int x, int y) const { return data[std::size_t(y) * width + x]; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool operator==(const Image&) const = default;
};

struct Rgb8 {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb8&) const = default;
};

inline float luminance(const Rgb8& c) {
  return (0.299f * c.r + 0.587f * c.g + 0.114f * c.b) / 255.0f;
}

// Bilinear sample with analytic derivative w.r.t. the sample position,
// evaluated in double precision. Returns false if the 2x2 support leaves the
// image.
template <class Out>
struct BilinearSample {
  Out value;
  Out d_dx;
  Out d_dy;
};

inline double widen(float v) { return v; }
inline Eigen::Vector2d widen(const Eigen::Vector2f& v) { return v.cast<double>(); }

template <class T>
auto sample_bilinear(const Image<T>& img, double u, double v,
                     BilinearSample<decltype(widen(std::declval<T>()))>& out) -> bool {
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  if (x0 < 0 || y0 < 0 || x0 + 1 >= img.width || y0 + 1 >= img.height) return false;
  using Out = decltype(widen(std::declval<T>()));
  const double ax = u - x0;
  const double ay = v - y0;
  const Out v00 = widen(img(x0, y0));
  const Out v10 = widen(img(x0 + 1, y0));
  const Out v01 = widen(img(x0, y0 + 1));
  const Out v11 = widen(img(x0 + 1, y0 + 1));
  const Out top = v00 + ax * (v10 - v00);
  const Out bottom = v01 + ax * (v11 - v01);
  out.value = top + ay * (bottom - top);
  out.d_dx = (1.0 - ay) * (v10 - v00) + ay * (v11 - v01);
  out.d_dy = bottom - top;
  return true;
}

}  // namespace gcf
