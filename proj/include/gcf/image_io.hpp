#pragma once

#include "gcf/image.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>

namespace gcf {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 16-bit single-channel PNG, values unscaled.
Image<std::uint16_t> read_png16(const std::filesystem::path& path);
void write_png16(const std::filesystem::path& path, const Image<std::uint16_t>& image);

// 8-bit PNG; gray, gray+alpha and RGBA inputs are expanded to RGB.
Image<Rgb8> read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const Image<Rgb8>& image);

// Depth in meters from a 16-bit PNG holding depth * scale; 0 stays invalid.
Image<float> read_depth_png(const std::filesystem::path& path, double scale);
// Rounds depth * scale to the nearest representable value.
void write_depth_png(const std::filesystem::path& path, const Image<float>& depth, double scale);

}  // namespace gcf
