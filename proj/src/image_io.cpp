#include "gcf/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

namespace gcf {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw ImageIoError("cannot open " + path.string());
  return f;
}

// Decoded rows after normalization to the requested bit depth and channels.
struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<png_byte> bytes;
  std::size_t row_bytes = 0;
};

Decoded decode(const std::filesystem::path& path, bool want_rgb) {
  FilePtr f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw ImageIoError("not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageIoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageIoError("libpng init failed");
  }
  Decoded out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("corrupt PNG: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (want_rgb) {
    if (depth == 16) png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  } else {
    // Depth images must be single-channel; PNG stores 16-bit samples big-endian.
    if (color_type != PNG_COLOR_TYPE_GRAY || depth != 16) {
      png_destroy_read_struct(&png, &info, nullptr);
      throw ImageIoError("expected a 16-bit grayscale PNG: " + path.string());
    }
    png_set_swap(png);
  }
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  out.row_bytes = png_get_rowbytes(png, info);
  out.bytes.resize(out.row_bytes * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = out.bytes.data() + y * out.row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void encode(const std::filesystem::path& path, int width, int height, int color_type, int bit_depth,
            const std::vector<png_bytep>& rows, bool swap16) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageIoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageIoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (swap16) png_set_swap(png);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image<std::uint16_t> read_png16(const std::filesystem::path& path) {
  const Decoded d = decode(path, false);
  Image<std::uint16_t> img(d.width, d.height);
  for (int y = 0; y < d.height; ++y)
    std::copy_n(reinterpret_cast<const std::uint16_t*>(d.bytes.data() + y * d.row_bytes), d.width,
                img.data.begin() + static_cast<std::ptrdiff_t>(y) * d.width);
  return img;
}

void write_png16(const std::filesystem::path& path, const Image<std::uint16_t>& image) {
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y)
    rows[y] = reinterpret_cast<png_bytep>(const_cast<std::uint16_t*>(&image(0, y)));
  encode(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, 16, rows, true);
}

Image<Rgb8> read_png_rgb(const std::filesystem::path& path) {
  const Decoded d = decode(path, true);
  Image<Rgb8> img(d.width, d.height);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      const png_byte* p = d.bytes.data() + y * d.row_bytes + 3 * x;
      img(x, y) = {p[0], p[1], p[2]};
    }
  return img;
}

void write_png_rgb(const std::filesystem::path& path, const Image<Rgb8>& image) {
  static_assert(sizeof(Rgb8) == 3);
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y) rows[y] = reinterpret_cast<png_bytep>(const_cast<Rgb8*>(&image(0, y)));
  encode(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 8, rows, false);
}

Image<float> read_depth_png(const std::filesystem::path& path, double scale) {
  const Image<std::uint16_t> raw = read_png16(path);
  Image<float> depth(raw.width, raw.height);
  for (std::size_t i = 0; i < raw.size(); ++i) depth.data[i] = static_cast<float>(raw.data[i] / scale);
  return depth;
}

void write_depth_png(const std::filesystem::path& path, const Image<float>& depth, double scale) {
  Image<std::uint16_t> raw(depth.width, depth.height);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double v = std::round(depth.data[i] * scale);
    raw.data[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
  }
  write_png16(path, raw);
}

}  // namespace gcf
