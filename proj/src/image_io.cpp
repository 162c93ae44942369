#include "pdpnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "pdpnet/errors.hpp"

namespace pdpnet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

void write_gray(const std::filesystem::path& path, int rows, int cols, int bit_depth,
                const std::vector<png_bytep>& row_ptrs) {
  auto file = open(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, cols, rows, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // rows are host (little-endian) order
  png_write_image(png, const_cast<png_bytepp>(row_ptrs.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Grid<std::uint16_t> read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFile("missing image file " + path.string());
  auto file = open(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed for " + path.string());
  }
  Grid<std::uint16_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed reading PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int cols = static_cast<int>(png_get_image_width(png, info));
  const int rows = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const auto row_bytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buffer(row_bytes * rows);
  std::vector<png_bytep> row_ptrs(rows);
  for (int r = 0; r < rows; ++r) row_ptrs[r] = buffer.data() + row_bytes * r;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out = Grid<std::uint16_t>(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (out_depth == 16) {
        std::uint16_t v;
        std::memcpy(&v, row_ptrs[r] + 2 * c, 2);
        out(r, c) = v;
      } else {
        out(r, c) = row_ptrs[r][c];
      }
    }
  return out;
}

void write_png16(const std::filesystem::path& path, const Grid<std::uint16_t>& pixels) {
  std::vector<std::uint16_t> data(pixels.values().begin(), pixels.values().end());
  std::vector<png_bytep> rows(pixels.rows());
  for (int r = 0; r < pixels.rows(); ++r)
    rows[r] = reinterpret_cast<png_bytep>(data.data() + static_cast<std::size_t>(r) * pixels.cols());
  write_gray(path, pixels.rows(), pixels.cols(), 16, rows);
}

void write_png8(const std::filesystem::path& path, const Grid<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> data(pixels.values().begin(), pixels.values().end());
  std::vector<png_bytep> rows(pixels.rows());
  for (int r = 0; r < pixels.rows(); ++r)
    rows[r] = data.data() + static_cast<std::size_t>(r) * pixels.cols();
  write_gray(path, pixels.rows(), pixels.cols(), 8, rows);
}

IntensityMapping fit_mapping(const Grid<float>& pixels) {
  const auto [lo, hi] = std::minmax_element(pixels.values().begin(), pixels.values().end());
  IntensityMapping m;
  m.offset = *lo;
  m.scale = *hi > *lo ? (static_cast<double>(*hi) - *lo) / 65535.0 : 1.0;
  return m;
}

void save_image(const std::filesystem::path& path, const Grid<float>& pixels,
                const IntensityMapping& mapping) {
  Grid<std::uint16_t> q(pixels.rows(), pixels.cols());
  for (int r = 0; r < pixels.rows(); ++r)
    for (int c = 0; c < pixels.cols(); ++c) {
      const double v = std::round((pixels(r, c) - mapping.offset) / mapping.scale);
      q(r, c) = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
    }
  write_png16(path, q);
}

Grid<float> load_image(const std::filesystem::path& path, const IntensityMapping& mapping) {
  const auto raw = read_png(path);
  Grid<float> out(raw.rows(), raw.cols());
  for (int r = 0; r < raw.rows(); ++r)
    for (int c = 0; c < raw.cols(); ++c)
      out(r, c) = static_cast<float>(mapping.offset + mapping.scale * raw(r, c));
  return out;
}

void save_mask(const std::filesystem::path& path, const Grid<std::uint8_t>& mask) {
  Grid<std::uint8_t> q(mask.rows(), mask.cols());
  for (int r = 0; r < mask.rows(); ++r)
    for (int c = 0; c < mask.cols(); ++c) q(r, c) = mask(r, c) ? 255 : 0;
  write_png8(path, q);
}

Grid<std::uint8_t> load_mask(const std::filesystem::path& path) {
  const auto raw = read_png(path);
  Grid<std::uint8_t> out(raw.rows(), raw.cols());
  for (int r = 0; r < raw.rows(); ++r)
    for (int c = 0; c < raw.cols(); ++c) out(r, c) = raw(r, c) ? 1 : 0;
  return out;
}

void save_visualisation(const std::filesystem::path& path, const Grid<float>& values) {
  const auto [lo, hi] = std::minmax_element(values.values().begin(), values.values().end());
  const double range = *hi > *lo ? static_cast<double>(*hi) - *lo : 1.0;
  Grid<std::uint8_t> q(values.rows(), values.cols());
  for (int r = 0; r < values.rows(); ++r)
    for (int c = 0; c < values.cols(); ++c)
      q(r, c) = static_cast<std::uint8_t>(std::lround(255.0 * (values(r, c) - *lo) / range));
  write_png8(path, q);
}

}  // namespace pdpnet
