#include "pdpnet/ptm_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pdpnet {

namespace {

void check_divisible(const LabelMask& mask, int grid_h, int grid_w) {
  const int h = mask.values.rows();
  const int w = mask.values.cols();
  if (grid_h <= 0 || grid_w <= 0 || h % grid_h != 0 || w % grid_w != 0)
    throw NonDivisibleGrid("grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                           " does not divide mask " + std::to_string(h) + "x" + std::to_string(w));
}

// Ceiling division that is correct for negative numerators.
std::int64_t ceil_div(std::int64_t num, std::int64_t den) {
  std::int64_t q = num / den;
  if ((num % den != 0) && ((num > 0) == (den > 0))) ++q;
  return q;
}

// Source index sampled by output index d when resampling n_src -> n_out with
// pixel-centre alignment. Ties go to the smaller source index.
int nearest_index(int d, int n_src, int n_out) {
  const std::int64_t num = static_cast<std::int64_t>(2 * d + 1) * n_src - 2LL * n_out;
  const auto idx = ceil_div(num, 2LL * n_out);
  return static_cast<int>(std::clamp<std::int64_t>(idx, 0, n_src - 1));
}

CropWindow centred_window(double cy, double cx, int side, int h, int w) {
  int r0 = static_cast<int>(std::floor(cy - side / 2.0));
  int c0 = static_cast<int>(std::floor(cx - side / 2.0));
  r0 = std::clamp(r0, 0, h - side);
  c0 = std::clamp(c0, 0, w - side);
  return {r0, c0, r0 + side, c0 + side};
}

void check_window(const CropWindow& win, int h, int w) {
  if (win.row0 < 0 || win.col0 < 0 || win.row1 > h || win.col1 > w || win.row1 <= win.row0 ||
      win.col1 <= win.col0)
    throw InvalidWindow("crop window [" + std::to_string(win.row0) + "," +
                        std::to_string(win.row1) + ")x[" + std::to_string(win.col0) + "," +
                        std::to_string(win.col1) + ") exceeds image " + std::to_string(h) + "x" +
                        std::to_string(w));
}

template <typename T>
Grid<T> cut(const Grid<T>& src, const CropWindow& win) {
  Grid<T> out(win.row1 - win.row0, win.col1 - win.col0);
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out(r, c) = src(win.row0 + r, win.col0 + c);
  return out;
}

}  // namespace

Grid<double> RatioGrid::ratios() const {
  Grid<double> out(counts.rows(), counts.cols());
  for (int i = 0; i < counts.rows(); ++i)
    for (int j = 0; j < counts.cols(); ++j) out(i, j) = ratio(i, j);
  return out;
}

RatioGrid patch_ratio_grid(const LabelMask& mask, int grid_h, int grid_w) {
  check_divisible(mask, grid_h, grid_w);
  RatioGrid out;
  out.patch_h = mask.values.rows() / grid_h;
  out.patch_w = mask.values.cols() / grid_w;
  out.counts = Grid<std::int64_t>(grid_h, grid_w, 0);
  for (int r = 0; r < mask.values.rows(); ++r)
    for (int c = 0; c < mask.values.cols(); ++c)
      if (mask.values(r, c)) ++out.counts(r / out.patch_h, c / out.patch_w);
  return out;
}

PatchLabelGrid ptm(const LabelMask& mask, int grid_h, int grid_w) {
  const RatioGrid ratios = patch_ratio_grid(mask, grid_h, grid_w);
  const std::int64_t total = mask.count();
  const std::int64_t pixels = static_cast<std::int64_t>(mask.values.rows()) * mask.values.cols();
  // count / area > total / pixels, cross-multiplied to stay in integers.
  PatchLabelGrid out(grid_h, grid_w, 0);
  for (int i = 0; i < grid_h; ++i)
    for (int j = 0; j < grid_w; ++j)
      out(i, j) = ratios.counts(i, j) * pixels > total * ratios.area() ? 1 : 0;
  return out;
}

BoundingBox full_image_box(int image_h, int image_w) {
  BoundingBox box;
  box.side = std::min(image_h, image_w);
  box.height = image_h;
  box.width = image_w;
  box.center_x = image_w / 2.0;
  box.center_y = image_h / 2.0;
  box.window = centred_window(box.center_y, box.center_x, box.side, image_h, image_w);
  box.fallback = true;
  return box;
}

BoundingBox derive_bbox(const PatchLabelGrid& grid, int patch_h, int patch_w, int image_h,
                        int image_w, ExtentMode mode) {
  if (image_h != image_w)
    throw ShapeMismatch("derive_bbox needs a square image, got " + std::to_string(image_h) + "x" +
                        std::to_string(image_w));
  if (grid.rows() * patch_h != image_h || grid.cols() * patch_w != image_w)
    throw ShapeMismatch("patch grid " + std::to_string(grid.rows()) + "x" +
                        std::to_string(grid.cols()) + " of " + std::to_string(patch_h) + "x" +
                        std::to_string(patch_w) + " px does not tile image " +
                        std::to_string(image_h) + "x" + std::to_string(image_w));

  int first_row = -1, last_row = -1, first_col = grid.cols(), last_col = -1;
  int max_col_count = 0, max_row_count = 0;
  std::vector<int> col_count(grid.cols(), 0);
  for (int i = 0; i < grid.rows(); ++i) {
    int row_count = 0;
    for (int j = 0; j < grid.cols(); ++j) {
      if (!grid(i, j)) continue;
      ++row_count;
      ++col_count[j];
      if (first_row < 0) first_row = i;
      last_row = i;
      first_col = std::min(first_col, j);
      last_col = std::max(last_col, j);
    }
    max_row_count = std::max(max_row_count, row_count);
  }
  if (first_row < 0) return full_image_box(image_h, image_w);
  for (int c : col_count) max_col_count = std::max(max_col_count, c);

  int m = max_col_count;
  int n = max_row_count;
  if (mode == ExtentMode::Span) {
    m = last_row - first_row + 1;
    n = last_col - first_col + 1;
  }

  BoundingBox box;
  box.height = m * patch_h;
  box.width = n * patch_w;
  box.first_col = first_col;
  box.first_row = first_row;
  box.center_x = first_col * patch_w + box.width / 2.0;
  box.center_y = first_row * patch_h + box.height / 2.0;
  const int longest = std::max(box.height, box.width);
  const int shortest_image = std::min(image_h, image_w);
  box.side = longest + (shortest_image - longest) / 2;  // both non-negative: floor
  box.window = centred_window(box.center_y, box.center_x, box.side, image_h, image_w);
  return box;
}

Grid<float> resize_bilinear(const Grid<float>& src, int out_h, int out_w) {
  if (src.rows() == out_h && src.cols() == out_w) return src;
  Grid<float> out(out_h, out_w);
  const double sy = static_cast<double>(src.rows()) / out_h;
  const double sx = static_cast<double>(src.cols()) / out_w;
  for (int r = 0; r < out_h; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, src.rows() - 1.0);
    const int y0 = static_cast<int>(y);
    const int y1 = std::min(y0 + 1, src.rows() - 1);
    const double ty = y - y0;
    for (int c = 0; c < out_w; ++c) {
      const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, src.cols() - 1.0);
      const int x0 = static_cast<int>(x);
      const int x1 = std::min(x0 + 1, src.cols() - 1);
      const double tx = x - x0;
      const double top = src(y0, x0) + tx * (src(y0, x1) - src(y0, x0));
      const double bottom = src(y1, x0) + tx * (src(y1, x1) - src(y1, x0));
      out(r, c) = static_cast<float>(top + ty * (bottom - top));
    }
  }
  return out;
}

Grid<std::uint8_t> resize_nearest(const Grid<std::uint8_t>& src, int out_h, int out_w) {
  Grid<std::uint8_t> out(out_h, out_w);
  std::vector<int> cols(out_w);
  for (int c = 0; c < out_w; ++c) cols[c] = nearest_index(c, src.cols(), out_w);
  for (int r = 0; r < out_h; ++r) {
    const int sr = nearest_index(r, src.rows(), out_h);
    for (int c = 0; c < out_w; ++c) out(r, c) = src(sr, cols[c]);
  }
  return out;
}

ImageSlice crop_and_resize(const ImageSlice& img, const BoundingBox& box, int out_px) {
  check_window(box.window, img.pixels.rows(), img.pixels.cols());
  ImageSlice out = img;
  out.pixels = resize_bilinear(cut(img.pixels, box.window), out_px, out_px);
  const double f = static_cast<double>(box.window.side()) / out_px;
  out.spacing = {img.spacing.row_mm * f, img.spacing.col_mm * f};
  return out;
}

LabelMask crop_and_resize(const LabelMask& mask, const BoundingBox& box, int out_px) {
  check_window(box.window, mask.values.rows(), mask.values.cols());
  LabelMask out;
  out.values = resize_nearest(cut(mask.values, box.window), out_px, out_px);
  const double f = static_cast<double>(box.window.side()) / out_px;
  out.spacing = {mask.spacing.row_mm * f, mask.spacing.col_mm * f};
  return out;
}

LabelMask paste_back(const LabelMask& crop, const BoundingBox& box, int image_h, int image_w) {
  check_window(box.window, image_h, image_w);
  const auto& win = box.window;
  const auto window_mask = resize_nearest(crop.values, win.row1 - win.row0, win.col1 - win.col0);
  LabelMask out;
  out.values = Grid<std::uint8_t>(image_h, image_w, 0);
  const double f = static_cast<double>(win.side()) / crop.values.rows();
  out.spacing = {crop.spacing.row_mm / f, crop.spacing.col_mm / f};
  for (int r = 0; r < window_mask.rows(); ++r)
    for (int c = 0; c < window_mask.cols(); ++c)
      out.values(win.row0 + r, win.col0 + c) = window_mask(r, c);
  return out;
}

}  // namespace pdpnet
