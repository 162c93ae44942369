#pragma once

// Patch labelling (partition-thresholding-merging), bounding-box derivation from a
// patch grid, and crop/resize of images and masks. Everything here is pure and
// free of autodiff.

#include <cstdint>

#include "pdpnet/grid.hpp"

namespace pdpnet {

/// Per-patch tumour fraction. Stored as exact integer counts over a common
/// patch area so comparisons never suffer rounding.
struct RatioGrid {
  Grid<std::int64_t> counts;
  int patch_h = 0;
  int patch_w = 0;

  std::int64_t area() const { return static_cast<std::int64_t>(patch_h) * patch_w; }
  double ratio(int i, int j) const { return static_cast<double>(counts(i, j)) / area(); }
  Grid<double> ratios() const;
};

using PatchLabelGrid = Grid<std::uint8_t>;

/// How the box extent is read off the patch grid.
enum class ExtentMode {
  Count,  // m, n = largest number of ones in any column / row
  Span,   // m, n = rows / columns between the first and last one, inclusive
};

struct CropWindow {
  int row0 = 0;
  int col0 = 0;
  int row1 = 0;  // exclusive
  int col1 = 0;  // exclusive
  int side() const { return row1 - row0; }
  bool operator==(const CropWindow&) const = default;
};

struct BoundingBox {
  int height = 0;  // H_c, px
  int width = 0;   // W_c, px
  int first_col = 0;  // b_x, grid column
  int first_row = 0;  // b_y, grid row
  double center_x = 0.0;  // C_x, px
  double center_y = 0.0;  // C_y, px
  int side = 0;  // S_c, px
  CropWindow window;
  bool fallback = false;  // grid was empty, window covers the image
};

/// Tumour fraction of each of the g_h x g_w equal patches.
/// Throws NonDivisibleGrid unless the patch counts divide the mask extent.
RatioGrid patch_ratio_grid(const LabelMask& mask, int grid_h, int grid_w);

/// Patch-level label: 1 where the patch fraction strictly exceeds the
/// whole-mask tumour fraction.
PatchLabelGrid ptm(const LabelMask& mask, int grid_h, int grid_w);

/// Square crop box from a patch grid over a square image. An empty grid
/// yields the full-image fallback with `fallback` set.
BoundingBox derive_bbox(const PatchLabelGrid& grid, int patch_h, int patch_w, int image_h,
                        int image_w, ExtentMode mode = ExtentMode::Count);

/// Box covering the whole image, used when localization is disabled.
BoundingBox full_image_box(int image_h, int image_w);

Grid<float> resize_bilinear(const Grid<float>& src, int out_h, int out_w);
Grid<std::uint8_t> resize_nearest(const Grid<std::uint8_t>& src, int out_h, int out_w);

/// Cuts box.window out of the image and resamples it to out_px x out_px.
/// Bilinear for intensities, nearest neighbour for masks.
ImageSlice crop_and_resize(const ImageSlice& img, const BoundingBox& box, int out_px);
LabelMask crop_and_resize(const LabelMask& mask, const BoundingBox& box, int out_px);

/// Inverse of crop_and_resize for masks: resamples the crop back to the window
/// and places it in an otherwise empty mask of the source extent.
LabelMask paste_back(const LabelMask& crop, const BoundingBox& box, int image_h, int image_w);

}  // namespace pdpnet
