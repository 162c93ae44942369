#pragma once

#include <cstdint>
#include <filesystem>

#include "pdpnet/grid.hpp"

namespace pdpnet {

/// Greyscale PNG, 8 or 16 bit. Reading returns raw sample values.
Grid<std::uint16_t> read_png(const std::filesystem::path& path);
void write_png16(const std::filesystem::path& path, const Grid<std::uint16_t>& pixels);
void write_png8(const std::filesystem::path& path, const Grid<std::uint8_t>& pixels);

/// Linear intensity mapping: intensity = offset + scale * sample.
struct IntensityMapping {
  double offset = 0.0;
  double scale = 1.0;
};

/// Mapping that spreads [min, max] of `pixels` over the 16-bit range.
IntensityMapping fit_mapping(const Grid<float>& pixels);

void save_image(const std::filesystem::path& path, const Grid<float>& pixels,
                const IntensityMapping& mapping);
Grid<float> load_image(const std::filesystem::path& path, const IntensityMapping& mapping = {});

/// Masks are stored as 0/255 and read back as 0/1 (any non-zero sample is tumour).
void save_mask(const std::filesystem::path& path, const Grid<std::uint8_t>& mask);
Grid<std::uint8_t> load_mask(const std::filesystem::path& path);

/// Min-max normalised 8-bit rendering, used for debug dumps.
void save_visualisation(const std::filesystem::path& path, const Grid<float>& values);

}  // namespace pdpnet
