#pragma once

// Dataset ingestion and preparation: the synthetic multi-centre phantom
// generator, CSV manifests with patient-level splits, patient-level intensity
// normalisation and paired image/mask augmentation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pdpnet/grid.hpp"
#include "pdpnet/image_io.hpp"

namespace pdpnet {

/// Scanner differences applied to a whole cohort. Neutral values leave images untouched.
struct DomainShift {
  double gamma = 1.0;
  double intensity_scale = 1.0;
  double blur_sigma = 0.0;
  double resample_factor = 1.0;  // < 1 loses resolution (down then up)

  bool neutral() const {
    return gamma == 1.0 && intensity_scale == 1.0 && blur_sigma == 0.0 && resample_factor == 1.0;
  }
};

struct PhantomParams {
  int image_side = 128;
  int tumor_count_min = 1;
  int tumor_count_max = 1;
  double tumor_radius_min = 6.0;  // px
  double tumor_radius_max = 14.0;
  double contrast_min = 0.5;  // relative intensity lift over local parenchyma
  double contrast_max = 1.0;
  double irregularity = 0.3;  // harmonic amplitude, 0 gives ellipses
  double noise_sigma = 0.03;
  Spacing spacing{1.0, 1.0};
  DomainShift domain_shift;

  void validate() const;
};

struct Phantom {
  ImageSlice image;
  LabelMask mask;
  Grid<std::uint8_t> breast;  // region tumours are confined to
  int tumors = 0;
};

/// One slice, fully determined by (params, seed). Domain shift is not applied here.
Phantom generate_phantom(const PhantomParams& params, std::uint64_t seed);

/// Gamma curve, intensity rescale, Gaussian blur and down/up resampling.
Grid<float> apply_domain_shift(const Grid<float>& image, const DomainShift& shift);

Grid<float> gaussian_blur(const Grid<float>& image, double sigma);

struct ManifestRecord {
  std::filesystem::path image_path;  // as written in the manifest
  std::filesystem::path mask_path;
  std::string patient_id;
  int cohort_id = 1;
  Spacing spacing;
  IntensityMapping intensity;
  std::string split;
};

struct DatasetManifest {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::vector<ManifestRecord> records;

  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
  }
  std::vector<std::string> patients() const;  // sorted, unique
  std::vector<std::size_t> indices_of_split(const std::string& split) const;
};

inline const char* kManifestHeader =
    "image_path,mask_path,patient_id,cohort_id,spacing_y_mm,spacing_x_mm,intensity_offset,"
    "intensity_scale,split";

DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files = true);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Patient-disjoint split. Each named fraction gets round(f * patients) patients
/// in order; the last split takes the remainder.
DatasetManifest split_by_patient(DatasetManifest manifest,
                                 const std::vector<std::pair<std::string, double>>& fractions,
                                 std::uint64_t seed);

struct CohortSpec {
  PhantomParams phantom;
  int n_patients = 10;
  int slices_per_patient = 5;
  std::uint64_t seed = 1;
  int cohort_id = 1;
  std::vector<std::pair<std::string, double>> splits{{"train", 0.7}, {"val", 0.3}};
};

/// Writes images/ and masks/ PNGs plus manifest.csv under out_dir and returns
/// the manifest. Record randomness derives from (seed, cohort, patient, slice).
DatasetManifest generate_cohort(const CohortSpec& spec, const std::filesystem::path& out_dir);

/// Seed of one record, independent of generation order.
std::uint64_t record_seed(std::uint64_t seed, int cohort, int patient, int slice);

/// Zero-mean, unit-variance over all slices of one patient (sigma floored at
/// 1e-8), then bilinear resize to out_side x out_side.
std::vector<Grid<float>> normalize_patient(const std::vector<Grid<float>>& slices,
                                           int out_side = 128);

struct AugmentRanges {
  double scale_min = 0.92;
  double scale_max = 1.08;
  double translate = 0.10;  // fraction of the side, either direction
  double rotate_deg = 15.0;

  static AugmentRanges identity() { return {1.0, 1.0, 0.0, 0.0}; }
};

struct AffineParams {
  double scale = 1.0;
  double shift_x = 0.0;  // px
  double shift_y = 0.0;
  double angle_rad = 0.0;

  /// Forward map of a point (row, col) about the image centre.
  std::pair<double, double> apply(double row, double col, int rows, int cols) const;
};

AffineParams draw_affine(std::uint64_t seed, const AugmentRanges& ranges, int side);

/// Same random similarity transform on both: bilinear for the image, nearest
/// for the mask.
std::pair<Grid<float>, Grid<std::uint8_t>> augment(const Grid<float>& image,
                                                   const Grid<std::uint8_t>& mask,
                                                   std::uint64_t seed,
                                                   const AugmentRanges& ranges = {});

std::pair<Grid<float>, Grid<std::uint8_t>> warp(const Grid<float>& image,
                                                const Grid<std::uint8_t>& mask,
                                                const AffineParams& transform);

}  // namespace pdpnet
