#include "pdpnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "pdpnet/errors.hpp"
#include "pdpnet/ptm_geometry.hpp"

namespace pdpnet {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Nearest index with ties resolved toward the smaller index.
int round_half_down(double x) { return static_cast<int>(std::ceil(x - 0.5)); }

double sample_bilinear(const Grid<float>& img, double y, double x) {
  y = std::clamp(y, 0.0, img.rows() - 1.0);
  x = std::clamp(x, 0.0, img.cols() - 1.0);
  const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
  const int y1 = std::min(y0 + 1, img.rows() - 1), x1 = std::min(x0 + 1, img.cols() - 1);
  const double ty = y - y0, tx = x - x0;
  const double top = img(y0, x0) + tx * (img(y0, x1) - img(y0, x0));
  const double bottom = img(y1, x0) + tx * (img(y1, x1) - img(y1, x0));
  return top + ty * (bottom - top);
}

// Keeps only the 4-connected component of `mask` containing (r0, c0).
Grid<std::uint8_t> component_at(const Grid<std::uint8_t>& mask, int r0, int c0) {
  Grid<std::uint8_t> out(mask.rows(), mask.cols(), 0);
  if (!mask(r0, c0)) return out;
  std::vector<std::pair<int, int>> stack{{r0, c0}};
  out(r0, c0) = 1;
  while (!stack.empty()) {
    auto [r, c] = stack.back();
    stack.pop_back();
    const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const int rr = r + dr[k], cc = c + dc[k];
      if (rr < 0 || cc < 0 || rr >= mask.rows() || cc >= mask.cols()) continue;
      if (mask(rr, cc) && !out(rr, cc)) {
        out(rr, cc) = 1;
        stack.emplace_back(rr, cc);
      }
    }
  }
  return out;
}

Grid<std::uint8_t> erode(const Grid<std::uint8_t>& mask, int radius) {
  Grid<std::uint8_t> out = mask;
  for (int it = 0; it < radius; ++it) {
    Grid<std::uint8_t> next = out;
    for (int r = 0; r < out.rows(); ++r)
      for (int c = 0; c < out.cols(); ++c) {
        if (!out(r, c)) continue;
        if (r == 0 || c == 0 || r == out.rows() - 1 || c == out.cols() - 1 || !out(r - 1, c) ||
            !out(r + 1, c) || !out(r, c - 1) || !out(r, c + 1))
          next(r, c) = 0;
      }
    out = std::move(next);
  }
  return out;
}

struct TumorShape {
  double cy, cx, radius, aspect, orientation;
  std::vector<double> amplitude, phase;  // harmonics 2..5

  double boundary_radius(double theta) const {
    const double a = radius, b = radius * aspect;
    const double t = theta - orientation;
    const double ellipse = a * b / std::hypot(b * std::cos(t), a * std::sin(t));
    double perturb = 1.0;
    for (std::size_t k = 0; k < amplitude.size(); ++k)
      perturb += amplitude[k] * std::cos((k + 2) * theta + phase[k]);
    return ellipse * std::max(perturb, 0.4);
  }
};

Grid<std::uint8_t> rasterize(const TumorShape& shape, int side) {
  Grid<std::uint8_t> raw(side, side, 0);
  const int r_lo = std::max(0, static_cast<int>(shape.cy - 3 * shape.radius));
  const int r_hi = std::min(side - 1, static_cast<int>(shape.cy + 3 * shape.radius) + 1);
  const int c_lo = std::max(0, static_cast<int>(shape.cx - 3 * shape.radius));
  const int c_hi = std::min(side - 1, static_cast<int>(shape.cx + 3 * shape.radius) + 1);
  for (int r = r_lo; r <= r_hi; ++r)
    for (int c = c_lo; c <= c_hi; ++c) {
      const double dy = r - shape.cy, dx = c - shape.cx;
      const double rho = std::hypot(dy, dx);
      if (rho <= shape.boundary_radius(std::atan2(dy, dx))) raw(r, c) = 1;
    }
  const int r0 = std::clamp(static_cast<int>(std::lround(shape.cy)), 0, side - 1);
  const int c0 = std::clamp(static_cast<int>(std::lround(shape.cx)), 0, side - 1);
  return component_at(raw, r0, c0);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

}  // namespace

void PhantomParams::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigInvalid("phantom params: " + msg); };
  if (image_side < 32) fail("image_side must be at least 32");
  if (tumor_count_min < 1 || tumor_count_max < tumor_count_min) fail("tumor count range invalid");
  if (tumor_radius_min < 2 || tumor_radius_max < tumor_radius_min)
    fail("tumor radius range invalid");
  if (2.0 * tumor_radius_max > image_side / 2.0) fail("tumor radius does not fit the image");
  if (contrast_min < 0 || contrast_max < contrast_min) fail("contrast range invalid");
  if (irregularity < 0 || irregularity > 1) fail("irregularity must be in [0,1]");
  if (noise_sigma < 0) fail("noise_sigma must be non-negative");
  if (spacing.row_mm <= 0 || spacing.col_mm <= 0) fail("spacing must be positive");
  if (domain_shift.gamma <= 0 || domain_shift.intensity_scale <= 0 ||
      domain_shift.blur_sigma < 0 || domain_shift.resample_factor <= 0 ||
      domain_shift.resample_factor > 1)
    fail("domain shift values out of range");
}

Grid<float> gaussian_blur(const Grid<float>& image, double sigma) {
  if (sigma <= 0) return image;
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& k : kernel) k /= sum;
  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  Grid<float> tmp(image.rows(), image.cols());
  for (int r = 0; r < image.rows(); ++r)
    for (int c = 0; c < image.cols(); ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * image(r, reflect(c + i, image.cols()));
      tmp(r, c) = static_cast<float>(acc);
    }
  Grid<float> out(image.rows(), image.cols());
  for (int r = 0; r < image.rows(); ++r)
    for (int c = 0; c < image.cols(); ++c) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp(reflect(r + i, image.rows()), c);
      out(r, c) = static_cast<float>(acc);
    }
  return out;
}

Phantom generate_phantom(const PhantomParams& params, std::uint64_t seed) {
  params.validate();
  const int side = params.image_side;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Half-ellipse breast above a horizontal chest wall.
  Phantom ph;
  ph.breast = Grid<std::uint8_t>(side, side, 0);
  const double wall = side * uniform(rng, 0.86, 0.94);
  const double half_width = side * uniform(rng, 0.42, 0.48);
  const double depth = side * uniform(rng, 0.70, 0.78);
  const double centre_x = side / 2.0 + side * uniform(rng, -0.03, 0.03);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      const double dy = (r - wall) / depth, dx = (c - centre_x) / half_width;
      if (r <= wall && dy * dy + dx * dx <= 1.0) ph.breast(r, c) = 1;
    }

  // Smoothed-noise parenchyma texture.
  Grid<float> noise(side, side);
  for (auto& v : noise.values()) v = static_cast<float>(normal(rng));
  Grid<float> texture = gaussian_blur(noise, 2.5);
  double tex_sd = 0;
  for (float v : texture.values()) tex_sd += v * v;
  tex_sd = std::sqrt(tex_sd / texture.size());
  const double base = uniform(rng, 0.30, 0.40);
  Grid<float> image(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      const double parenchyma = base + 0.07 * texture(r, c) / (tex_sd + 1e-12);
      image(r, c) = ph.breast(r, c) ? static_cast<float>(std::max(parenchyma, 0.05))
                                    : (r > wall ? 0.12f : 0.03f);
    }

  // Tumours: perturbed ellipses placed inside the breast without overlap.
  const int count = std::uniform_int_distribution<int>(params.tumor_count_min,
                                                       params.tumor_count_max)(rng);
  const auto allowed = erode(ph.breast, 2);
  Grid<std::uint8_t> occupied(side, side, 0);
  ph.mask.values = Grid<std::uint8_t>(side, side, 0);
  ph.mask.spacing = params.spacing;
  constexpr int kMaxAttempts = 200;
  for (int t = 0; t < count; ++t) {
    TumorShape shape;
    shape.radius = uniform(rng, params.tumor_radius_min, params.tumor_radius_max);
    shape.aspect = uniform(rng, 0.75, 1.0);
    shape.orientation = uniform(rng, 0.0, std::numbers::pi);
    for (int k = 0; k < 4; ++k) {
      shape.amplitude.push_back(params.irregularity * 0.35 * uniform(rng, -1.0, 1.0) / (k + 1));
      shape.phase.push_back(uniform(rng, 0.0, 2 * std::numbers::pi));
    }
    const double contrast = uniform(rng, params.contrast_min, params.contrast_max);
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      shape.cy = uniform(rng, 0.0, side - 1.0);
      shape.cx = uniform(rng, 0.0, side - 1.0);
      const auto blob = rasterize(shape, side);
      bool ok = true;
      for (std::size_t i = 0; i < blob.size() && ok; ++i)
        if (blob.values()[i] && (!allowed.values()[i] || occupied.values()[i])) ok = false;
      if (!ok) continue;
      placed = true;
      for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
          if (!blob(r, c)) continue;
          ph.mask.values(r, c) = 1;
          image(r, c) = static_cast<float>(image(r, c) * (1.0 + contrast));
          for (int dr = -2; dr <= 2; ++dr)
            for (int dc = -2; dc <= 2; ++dc) {
              const int rr = r + dr, cc = c + dc;
              if (rr >= 0 && cc >= 0 && rr < side && cc < side) occupied(rr, cc) = 1;
            }
        }
    }
    if (!placed)
      throw InfeasiblePlacement("could not place tumour " + std::to_string(t + 1) + " of radius " +
                                std::to_string(shape.radius) + " after " +
                                std::to_string(kMaxAttempts) + " attempts");
    ++ph.tumors;
  }

  for (auto& v : image.values()) v = static_cast<float>(v + params.noise_sigma * normal(rng));

  ph.image.pixels = std::move(image);
  ph.image.spacing = params.spacing;
  return ph;
}

Grid<float> apply_domain_shift(const Grid<float>& image, const DomainShift& shift) {
  if (shift.neutral()) return image;
  Grid<float> out = image;
  for (auto& v : out.values())
    v = static_cast<float>(shift.intensity_scale * std::pow(std::max(v, 0.0f), shift.gamma));
  out = gaussian_blur(out, shift.blur_sigma);
  if (shift.resample_factor < 1.0) {
    const int low_h = std::max(1, static_cast<int>(std::lround(out.rows() * shift.resample_factor)));
    const int low_w = std::max(1, static_cast<int>(std::lround(out.cols() * shift.resample_factor)));
    out = resize_bilinear(resize_bilinear(out, low_h, low_w), image.rows(), image.cols());
  }
  return out;
}

std::uint64_t record_seed(std::uint64_t seed, int cohort, int patient, int slice) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(cohort), static_cast<std::uint32_t>(patient),
                    static_cast<std::uint32_t>(slice)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::vector<std::string> DatasetManifest::patients() const {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.patient_id);
  return {ids.begin(), ids.end()};
}

std::vector<std::size_t> DatasetManifest::indices_of_split(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (split.empty() || records[i].split == split) out.push_back(i);
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw MissingFile("cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw MalformedManifest(path.string() + ":1: empty manifest");
  const auto header = split_csv_line(trim(line));
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;
  for (const char* name : {"image_path", "mask_path", "patient_id", "cohort_id", "spacing_y_mm",
                           "spacing_x_mm", "intensity_offset", "intensity_scale", "split"})
    if (!col.count(name))
      throw MalformedManifest(path.string() + ":1: missing column '" + name + "'");

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (cells.size() != header.size())
      throw MalformedManifest(where + "expected " + std::to_string(header.size()) +
                              " fields, found " + std::to_string(cells.size()));
    auto cell = [&](const char* name) { return trim(cells[col.at(name)]); };
    auto number = [&](const char* name) {
      const auto s = cell(name);
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != s.size())
        throw MalformedManifest(where + "field '" + name + "' is not a number: '" + s + "'");
      return v;
    };
    ManifestRecord r;
    r.image_path = cell("image_path");
    r.mask_path = cell("mask_path");
    r.patient_id = cell("patient_id");
    r.cohort_id = static_cast<int>(number("cohort_id"));
    r.spacing = {number("spacing_y_mm"), number("spacing_x_mm")};
    r.intensity = {number("intensity_offset"), number("intensity_scale")};
    r.split = cell("split");
    if (r.image_path.empty() || r.mask_path.empty() || r.patient_id.empty())
      throw MalformedManifest(where + "empty path or patient id");
    if (r.spacing.row_mm <= 0 || r.spacing.col_mm <= 0 || r.intensity.scale <= 0)
      throw MalformedManifest(where + "spacing and intensity scale must be positive");
    if (check_files) {
      for (const auto& p : {m.resolve(r.image_path), m.resolve(r.mask_path)})
        if (!std::filesystem::exists(p))
          throw MissingFile(where + "referenced file does not exist: " + p.string());
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << kManifestHeader << '\n';
  out.precision(17);
  for (const auto& r : manifest.records)
    out << r.image_path.generic_string() << ',' << r.mask_path.generic_string() << ','
        << r.patient_id << ',' << r.cohort_id << ',' << r.spacing.row_mm << ','
        << r.spacing.col_mm << ',' << r.intensity.offset << ',' << r.intensity.scale << ','
        << r.split << '\n';
  if (!out) throw IoError("failed writing manifest " + path.string());
}

DatasetManifest split_by_patient(DatasetManifest manifest,
                                 const std::vector<std::pair<std::string, double>>& fractions,
                                 std::uint64_t seed) {
  if (fractions.empty()) throw ConfigInvalid("split needs at least one fraction");
  auto patients = manifest.patients();
  std::mt19937_64 rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);
  const int n = static_cast<int>(patients.size());
  std::map<std::string, std::string> assignment;
  int next = 0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    int take = k + 1 == fractions.size() ? n - next
                                         : static_cast<int>(std::lround(fractions[k].second * n));
    take = std::clamp(take, 0, n - next);
    for (int i = 0; i < take; ++i) assignment[patients[next + i]] = fractions[k].first;
    next += take;
  }
  for (auto& r : manifest.records) r.split = assignment.at(r.patient_id);
  return manifest;
}

DatasetManifest generate_cohort(const CohortSpec& spec, const std::filesystem::path& out_dir) {
  spec.phantom.validate();
  if (spec.n_patients < 1 || spec.slices_per_patient < 1)
    throw ConfigInvalid("cohort needs at least one patient and one slice");
  std::filesystem::create_directories(out_dir / "images");
  std::filesystem::create_directories(out_dir / "masks");

  DatasetManifest manifest;
  manifest.base_dir = out_dir;
  for (int p = 0; p < spec.n_patients; ++p) {
    char pid[32];
    std::snprintf(pid, sizeof pid, "c%d_p%04d", spec.cohort_id, p);
    // Patient-level acquisition gain and offset.
    std::mt19937_64 patient_rng(record_seed(spec.seed, spec.cohort_id, p, -1));
    const double gain = uniform(patient_rng, 0.8, 1.25);
    const double offset = uniform(patient_rng, 0.0, 0.1);
    for (int s = 0; s < spec.slices_per_patient; ++s) {
      auto ph = generate_phantom(spec.phantom, record_seed(spec.seed, spec.cohort_id, p, s));
      Grid<float> img = apply_domain_shift(ph.image.pixels, spec.phantom.domain_shift);
      for (auto& v : img.values()) v = static_cast<float>(gain * v + offset);

      ManifestRecord r;
      const std::string stem = std::string(pid) + "_s" + std::to_string(s) + ".png";
      r.image_path = std::filesystem::path("images") / stem;
      r.mask_path = std::filesystem::path("masks") / stem;
      r.patient_id = pid;
      r.cohort_id = spec.cohort_id;
      r.spacing = spec.phantom.spacing;
      r.intensity = fit_mapping(img);
      save_image(out_dir / r.image_path, img, r.intensity);
      save_mask(out_dir / r.mask_path, ph.mask.values);
      manifest.records.push_back(std::move(r));
    }
  }
  manifest = split_by_patient(std::move(manifest), spec.splits, spec.seed);
  save_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

std::vector<Grid<float>> normalize_patient(const std::vector<Grid<float>>& slices, int out_side) {
  if (slices.empty()) throw DataError("normalize_patient needs at least one slice");
  double sum = 0, count = 0;
  for (const auto& s : slices)
    for (float v : s.values()) {
      sum += v;
      count += 1;
    }
  const double mean = sum / count;
  double ss = 0;
  for (const auto& s : slices)
    for (float v : s.values()) ss += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(ss / count), 1e-8);
  std::vector<Grid<float>> out;
  for (const auto& s : slices) {
    Grid<float> n(s.rows(), s.cols());
    for (std::size_t i = 0; i < s.size(); ++i)
      n.values()[i] = static_cast<float>((s.values()[i] - mean) / sd);
    out.push_back(resize_bilinear(n, out_side, out_side));
  }
  return out;
}

std::pair<double, double> AffineParams::apply(double row, double col, int rows, int cols) const {
  const double cy = (rows - 1) / 2.0, cx = (cols - 1) / 2.0;
  const double y = row - cy, x = col - cx;
  const double c = std::cos(angle_rad), s = std::sin(angle_rad);
  return {cy + shift_y + scale * (s * x + c * y), cx + shift_x + scale * (c * x - s * y)};
}

AffineParams draw_affine(std::uint64_t seed, const AugmentRanges& ranges, int side) {
  std::mt19937_64 rng(seed);
  auto draw = [&](double lo, double hi) { return lo == hi ? lo : uniform(rng, lo, hi); };
  AffineParams a;
  a.scale = draw(ranges.scale_min, ranges.scale_max);
  a.shift_x = draw(-ranges.translate, ranges.translate) * side;
  a.shift_y = draw(-ranges.translate, ranges.translate) * side;
  a.angle_rad = draw(-ranges.rotate_deg, ranges.rotate_deg) * std::numbers::pi / 180.0;
  return a;
}

std::pair<Grid<float>, Grid<std::uint8_t>> warp(const Grid<float>& image,
                                                const Grid<std::uint8_t>& mask,
                                                const AffineParams& t) {
  if (!image.same_shape(mask)) throw ShapeMismatch("augment: image and mask differ in shape");
  if (t.scale == 1.0 && t.shift_x == 0.0 && t.shift_y == 0.0 && t.angle_rad == 0.0)
    return {image, mask};
  const int rows = image.rows(), cols = image.cols();
  const double cy = (rows - 1) / 2.0, cx = (cols - 1) / 2.0;
  const double c = std::cos(t.angle_rad), s = std::sin(t.angle_rad);
  Grid<float> out_img(rows, cols);
  Grid<std::uint8_t> out_mask(rows, cols, 0);
  for (int r = 0; r < rows; ++r)
    for (int q = 0; q < cols; ++q) {
      // Inverse similarity: rotate by -angle and divide by scale.
      const double y = (r - cy - t.shift_y) / t.scale, x = (q - cx - t.shift_x) / t.scale;
      const double sy = cy + (c * y - s * x);
      const double sx = cx + (s * y + c * x);
      out_img(r, q) = static_cast<float>(sample_bilinear(image, sy, sx));
      const int nr = round_half_down(sy), nc = round_half_down(sx);
      if (nr >= 0 && nc >= 0 && nr < rows && nc < cols) out_mask(r, q) = mask(nr, nc);
    }
  return {std::move(out_img), std::move(out_mask)};
}

std::pair<Grid<float>, Grid<std::uint8_t>> augment(const Grid<float>& image,
                                                   const Grid<std::uint8_t>& mask,
                                                   std::uint64_t seed,
                                                   const AugmentRanges& ranges) {
  return warp(image, mask, draw_affine(seed, ranges, image.rows()));
}

}  // namespace pdpnet
