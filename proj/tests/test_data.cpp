#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pdpnet/data.hpp"
#include "pdpnet/errors.hpp"
#include "pdpnet/image_io.hpp"

using namespace pdpnet;

namespace {

/// Connected components (4-neighbourhood) as lists of pixels.
std::vector<std::vector<std::pair<int, int>>> components(const Grid<std::uint8_t>& m) {
  Grid<int> label(m.rows(), m.cols(), -1);
  std::vector<std::vector<std::pair<int, int>>> out;
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) {
      if (!m(r, c) || label(r, c) >= 0) continue;
      const int id = static_cast<int>(out.size());
      out.emplace_back();
      std::vector<std::pair<int, int>> stack{{r, c}};
      label(r, c) = id;
      while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        out[id].emplace_back(y, x);
        const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int yy = y + dy[k], xx = x + dx[k];
          if (yy < 0 || xx < 0 || yy >= m.rows() || xx >= m.cols()) continue;
          if (m(yy, xx) && label(yy, xx) < 0) {
            label(yy, xx) = id;
            stack.emplace_back(yy, xx);
          }
        }
      }
    }
  return out;
}

/// Length of the 0.5 iso-contour of the mask after a sigma-1 Gaussian blur
/// (marching squares with linear interpolation).
double contour_length(const Grid<std::uint8_t>& m) {
  const int pad = 4, rows = m.rows() + 2 * pad, cols = m.cols() + 2 * pad;
  std::vector<double> k(9);
  for (int i = -4; i <= 4; ++i) k[i + 4] = std::exp(-0.5 * i * i);
  double ksum = 0;
  for (double v : k) ksum += v;
  Grid<double> raw(rows, cols, 0.0), tmp(rows, cols, 0.0), f(rows, cols, 0.0);
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) raw(r + pad, c + pad) = m(r, c);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      for (int i = -4; i <= 4; ++i)
        if (c + i >= 0 && c + i < cols) tmp(r, c) += k[i + 4] * raw(r, c + i) / ksum;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      for (int i = -4; i <= 4; ++i)
        if (r + i >= 0 && r + i < rows) f(r, c) += k[i + 4] * tmp(r + i, c) / ksum;

  double len = 0;
  for (int r = 0; r + 1 < rows; ++r)
    for (int c = 0; c + 1 < cols; ++c) {
      // Corners in ring order: (r,c) (r,c+1) (r+1,c+1) (r+1,c).
      const double v[4] = {f(r, c) - 0.5, f(r, c + 1) - 0.5, f(r + 1, c + 1) - 0.5,
                           f(r + 1, c) - 0.5};
      const double py[4] = {0, 0, 1, 1}, px[4] = {0, 1, 1, 0};
      std::vector<std::pair<double, double>> hits;
      for (int e = 0; e < 4; ++e) {
        const int a = e, b = (e + 1) % 4;
        if ((v[a] > 0) == (v[b] > 0)) continue;
        const double t = v[a] / (v[a] - v[b]);
        hits.emplace_back(py[a] + t * (py[b] - py[a]), px[a] + t * (px[b] - px[a]));
      }
      auto seg = [](std::pair<double, double> p, std::pair<double, double> q) {
        return std::hypot(p.first - q.first, p.second - q.second);
      };
      if (hits.size() == 2) {
        len += seg(hits[0], hits[1]);
      } else if (hits.size() == 4) {
        len += std::min(seg(hits[0], hits[1]) + seg(hits[2], hits[3]),
                        seg(hits[1], hits[2]) + seg(hits[3], hits[0]));
      }
    }
  return len;
}

double compactness(const Grid<std::uint8_t>& m) {
  const double area = static_cast<double>(std::count(m.values().begin(), m.values().end(), 1));
  const double per = contour_length(m);
  return 4 * std::numbers::pi * area / (per * per);
}

std::pair<double, double> centroid(const Grid<std::uint8_t>& m) {
  double sr = 0, sc = 0, n = 0;
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c)
      if (m(r, c)) sr += r, sc += c, n += 1;
  return {sr / n, sc / n};
}

Grid<std::uint8_t> disc(int side, double cy, double cx, double radius) {
  Grid<std::uint8_t> m(side, side, 0);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c)
      if ((r - cy) * (r - cy) + (c - cx) * (c - cx) <= radius * radius) m(r, c) = 1;
  return m;
}

double wasserstein(std::vector<float> a, std::vector<float> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n = std::min(a.size(), b.size());
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i)
    sum += std::abs(a[i * a.size() / n] - b[i * b.size() / n]);
  return sum / n;
}

std::vector<float> pooled_intensities(const DatasetManifest& m) {
  std::vector<float> out;
  for (const auto& r : m.records) {
    const auto img = load_image(m.resolve(r.image_path), r.intensity);
    out.insert(out.end(), img.values().begin(), img.values().end());
  }
  return out;
}

CohortSpec small_cohort(int cohort_id, int patients, int slices) {
  CohortSpec s;
  s.n_patients = patients;
  s.slices_per_patient = slices;
  s.seed = 5;
  s.cohort_id = cohort_id;
  return s;
}

}  // namespace

TEST(Phantom, SameSeedIsBitIdentical) {
  PhantomParams p;
  p.tumor_count_max = 3;
  const auto a = generate_phantom(p, 42), b = generate_phantom(p, 42);
  EXPECT_EQ(a.image.pixels, b.image.pixels);
  EXPECT_EQ(a.mask.values, b.mask.values);
  EXPECT_NE(generate_phantom(p, 43).mask.values, a.mask.values);
}

TEST(Phantom, ContourEstimateIsExactOnDigitalDiscs) {
  for (double radius : {4.5, 6.0, 9.3, 14.0})
    EXPECT_NEAR(compactness(disc(48, 23.4, 24.1, radius)), 1.0, 0.06) << radius;
}

TEST(Phantom, RegularTumoursAreCompact) {
  PhantomParams p;
  p.irregularity = 0.0;
  p.tumor_count_max = 2;
  double worst = 1e9;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto ph = generate_phantom(p, seed);
    for (const auto& comp : components(ph.mask.values)) {
      Grid<std::uint8_t> one(ph.mask.values.rows(), ph.mask.values.cols(), 0);
      for (auto [r, c] : comp) one(r, c) = 1;
      worst = std::min(worst, compactness(one));
    }
  }
  EXPECT_GE(worst, 0.85);
}

TEST(Phantom, ComponentsMatchTumoursAndStayInBreast) {
  PhantomParams p;
  p.tumor_count_min = 1;
  p.tumor_count_max = 3;
  p.irregularity = 0.8;
  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    const auto ph = generate_phantom(p, seed);
    EXPECT_EQ(static_cast<int>(components(ph.mask.values).size()), ph.tumors) << seed;
    for (std::size_t i = 0; i < ph.mask.values.size(); ++i)
      if (ph.mask.values.values()[i]) ASSERT_TRUE(ph.breast.values()[i]) << seed;
  }
}

TEST(Phantom, ZeroContrastTumoursBlendIn) {
  PhantomParams p;
  p.contrast_min = p.contrast_max = 0.0;
  double gap_sum = 0;
  const int n = 30;
  for (int seed = 0; seed < n; ++seed) {
    const auto ph = generate_phantom(p, seed);
    ASSERT_GT(ph.mask.count(), 0);
    double in = 0, out = 0, nin = 0, nout = 0;
    for (std::size_t i = 0; i < ph.mask.values.size(); ++i) {
      if (!ph.breast.values()[i]) continue;
      const double v = ph.image.pixels.values()[i];
      if (ph.mask.values.values()[i]) in += v, nin += 1;
      else out += v, nout += 1;
    }
    gap_sum += in / nin - out / nout;
  }
  EXPECT_LT(std::abs(gap_sum / n), p.noise_sigma);

  p.contrast_min = p.contrast_max = 0.5;
  const auto bright = generate_phantom(p, 0);
  double in = 0, nin = 0;
  for (std::size_t i = 0; i < bright.mask.values.size(); ++i)
    if (bright.mask.values.values()[i]) in += bright.image.pixels.values()[i], nin += 1;
  EXPECT_GT(in / nin, 0.4);
}

TEST(Phantom, RejectsInvalidParams) {
  PhantomParams p;
  p.tumor_radius_max = 40;
  EXPECT_THROW(generate_phantom(p, 1), ConfigInvalid);
  p = {};
  p.contrast_min = -1;
  EXPECT_THROW(p.validate(), ConfigInvalid);
}

TEST(Phantom, ImpossiblePlacementIsReported) {
  PhantomParams p;
  p.image_side = 32;
  p.tumor_radius_min = 7;
  p.tumor_radius_max = 8;
  p.tumor_count_min = p.tumor_count_max = 12;
  EXPECT_THROW(generate_phantom(p, 3), InfeasiblePlacement);
}

TEST(Cohort, RecordAndPatientCounts) {
  const auto dir = oracle::scratch_dir("cohort_counts");
  const auto m = generate_cohort(small_cohort(1, 10, 5), dir);
  EXPECT_EQ(m.records.size(), 50u);
  EXPECT_EQ(m.patients().size(), 10u);
  const auto loaded = load_manifest(dir / "manifest.csv");
  ASSERT_EQ(loaded.records.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(loaded.records[i].patient_id, m.records[i].patient_id);
    EXPECT_EQ(loaded.records[i].split, m.records[i].split);
    EXPECT_EQ(loaded.records[i].intensity.scale, m.records[i].intensity.scale);
  }
  std::set<std::string> train, val;
  for (const auto& r : m.records) (r.split == "train" ? train : val).insert(r.patient_id);
  EXPECT_EQ(train.size(), 7u);
  EXPECT_EQ(val.size(), 3u);
}

TEST(Cohort, GenerationIsDeterministic) {
  const auto a = oracle::scratch_dir("cohort_det_a"), b = oracle::scratch_dir("cohort_det_b");
  generate_cohort(small_cohort(1, 2, 2), a);
  generate_cohort(small_cohort(1, 2, 2), b);
  for (const auto& name : {"images/c1_p0001_s1.png", "masks/c1_p0000_s0.png", "manifest.csv"}) {
    std::ifstream fa(a / name, std::ios::binary), fb(b / name, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_FALSE(sa.empty()) << name;
    EXPECT_EQ(sa, sb) << name;
  }
}

TEST(Cohort, DomainShiftMovesIntensityDistribution) {
  auto c1 = small_cohort(1, 3, 2);
  auto c2 = small_cohort(2, 3, 2);
  auto c2_shift = c2;
  c2_shift.phantom.domain_shift.gamma = 1.3;
  c2_shift.phantom.domain_shift.intensity_scale = 0.8;
  const auto i1 = pooled_intensities(generate_cohort(c1, oracle::scratch_dir("shift_c1")));
  const auto i2 = pooled_intensities(generate_cohort(c2, oracle::scratch_dir("shift_c2")));
  const auto i3 = pooled_intensities(generate_cohort(c2_shift, oracle::scratch_dir("shift_c3")));
  const double null_shift = wasserstein(i1, i2), shifted = wasserstein(i1, i3);
  EXPECT_GT(shifted, 0.0);
  EXPECT_LT(null_shift, 0.5 * shifted);
}

TEST(Cohort, RecordSeedIgnoresOrder) {
  EXPECT_EQ(record_seed(1, 1, 3, 2), record_seed(1, 1, 3, 2));
  EXPECT_NE(record_seed(1, 1, 3, 2), record_seed(1, 1, 2, 3));
  EXPECT_NE(record_seed(1, 1, 3, 2), record_seed(1, 2, 3, 2));
}

TEST(Manifest, MalformedRowReportsLine) {
  const auto dir = oracle::scratch_dir("manifest_bad");
  std::ofstream(dir / "manifest.csv") << kManifestHeader << "\n"
                                      << "a.png,b.png,p1,1,1,1,0,1,train\n"
                                      << "a.png,b.png,p1,1,1\n";
  try {
    load_manifest(dir / "manifest.csv", false);
    FAIL() << "expected MalformedManifest";
  } catch (const MalformedManifest& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  std::ofstream(dir / "bad_number.csv") << kManifestHeader << "\n"
                                        << "a.png,b.png,p1,1,x,1,0,1,train\n";
  EXPECT_THROW(load_manifest(dir / "bad_number.csv", false), MalformedManifest);
  std::ofstream(dir / "no_column.csv") << "image_path,mask_path\n";
  EXPECT_THROW(load_manifest(dir / "no_column.csv", false), MalformedManifest);
}

TEST(Manifest, MissingFilesAreReported) {
  const auto dir = oracle::scratch_dir("manifest_missing");
  std::ofstream(dir / "manifest.csv") << kManifestHeader << "\n"
                                      << "nope.png,nope_mask.png,p1,1,1,1,0,1,train\n";
  EXPECT_THROW(load_manifest(dir / "manifest.csv"), MissingFile);
  EXPECT_THROW(load_manifest(dir / "absent.csv"), MissingFile);
  EXPECT_NO_THROW(load_manifest(dir / "manifest.csv", false));
}

TEST(Split, PatientDisjointAndDeterministic) {
  DatasetManifest m;
  for (int p = 0; p < 10; ++p)
    for (int s = 0; s < 3; ++s) {
      ManifestRecord r;
      r.patient_id = "p" + std::to_string(p);
      m.records.push_back(r);
    }
  const auto a = split_by_patient(m, {{"train", 0.7}, {"val", 0.3}}, 9);
  const auto b = split_by_patient(m, {{"train", 0.7}, {"val", 0.3}}, 9);
  std::map<std::string, std::set<std::string>> split_of;
  std::set<std::string> train;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].split, b.records[i].split);
    split_of[a.records[i].patient_id].insert(a.records[i].split);
    if (a.records[i].split == "train") train.insert(a.records[i].patient_id);
  }
  for (const auto& [p, splits] : split_of) EXPECT_EQ(splits.size(), 1u) << p;
  EXPECT_EQ(train.size(), 7u);
}

TEST(Normalize, ConstantPatientBecomesZero) {
  const auto out = normalize_patient({Grid<float>(32, 32, 4.0f), Grid<float>(32, 32, 4.0f)}, 32);
  for (const auto& g : out)
    for (float v : g.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Normalize, ZeroMeanUnitVariance) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(3.0f, 2.0f);
  std::vector<Grid<float>> slices(3, Grid<float>(32, 32));
  for (auto& s : slices)
    for (auto& v : s.values()) v = n(rng);
  const auto out = normalize_patient(slices, 32);
  double sum = 0, ss = 0, count = 0;
  for (const auto& g : out)
    for (float v : g.values()) sum += v, ss += v * v, count += 1;
  EXPECT_NEAR(sum / count, 0.0, 1e-5);
  EXPECT_NEAR(ss / count, 1.0, 1e-4);
}

TEST(Normalize, AffineIntensityChangeCancels) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<Grid<float>> a(2, Grid<float>(64, 64)), b(2, Grid<float>(64, 64));
  for (int s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < a[s].size(); ++i) {
      a[s].values()[i] = u(rng);
      b[s].values()[i] = 3.0f * a[s].values()[i] + 5.0f;
    }
  const auto na = normalize_patient(a, 128), nb = normalize_patient(b, 128);
  for (int s = 0; s < 2; ++s)
    for (std::size_t i = 0; i < na[s].size(); ++i)
      ASSERT_NEAR(na[s].values()[i], nb[s].values()[i], 1e-5);
  EXPECT_EQ(na[0].rows(), 128);
}

TEST(Augment, IdentityRangesAreBitIdentical) {
  const auto ph = generate_phantom(PhantomParams{}, 4);
  const auto [img, mask] = augment(ph.image.pixels, ph.mask.values, 77, AugmentRanges::identity());
  EXPECT_EQ(img, ph.image.pixels);
  EXPECT_EQ(mask, ph.mask.values);
}

TEST(Augment, SameSeedSameTransform) {
  const auto ph = generate_phantom(PhantomParams{}, 5);
  const auto a = augment(ph.image.pixels, ph.mask.values, 11);
  const auto b = augment(ph.image.pixels, ph.mask.values, 11);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Augment, LabelFollowsImage) {
  const auto m = disc(128, 60.0, 66.0, 10.0);
  const Grid<float> img(128, 128, 1.0f);
  const AugmentRanges ranges;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto [out_img, out_mask] = augment(img, m, seed, ranges);
    const auto t = draw_affine(seed, ranges, 128);
    const auto [cy, cx] = centroid(m);
    const auto [ey, ex] = t.apply(cy, cx, 128, 128);
    const auto [gy, gx] = centroid(out_mask);
    ASSERT_LE(std::hypot(gy - ey, gx - ex), 1.0) << seed;
    const double before = LabelMask{m, {}}.count(), after = LabelMask{out_mask, {}}.count();
    ASSERT_LT(std::abs(after - before) / before, 0.2) << seed;
  }
}

TEST(ImageIo, PngRoundTrip) {
  const auto dir = oracle::scratch_dir("png");
  std::mt19937_64 rng(6);
  Grid<float> img(40, 30);
  for (auto& v : img.values()) v = static_cast<float>(rng() % 10000) / 1000.0f - 2.0f;
  const auto mapping = fit_mapping(img);
  save_image(dir / "img.png", img, mapping);
  const auto back = load_image(dir / "img.png", mapping);
  for (std::size_t i = 0; i < img.size(); ++i) ASSERT_NEAR(back.values()[i], img.values()[i], mapping.scale);
  const auto mask = oracle::random_mask(rng, 40, 30, 0.3).values;
  save_mask(dir / "mask.png", mask);
  EXPECT_EQ(load_mask(dir / "mask.png"), mask);
  EXPECT_THROW(read_png(dir / "missing.png"), MissingFile);
}
