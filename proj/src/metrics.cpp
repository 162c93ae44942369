#include "pdpnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

namespace pdpnet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) along one axis.
// f holds squared distances (inf where no site), step is the physical pixel size.
void distance_transform_1d(std::vector<double>& f, double step) {
  const int n = static_cast<int>(f.size());
  std::vector<int> v;
  std::vector<double> z;
  v.reserve(n);
  z.reserve(n + 1);
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    const double xq = q * step;
    double s = -kInf;
    while (!v.empty()) {
      const double xv = v.back() * step;
      s = ((f[q] + xq * xq) - (f[v.back()] + xv * xv)) / (2.0 * (xq - xv));
      if (s > z.back()) break;
      v.pop_back();
      z.pop_back();
    }
    if (v.empty()) s = -kInf;
    v.push_back(q);
    z.push_back(s);
  }
  if (v.empty()) return;
  z.push_back(kInf);
  std::vector<double> out(n);
  std::size_t k = 0;
  for (int q = 0; q < n; ++q) {
    const double xq = q * step;
    while (z[k + 1] < xq) ++k;
    const double d = xq - v[k] * step;
    out[q] = d * d + f[v[k]];
  }
  f.swap(out);
}

// Squared physical distance from every pixel to the nearest site.
Grid<double> squared_distance_to(const std::vector<std::pair<int, int>>& sites, int rows, int cols,
                                 Spacing spacing) {
  Grid<double> dist(rows, cols, kInf);
  for (auto [r, c] : sites) dist(r, c) = 0.0;
  std::vector<double> line;
  for (int c = 0; c < cols; ++c) {
    line.resize(rows);
    for (int r = 0; r < rows; ++r) line[r] = dist(r, c);
    distance_transform_1d(line, spacing.row_mm);
    for (int r = 0; r < rows; ++r) dist(r, c) = line[r];
  }
  for (int r = 0; r < rows; ++r) {
    line.assign(dist.values().begin() + static_cast<std::ptrdiff_t>(r) * cols,
                dist.values().begin() + static_cast<std::ptrdiff_t>(r + 1) * cols);
    distance_transform_1d(line, spacing.col_mm);
    std::copy(line.begin(), line.end(), dist.values().begin() + static_cast<std::ptrdiff_t>(r) * cols);
  }
  return dist;
}

std::vector<double> directed_distances(const std::vector<std::pair<int, int>>& from,
                                       const Grid<double>& sq_dist_to) {
  std::vector<double> d;
  d.reserve(from.size());
  for (auto [r, c] : from) d.push_back(std::sqrt(sq_dist_to(r, c)));
  return d;
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  std::vector<double> defined;
  for (double v : values) {
    if (std::isfinite(v))
      defined.push_back(v);
    else
      ++s.excluded;
  }
  s.n = static_cast<int>(defined.size());
  if (defined.empty()) {
    s.mean = s.half_width = kNaN;
    return s;
  }
  s.mean = std::accumulate(defined.begin(), defined.end(), 0.0) / s.n;
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : defined) ss += (v - s.mean) * (v - s.mean);
    const double sd = std::sqrt(ss / (s.n - 1));
    s.half_width = 1.96 * sd / std::sqrt(static_cast<double>(s.n));
  }
  return s;
}

}  // namespace

OverlapCounts count_overlap(const LabelMask& predicted, const LabelMask& reference) {
  if (!predicted.values.same_shape(reference.values))
    throw ShapeMismatch("metric masks differ in shape");
  OverlapCounts c;
  c.total = static_cast<std::int64_t>(predicted.values.size());
  const auto g = predicted.values.values();
  const auto y = reference.values.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    c.predicted += g[i];
    c.reference += y[i];
    c.both += g[i] & y[i];
  }
  return c;
}

OverlapMetrics overlap_metrics(const LabelMask& predicted, const LabelMask& reference,
                               KappaMode kappa) {
  const OverlapCounts c = count_overlap(predicted, reference);
  OverlapMetrics m;
  const double tp = static_cast<double>(c.both);
  const double g = static_cast<double>(c.predicted);
  const double y = static_cast<double>(c.reference);

  m.dsc = (g + y) > 0 ? 2.0 * tp / (g + y) : kNaN;
  if (c.reference == 0) {
    m.flags |= kEmptyReference;
    m.sen = kNaN;
  } else {
    m.sen = tp / y;
  }
  if (c.predicted == 0) m.flags |= kEmptyPrediction;

  if (kappa == KappaMode::Classical) {
    const double n = static_cast<double>(c.total);
    const double fp = g - tp, fn = y - tp, tn = n - tp - fp - fn;
    const double po = (tp + tn) / n;
    const double pe = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n);
    m.kappa = pe < 1.0 ? (po - pe) / (1.0 - pe) : kNaN;
  } else if (c.predicted == 0 || c.reference == 0) {
    m.kappa = kNaN;
  } else {
    // (P0 - Pe) / (1 - Pe) as one reduced fraction so the result is correctly rounded.
    using Wide = __int128;
    const Wide a = c.both, u = c.predicted + c.reference - c.both;
    const Wide e = static_cast<Wide>(c.predicted - c.both) * (c.reference - c.both);
    const Wide d = static_cast<Wide>(c.predicted) * c.reference;
    const Wide num = a * d - e * u, den = u * (d - e);
    if (den == 0 || num < -den) {
      m.kappa = -1.0;
    } else {
      Wide k = num < 0 ? -num : num, r = den;
      while (r != 0) k = std::exchange(r, k % r);
      m.kappa = static_cast<double>(num / k) / static_cast<double>(den / k);
    }
  }
  return m;
}

std::vector<std::pair<int, int>> boundary_pixels(const Grid<std::uint8_t>& mask) {
  std::vector<std::pair<int, int>> out;
  const int h = mask.rows(), w = mask.cols();
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!mask(r, c)) continue;
      if (r == 0 || c == 0 || r == h - 1 || c == w - 1 || !mask(r - 1, c) || !mask(r + 1, c) ||
          !mask(r, c - 1) || !mask(r, c + 1))
        out.emplace_back(r, c);
    }
  return out;
}

double nearest_rank_percentile(std::vector<double> values, double q) {
  if (values.empty()) return kNaN;
  const auto k = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(k)));
  rank = std::clamp<std::size_t>(rank, 1, k);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                   values.end());
  return values[rank - 1];
}

SurfaceMetrics surface_metrics(const LabelMask& predicted, const LabelMask& reference,
                               Spacing spacing) {
  if (!predicted.values.same_shape(reference.values))
    throw ShapeMismatch("metric masks differ in shape");
  SurfaceMetrics m;
  const auto bg = boundary_pixels(predicted.values);
  const auto by = boundary_pixels(reference.values);
  if (bg.empty() || by.empty()) {
    m.flags = kEmptyMask;
    m.hd95_mm = m.assd_mm = kNaN;
    return m;
  }
  const int h = predicted.values.rows(), w = predicted.values.cols();
  const auto to_g = squared_distance_to(bg, h, w, spacing);
  const auto to_y = squared_distance_to(by, h, w, spacing);
  const auto d_yg = directed_distances(by, to_g);
  const auto d_gy = directed_distances(bg, to_y);

  m.hd95_mm = std::max(nearest_rank_percentile(d_yg, 0.95), nearest_rank_percentile(d_gy, 0.95));
  const double sum = std::accumulate(d_yg.begin(), d_yg.end(), 0.0) +
                     std::accumulate(d_gy.begin(), d_gy.end(), 0.0);
  m.assd_mm = sum / static_cast<double>(d_yg.size() + d_gy.size());
  return m;
}

MetricsReport evaluate_pair(const LabelMask& predicted, const LabelMask& reference,
                            Spacing spacing, std::string sample_id, int cohort, KappaMode kappa) {
  const auto o = overlap_metrics(predicted, reference, kappa);
  const auto s = surface_metrics(predicted, reference, spacing);
  MetricsReport r;
  r.sample_id = std::move(sample_id);
  r.cohort = cohort;
  r.dsc = o.dsc;
  r.sen = o.sen;
  r.kappa = o.kappa;
  r.hd95_mm = s.hd95_mm;
  r.assd_mm = s.assd_mm;
  r.flags = o.flags | s.flags;
  return r;
}

CohortSummary aggregate(const std::vector<MetricsReport>& reports) {
  CohortSummary out;
  out.n = static_cast<int>(reports.size());
  auto column = [&](double MetricsReport::*field) {
    std::vector<double> v;
    v.reserve(reports.size());
    for (const auto& r : reports) v.push_back(r.*field);
    return summarize(v);
  };
  out.dsc = column(&MetricsReport::dsc);
  out.sen = column(&MetricsReport::sen);
  out.kappa = column(&MetricsReport::kappa);
  out.hd95_mm = column(&MetricsReport::hd95_mm);
  out.assd_mm = column(&MetricsReport::assd_mm);
  return out;
}

std::string describe_flags(unsigned flags) {
  std::string s;
  auto add = [&](unsigned bit, const char* name) {
    if (!(flags & bit)) return;
    if (!s.empty()) s += '|';
    s += name;
  };
  add(kEmptyReference, "EmptyReference");
  add(kEmptyPrediction, "EmptyPrediction");
  add(kEmptyMask, "EmptyMask");
  return s;
}

}  // namespace pdpnet
