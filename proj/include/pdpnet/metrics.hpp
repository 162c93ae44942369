#pragma once

// Slice-level segmentation metrics: the overlap family (DSC, SEN, KAPPA) and the
// surface family (HD95, ASSD), plus cohort aggregation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdpnet/grid.hpp"

namespace pdpnet {

enum class KappaMode {
  Overlap,    // (P0 - Pe) / (1 - Pe) with the IoU-style P0 used for reporting
  Classical,  // Cohen's kappa over the 2x2 pixel confusion matrix
};

/// Record flags. Undefined metrics are NaN and carry one of these.
enum MetricFlag : unsigned {
  kFlagNone = 0,
  kEmptyReference = 1u << 0,   // |Y| = 0: SEN undefined
  kEmptyPrediction = 1u << 1,  // |G| = 0: KAPPA undefined
  kEmptyMask = 1u << 2,        // either mask empty: surface distances undefined
};

struct OverlapMetrics {
  double dsc = 0.0;
  double sen = 0.0;
  double kappa = 0.0;
  unsigned flags = kFlagNone;
};

struct SurfaceMetrics {
  double hd95_mm = 0.0;
  double assd_mm = 0.0;
  unsigned flags = kFlagNone;
};

struct MetricsReport {
  std::string sample_id;
  int cohort = 0;
  double dsc = 0.0;
  double sen = 0.0;
  double kappa = 0.0;
  double hd95_mm = 0.0;
  double assd_mm = 0.0;
  unsigned flags = kFlagNone;
};

/// Mean and 1.96 * SEM half-width of one metric over its defined records.
struct MetricSummary {
  double mean = 0.0;
  double half_width = 0.0;
  int n = 0;
  int excluded = 0;
};

struct CohortSummary {
  int n = 0;
  MetricSummary dsc, sen, kappa, hd95_mm, assd_mm;
};

/// Confusion counts of predicted mask G against reference Y.
struct OverlapCounts {
  std::int64_t both = 0;        // |G ∩ Y|
  std::int64_t predicted = 0;   // |G|
  std::int64_t reference = 0;   // |Y|
  std::int64_t total = 0;
};

OverlapCounts count_overlap(const LabelMask& predicted, const LabelMask& reference);

/// DSC, SEN and KAPPA of predicted mask G against reference Y. The overlap
/// KAPPA is clamped to [-1, 1]; it tends to -inf when the masks are disjoint.
OverlapMetrics overlap_metrics(const LabelMask& predicted, const LabelMask& reference,
                               KappaMode kappa = KappaMode::Overlap);

/// Foreground pixels that touch background or the image edge (4-neighbourhood).
std::vector<std::pair<int, int>> boundary_pixels(const Grid<std::uint8_t>& mask);

/// Nearest-rank percentile: the ceil(q * k)-th smallest of k values.
double nearest_rank_percentile(std::vector<double> values, double q);

/// HD95 and ASSD in millimetres between the boundaries of G and Y.
SurfaceMetrics surface_metrics(const LabelMask& predicted, const LabelMask& reference,
                               Spacing spacing);

MetricsReport evaluate_pair(const LabelMask& predicted, const LabelMask& reference,
                            Spacing spacing, std::string sample_id = {}, int cohort = 0,
                            KappaMode kappa = KappaMode::Overlap);

CohortSummary aggregate(const std::vector<MetricsReport>& reports);

std::string describe_flags(unsigned flags);

}  // namespace pdpnet
