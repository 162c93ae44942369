#pragma once

// Static SVG figures from per-sample metric CSVs: a radar chart of cohort
// means, per-sample DSC/HD95 curves with 95% bands and box plots per arm.

#include <filesystem>
#include <string>
#include <vector>

#include "pdpnet/metrics.hpp"

namespace pdpnet {

/// One evaluated configuration (ablation arm or method).
struct ReportArm {
  std::string name;
  std::vector<MetricsReport> reports;
};

struct ReportOptions {
  double window_lo = 0.7;  // radar radius range
  double window_hi = 1.0;
};

inline const std::vector<std::string> kReportMetrics{"DSC", "SEN", "KAPPA", "HD95", "ASSD"};

/// Radar value of one metric of one arm. Overlap metrics are used as is;
/// distances become best_mean / mean over arms so that 1 is the best arm.
struct RadarValue {
  double raw = 0.0;     // cohort mean
  double score = 0.0;   // higher is better
  double radius = 0.0;  // position in [0, 1] after clamping to the window
  bool clamped = false;
};

/// values[arm][metric], metrics in kReportMetrics order.
std::vector<std::vector<RadarValue>> radar_values(const std::vector<ReportArm>& arms,
                                                  const ReportOptions& options = {});

/// Quartiles by linear interpolation, whiskers at the most extreme points
/// within 1.5 IQR, everything beyond is an outlier.
struct BoxStats {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  double whisker_lo = 0.0, whisker_hi = 0.0;
  std::vector<double> outliers;
  int n = 0;
};

BoxStats box_stats(std::vector<double> values);

/// Parses `name=path` or a bare path (name taken from the file's directory
/// and stem) into an arm.
ReportArm load_arm(const std::string& spec);

struct ReportFiles {
  std::filesystem::path radar, curves, boxplots;
};

ReportFiles write_report(const std::vector<ReportArm>& arms, const std::filesystem::path& out_dir,
                         const ReportOptions& options = {});

}  // namespace pdpnet
