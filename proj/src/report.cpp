#include "pdpnet/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "pdpnet/errors.hpp"
#include "pdpnet/pipeline.hpp"

namespace pdpnet {

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                         "#e377c2", "#7f7f7f"};

const char* color(std::size_t i) { return kColors[i % std::size(kColors)]; }

std::string num(double v) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(2);
  ss << v;
  return ss.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

double metric_of(const MetricsReport& r, std::size_t m) {
  switch (m) {
    case 0: return r.dsc;
    case 1: return r.sen;
    case 2: return r.kappa;
    case 3: return r.hd95_mm;
    default: return r.assd_mm;
  }
}

bool lower_is_better(std::size_t m) { return m >= 3; }

std::vector<double> finite_values(const std::vector<MetricsReport>& reports, std::size_t m) {
  std::vector<double> v;
  for (const auto& r : reports)
    if (std::isfinite(metric_of(r, m))) v.push_back(metric_of(r, m));
  return v;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (double x : v) s += x;
  return s / v.size();
}

double ci_half_width(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return 1.96 * std::sqrt(ss / (v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * (sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
}

class Svg {
 public:
  Svg(int w, int h) {
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
         << "\" viewBox=\"0 0 " << w << ' ' << h << "\" font-family=\"sans-serif\">\n"
         << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  }
  Svg& raw(const std::string& s) {
    out_ << s << '\n';
    return *this;
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double width = 1.0, const std::string& extra = "") {
    out_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2)
         << "\" y2=\"" << num(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\"" << width
         << "\" " << extra << "/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 12,
            const std::string& anchor = "middle", const std::string& fill = "black") {
    out_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size
         << "\" text-anchor=\"" << anchor << "\" fill=\"" << fill << "\">" << escape(s)
         << "</text>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke = "none", double opacity = 1.0) {
    out_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
         << "\" height=\"" << num(h) << "\" fill=\"" << fill << "\" fill-opacity=\"" << opacity
         << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill,
              const std::string& stroke = "none") {
    out_ << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r)
         << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                bool closed, const std::string& fill = "none", double fill_opacity = 0.0) {
    out_ << (closed ? "<polygon" : "<polyline") << " points=\"";
    for (const auto& [x, y] : pts) out_ << num(x) << ',' << num(y) << ' ';
    out_ << "\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" fill=\"" << fill
         << "\" fill-opacity=\"" << fill_opacity << "\"/>\n";
  }
  void save(const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << out_.str() << "</svg>\n";
  }

 private:
  std::ostringstream out_;
};

void legend(Svg& svg, const std::vector<ReportArm>& arms, double x, double y) {
  for (std::size_t a = 0; a < arms.size(); ++a) {
    svg.rect(x, y + 18.0 * a - 10, 12, 12, color(a));
    svg.text(x + 18, y + 18.0 * a, arms[a].name, 12, "start");
  }
}

void write_radar(const std::vector<ReportArm>& arms, const ReportOptions& opt,
                 const std::filesystem::path& path) {
  const auto values = radar_values(arms, opt);
  const double cx = 300, cy = 290, radius = 200;
  const std::size_t axes = kReportMetrics.size();
  Svg svg(600, 600);
  svg.text(300, 30, "Cohort means, radius window [" + num(opt.window_lo) + ", " +
                        num(opt.window_hi) + "]", 15);
  auto point = [&](std::size_t m, double r) {
    const double angle = -std::numbers::pi / 2 + 2 * std::numbers::pi * m / axes;
    return std::pair{cx + radius * r * std::cos(angle), cy + radius * r * std::sin(angle)};
  };
  for (int ring = 1; ring <= 3; ++ring) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t m = 0; m < axes; ++m) pts.push_back(point(m, ring / 3.0));
    svg.polyline(pts, "#cccccc", true);
    const double v = opt.window_lo + (opt.window_hi - opt.window_lo) * ring / 3.0;
    const auto [tx, ty] = point(0, ring / 3.0);
    svg.text(tx + 4, ty, num(v), 10, "start", "#888888");
  }
  for (std::size_t m = 0; m < axes; ++m) {
    const auto [x, y] = point(m, 1.0);
    svg.line(cx, cy, x, y, "#cccccc");
    const auto [lx, ly] = point(m, 1.12);
    svg.text(lx, ly + 4, kReportMetrics[m] + (lower_is_better(m) ? " (best/x)" : ""), 13);
  }
  std::vector<std::string> notes;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t m = 0; m < axes; ++m) pts.push_back(point(m, values[a][m].radius));
    svg.polyline(pts, color(a), true, color(a), 0.12);
    for (std::size_t m = 0; m < axes; ++m) {
      const auto& v = values[a][m];
      const auto [x, y] = pts[m];
      if (v.clamped) {
        svg.circle(x, y, 5, "white", color(a));
        svg.text(x + 7, y - 6, "*", 14, "start", color(a));
        notes.push_back("* " + arms[a].name + " " + kReportMetrics[m] + " = " + num(v.raw) +
                        (std::isfinite(v.score) ? " (score " + num(v.score) + ")" : "") +
                        " outside window, clamped");
      } else {
        svg.circle(x, y, 3, color(a));
      }
    }
  }
  legend(svg, arms, 20, 60);
  for (std::size_t i = 0; i < notes.size(); ++i) svg.text(20, 530 + 14.0 * i, notes[i], 11, "start");
  svg.save(path);
}

void write_curves(const std::vector<ReportArm>& arms, const std::filesystem::path& path) {
  const double w = 800, panel_h = 260, left = 70, right = 30, top = 50;
  Svg svg(static_cast<int>(w), static_cast<int>(2 * panel_h + 80));
  const std::size_t metric_ids[] = {0, 3};
  for (int p = 0; p < 2; ++p) {
    const auto m = metric_ids[p];
    const double y0 = top + p * (panel_h + 20), h = panel_h - 50;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t n = 1;
    for (const auto& arm : arms) {
      n = std::max(n, arm.reports.size());
      for (double v : finite_values(arm.reports, m)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (m == 0) lo = std::min(lo, 0.0), hi = std::max(hi, 1.0);
    if (hi <= lo) hi = lo + 1;
    auto sx = [&](double i) { return left + (w - left - right) * (n > 1 ? i / (n - 1) : 0.5); };
    auto sy = [&](double v) { return y0 + h - h * (v - lo) / (hi - lo); };
    svg.text(w / 2, y0 - 12, kReportMetrics[m] + " per sample (band: mean, 95% interval)", 14);
    svg.line(left, y0 + h, w - right, y0 + h, "black");
    svg.line(left, y0, left, y0 + h, "black");
    for (int t = 0; t <= 4; ++t) {
      const double v = lo + (hi - lo) * t / 4;
      svg.text(left - 6, sy(v) + 4, num(v), 10, "end");
    }
    svg.text((left + w - right) / 2, y0 + h + 28, "sample", 11);
    for (std::size_t a = 0; a < arms.size(); ++a) {
      const auto vals = finite_values(arms[a].reports, m);
      if (!vals.empty()) {
        const double mu = mean_of(vals), hw = ci_half_width(vals);
        svg.rect(left, sy(std::min(hi, mu + hw)), w - left - right,
                 std::max(1.0, sy(std::max(lo, mu - hw)) - sy(std::min(hi, mu + hw))), color(a),
                 "none", 0.18);
        svg.line(left, sy(mu), w - right, sy(mu), color(a), 1.0, "stroke-dasharray=\"4 3\"");
      }
      std::vector<std::pair<double, double>> run;
      const auto& reps = arms[a].reports;
      for (std::size_t i = 0; i < reps.size(); ++i) {
        const double v = metric_of(reps[i], m);
        if (std::isfinite(v)) {
          run.emplace_back(sx(i), sy(v));
        } else if (!run.empty()) {
          svg.polyline(run, color(a), false);
          run.clear();
        }
      }
      if (!run.empty()) svg.polyline(run, color(a), false);
    }
  }
  legend(svg, arms, w - 180, 20);
  svg.save(path);
}

void write_boxplots(const std::vector<ReportArm>& arms, const std::filesystem::path& path) {
  const std::size_t metrics = kReportMetrics.size();
  const double panel_w = 200, h = 300, top = 50, left = 50;
  Svg svg(static_cast<int>(left + panel_w * metrics + 20), static_cast<int>(h + 120));
  for (std::size_t m = 0; m < metrics; ++m) {
    const double x0 = left + m * panel_w;
    std::vector<BoxStats> stats;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& arm : arms) {
      stats.push_back(box_stats(finite_values(arm.reports, m)));
      for (double v : finite_values(arm.reports, m)) lo = std::min(lo, v), hi = std::max(hi, v);
    }
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi <= lo) hi = lo + 1;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto sy = [&](double v) { return top + h - h * (v - lo) / (hi - lo); };
    svg.text(x0 + panel_w / 2, top - 15, kReportMetrics[m], 14);
    svg.line(x0 + 10, top, x0 + 10, top + h, "black");
    for (int t = 0; t <= 4; ++t) {
      const double v = lo + (hi - lo) * t / 4;
      svg.text(x0 + 8, sy(v) + 4, num(v), 9, "end");
    }
    const double slot = (panel_w - 30) / std::max<std::size_t>(1, arms.size());
    for (std::size_t a = 0; a < arms.size(); ++a) {
      const auto& s = stats[a];
      const double cx = x0 + 20 + slot * (a + 0.5), bw = slot * 0.5;
      if (s.n == 0) {
        svg.text(cx, top + h / 2, "n/a", 10);
        continue;
      }
      svg.line(cx, sy(s.whisker_lo), cx, sy(s.q1), color(a));
      svg.line(cx, sy(s.q3), cx, sy(s.whisker_hi), color(a));
      svg.line(cx - bw / 4, sy(s.whisker_lo), cx + bw / 4, sy(s.whisker_lo), color(a));
      svg.line(cx - bw / 4, sy(s.whisker_hi), cx + bw / 4, sy(s.whisker_hi), color(a));
      svg.rect(cx - bw / 2, sy(s.q3), bw, std::max(0.5, sy(s.q1) - sy(s.q3)), color(a), color(a),
               0.3);
      svg.line(cx - bw / 2, sy(s.median), cx + bw / 2, sy(s.median), "black", 2.0);
      for (double o : s.outliers) svg.circle(cx, sy(o), 2.5, "none", color(a));
    }
  }
  legend(svg, arms, left, top + h + 35);
  svg.save(path);
}

}  // namespace

std::vector<std::vector<RadarValue>> radar_values(const std::vector<ReportArm>& arms,
                                                  const ReportOptions& opt) {
  if (!(opt.window_hi > opt.window_lo)) throw ConfigInvalid("radar window must have lo < hi");
  const std::size_t metrics = kReportMetrics.size();
  std::vector<std::vector<RadarValue>> out(arms.size(), std::vector<RadarValue>(metrics));
  for (std::size_t m = 0; m < metrics; ++m) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < arms.size(); ++a) {
      out[a][m].raw = mean_of(finite_values(arms[a].reports, m));
      if (std::isfinite(out[a][m].raw)) best = std::min(best, out[a][m].raw);
    }
    for (std::size_t a = 0; a < arms.size(); ++a) {
      auto& v = out[a][m];
      if (!lower_is_better(m))
        v.score = v.raw;
      else if (!std::isfinite(v.raw))
        v.score = v.raw;
      else
        v.score = v.raw > 0 ? best / v.raw : 1.0;
      if (!std::isfinite(v.score)) {
        v.radius = 0.0;
        v.clamped = true;
        continue;
      }
      const double c = std::clamp(v.score, opt.window_lo, opt.window_hi);
      v.clamped = c != v.score;
      v.radius = (c - opt.window_lo) / (opt.window_hi - opt.window_lo);
    }
  }
  return out;
}

BoxStats box_stats(std::vector<double> values) {
  BoxStats s;
  s.n = static_cast<int>(values.size());
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  const double iqr = s.q3 - s.q1;
  const double fence_lo = s.q1 - 1.5 * iqr, fence_hi = s.q3 + 1.5 * iqr;
  s.whisker_lo = s.q1;
  s.whisker_hi = s.q3;
  for (double v : values) {
    if (v < fence_lo || v > fence_hi) {
      s.outliers.push_back(v);
      continue;
    }
    s.whisker_lo = std::min(s.whisker_lo, v);
    s.whisker_hi = std::max(s.whisker_hi, v);
  }
  return s;
}

ReportArm load_arm(const std::string& spec) {
  ReportArm arm;
  std::filesystem::path path;
  const auto eq = spec.find('=');
  if (eq != std::string::npos) {
    arm.name = spec.substr(0, eq);
    path = spec.substr(eq + 1);
  } else {
    path = spec;
    const auto parent = path.parent_path().filename().string();
    arm.name = parent.empty() ? path.stem().string() : parent + "/" + path.stem().string();
  }
  arm.reports = read_reports_csv(path);
  return arm;
}

ReportFiles write_report(const std::vector<ReportArm>& arms, const std::filesystem::path& out_dir,
                         const ReportOptions& options) {
  if (arms.empty()) throw MalformedCsv("report needs at least one metrics CSV");
  std::filesystem::create_directories(out_dir);
  ReportFiles files{out_dir / "radar.svg", out_dir / "curves.svg", out_dir / "boxplots.svg"};
  write_radar(arms, options, files.radar);
  write_curves(arms, files.curves);
  write_boxplots(arms, files.boxplots);
  return files;
}

}  // namespace pdpnet
