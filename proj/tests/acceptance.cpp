// End-to-end acceptance run: prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
// usage: acceptance <work_dir> [pdpnet_cli]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "checks.hpp"
#include "oracles.hpp"
#include "pdpnet/config.hpp"
#include "pdpnet/metrics.hpp"
#include "pdpnet/pipeline.hpp"
#include "pdpnet/ptm_geometry.hpp"
#include "pdpnet/report.hpp"

using namespace pdpnet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<std::pair<int, bool>> results;

void report(int id, const std::string& name, const Outcome& o) {
  std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << id << ". " << name << ": " << o.detail
            << std::endl;
  results.emplace_back(id, o.pass);
}

Outcome guarded(const std::function<Outcome()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << v;
  return ss.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome ptm_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  const int sizes[] = {8, 16, 32, 64, 128};
  const int grids[] = {1, 2, 4, 8};
  std::uniform_real_distribution<double> density(0.0, 1.0);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const int h = sizes[rng() % 5], w = sizes[rng() % 5];
    const int gh = grids[rng() % 4], gw = grids[rng() % 4];
    const auto m = (t % 2) ? oracle::random_mask(rng, h, w, density(rng))
                           : oracle::random_shapes(rng, h, w, 1 + static_cast<int>(rng() % 4));
    if (ptm(m, gh, gw) != oracle::ptm(m, gh, gw)) ++mismatches;
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < 10.0,
          std::to_string(mismatches) + " mismatches in 1000 masks, " + fmt(s, 3) + " s"};
}

Outcome bbox_cases() {
  int failures = 0;
  auto expect = [&](bool ok) { failures += ok ? 0 : 1; };
  PatchLabelGrid two(4, 4, 0);
  two(1, 1) = two(1, 2) = 1;
  const auto a = derive_bbox(two, 32, 32, 128, 128);
  expect(a.height == 32 && a.width == 64 && a.first_col == 1 && a.first_row == 1);
  expect(a.center_x == 64.0 && a.center_y == 48.0 && a.side == 96);
  expect(a.window == CropWindow{0, 16, 96, 112});
  PatchLabelGrid one(4, 4, 0);
  one(1, 2) = 1;
  const auto b = derive_bbox(one, 32, 32, 128, 128);
  expect(b.side == 80 && b.center_x == 80.0 && b.center_y == 48.0);
  const auto e = derive_bbox(PatchLabelGrid(4, 4, 0), 32, 32, 128, 128);
  expect(e.fallback && e.side == 128 && e.window == CropWindow{0, 0, 128, 128});
  const auto f = derive_bbox(PatchLabelGrid(4, 4, 1), 32, 32, 128, 128);
  expect(f.height == 128 && f.width == 128 && f.side == 128 && f.window == CropWindow{0, 0, 128, 128});

  std::mt19937_64 rng(2);
  int violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const int gh = 1 + static_cast<int>(rng() % 6), gw = 1 + static_cast<int>(rng() % 6);
    const int n = oracle::square_side(rng, gh, gw), ph = n / gh, pw = n / gw;
    PatchLabelGrid g(gh, gw, 0);
    const auto density = rng() % 1000;
    for (auto& v : g.values()) v = (rng() % 1000) < density ? 1 : 0;
    g(static_cast<int>(rng() % gh), static_cast<int>(rng() % gw)) = 1;
    const auto box = derive_bbox(g, ph, pw, gh * ph, gw * pw, (t % 2) ? ExtentMode::Span : ExtentMode::Count);
    const auto& w = box.window;
    const int r0 = box.first_row * ph, c0 = box.first_col * pw;
    const bool ok = w.row1 - w.row0 == box.side && w.col1 - w.col0 == box.side && w.row0 >= 0 &&
                    w.col0 >= 0 && w.row1 <= gh * ph && w.col1 <= gw * pw && w.row0 <= r0 &&
                    w.col0 <= c0 && w.row1 >= r0 + box.height && w.col1 >= c0 + box.width;
    if (!ok) ++violations;
  }
  return {failures == 0 && violations == 0,
          std::to_string(failures) + " hand-case failures, " + std::to_string(violations) +
              " containment violations in 1000 grids"};
}

Outcome metrics_oracle() {
  const auto t0 = Clock::now();
  LabelMask g{Grid<std::uint8_t>(2, 2, 0), {}}, y = g;
  g.values(0, 0) = g.values(0, 1) = 1;
  y.values(0, 1) = y.values(1, 1) = 1;
  const auto worked = overlap_metrics(g, y);
  const bool worked_ok = worked.dsc == 0.5 && worked.sen == 0.5 && worked.kappa == 1.0 / 9.0;

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> spacing(0.3, 2.0);
  int overlap_bad = 0;
  double worst_distance = 0.0;
  for (int t = 0; t < 500; ++t) {
    const int h = 2 + static_cast<int>(rng() % 31), w = 2 + static_cast<int>(rng() % 31);
    const auto a = (t % 3) ? oracle::random_shapes(rng, h, w, 2) : oracle::random_mask(rng, h, w, 0.3);
    const auto b = (t % 3) ? oracle::random_shapes(rng, h, w, 2) : oracle::random_mask(rng, h, w, 0.3);
    const auto m = overlap_metrics(a, b);
    const auto o = oracle::overlap(a, b);
    if ((o.dsc_defined && m.dsc != o.dsc) || (o.sen_defined && m.sen != o.sen) ||
        (o.kappa_defined && m.kappa != o.kappa) || std::isnan(m.sen) == o.sen_defined ||
        std::isnan(m.kappa) == o.kappa_defined)
      ++overlap_bad;
    const Spacing sp = (t % 2) ? Spacing{spacing(rng), spacing(rng)} : Spacing{1.0, 1.0};
    const auto s = surface_metrics(a, b, sp);
    const auto so = oracle::surface(a, b, sp);
    if (so.defined != !(s.flags & kEmptyMask)) {
      worst_distance = INFINITY;
    } else if (so.defined) {
      worst_distance = std::max({worst_distance, std::abs(s.hd95_mm - so.hd95), std::abs(s.assd_mm - so.assd)});
    }
  }
  const double secs = seconds_since(t0);
  return {worked_ok && overlap_bad == 0 && worst_distance <= 1e-9 && secs < 60.0,
          std::string("worked KAPPA case ") + (worked_ok ? "exact" : "WRONG") + ", " +
              std::to_string(overlap_bad) + " overlap mismatches, max distance error " +
              fmt(worst_distance, 3) + " mm, " + fmt(secs, 3) + " s"};
}

Outcome isolation() {
  double worst = 0.0;
  bool reach = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto r = checks::gradient_isolation(seed);
    worst = std::max({worst, r.seg_wrt_loc, r.loc_wrt_seg});
    reach = reach && r.seg_loss_reaches_seg && r.loc_loss_reaches_loc;
  }
  return {worst == 0.0 && reach, "max cross gradient " + fmt(worst) +
                                     (reach ? ", own gradients non-zero" : ", own gradients MISSING")};
}

Outcome finite_differences() {
  const auto r = checks::finite_difference_check(50, 5);
  return {r.max_rel_error <= 1e-3 && r.coordinates == 50 && r.parameters <= 2000,
          std::to_string(r.parameters) + " parameters, " + std::to_string(r.coordinates) +
              " coordinates, max relative error " + fmt(r.max_rel_error, 3)};
}

Outcome dpm() {
  double rel = 0.0, perm = 0.0;
  for (int side : {2, 4}) {
    const auto r = checks::dpm_faithfulness(20 + side, side);
    rel = std::max({rel, r.correlation_rel_error, r.weight_rel_error});
    perm = std::max(perm, r.permutation_error);
  }
  return {rel <= 1e-6 && perm <= 1e-6,
          "token-loop relative error " + fmt(rel, 3) + ", permutation error " + fmt(perm, 3)};
}

// --- training based criteria -------------------------------------------------

struct Workspace {
  fs::path root, c1, c2;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

Workspace prepare(const fs::path& root) {
  Workspace w{root, root / "cohort1", root / "cohort2"};
  fs::create_directories(root);
  write_text(root / "cohort1.params",
             "n_patients = 57\nslices_per_patient = 5\nseed = 11\ncohort_id = 1\n"
             "splits = train:0.7,val:0.3\n");
  write_text(root / "cohort2.params",
             "n_patients = 20\nslices_per_patient = 5\nseed = 12\ncohort_id = 2\n"
             "shift_gamma = 1.3\nshift_intensity_scale = 0.8\nshift_blur_sigma = 0.8\n"
             "shift_resample_factor = 0.75\nsplits = test:1.0\n");
  if (!fs::exists(w.c1 / "manifest.csv")) generate_cohort(load_cohort_spec(root / "cohort1.params"), w.c1);
  if (!fs::exists(w.c2 / "manifest.csv")) generate_cohort(load_cohort_spec(root / "cohort2.params"), w.c2);
  return w;
}

TrainConfig run_config(const Workspace& w, const std::string& name, std::uint64_t seed,
                       bool localization, int epochs = 30) {
  auto c = TrainConfig::desk();
  c.seed = seed;
  c.epochs = epochs;
  c.dpm_depth = 3;
  c.ablation.use_localization = localization;
  c.manifest = w.c1 / "manifest.csv";
  c.checkpoint_dir = w.root / "runs" / name;
  c.threads = 1;
  return c;
}

struct RunScores {
  TrainResult train;
  double c1_val = NAN, c2 = NAN;
  fs::path c2_csv;
};

RunScores run(const Workspace& w, const TrainConfig& c) {
  RunScores r;
  std::cout << "  training " << c.checkpoint_dir.filename().string() << " (" << c.epochs
            << " epochs)" << std::endl;
  r.train = train(c);
  const auto dir = c.checkpoint_dir;
  r.c1_val = evaluate_checkpoint(r.train.last_checkpoint, w.c1 / "manifest.csv", "val", dir / "eval_c1")
                 .summary.dsc.mean;
  r.c2 = evaluate_checkpoint(r.train.last_checkpoint, w.c2 / "manifest.csv", "test", dir / "eval_c2")
             .summary.dsc.mean;
  r.c2_csv = dir / "eval_c2" / "per_sample.csv";
  std::cout << "    cohort-1 val DSC " << fmt(r.c1_val) << ", cohort-2 DSC " << fmt(r.c2) << std::endl;
  return r;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "pdpnet_acceptance";
  const fs::path cli = argc > 2 ? fs::path(argv[2]) : fs::path();
  torch::set_num_threads(1);

  report(1, "PTM oracle equivalence", guarded(ptm_oracle));
  report(2, "bounding-box correctness", guarded(bbox_cases));
  report(3, "metrics oracle equivalence", guarded(metrics_oracle));
  report(4, "gradient isolation", guarded(isolation));
  report(5, "finite-difference gradient check", guarded(finite_differences));
  report(6, "DPM faithfulness", guarded(dpm));

  const auto t_train = Clock::now();
  Workspace ws;
  std::map<std::string, RunScores> runs;
  const auto prepared = guarded([&] {
    ws = prepare(work);
    return Outcome{true, ""};
  });

  report(7, "synthetic end-to-end", guarded([&]() -> Outcome {
    if (!prepared.pass) return prepared;
    const auto t0 = Clock::now();
    runs["full_1"] = run(ws, run_config(ws, "full_1", 1, true));
    const double secs = seconds_since(t0);
    const auto& r = runs["full_1"];

    // Post-training sanity: visible tumours are found, blank images stay blank.
    auto models = load_models(read_checkpoint(r.train.last_checkpoint));
    const auto train_set = load_split(load_manifest(ws.c1 / "manifest.csv"), "train", 128);
    int big = 0, found = 0;
    for (const auto& s : train_set) {
      if (LabelMask{s.mask, {}}.count() < 100) continue;
      ++big;
      if (predict_batch(models, {s.image})[0].mask.count() > 0) ++found;
    }
    const auto blank = predict_batch(models, {Grid<float>(128, 128, 0.0f)})[0].mask;
    const double blank_fraction = static_cast<double>(blank.count()) / (128.0 * 128.0);
    std::cout << "    non-empty predictions on " << found << "/" << big
              << " training slices with >= 100 px tumour; blank image foreground "
              << fmt(100 * blank_fraction, 3) << "%" << std::endl;

    const bool ok = r.c1_val >= 0.70 && r.c2 >= 0.55 && secs <= 1800.0;
    return {ok, "cohort-1 val DSC " + fmt(r.c1_val) + " (>= 0.70), cohort-2 DSC " + fmt(r.c2) +
                    " (>= 0.55), " + fmt(secs, 4) + " s (<= 1800 s)"};
  }));

  report(8, "directional ablation", guarded([&]() -> Outcome {
    if (!prepared.pass) return prepared;
    std::vector<double> full, noloc;
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto f = "full_" + std::to_string(seed), n = "noloc_" + std::to_string(seed);
      if (!runs.count(f)) runs[f] = run(ws, run_config(ws, f, seed, true));
      runs[n] = run(ws, run_config(ws, n, seed, false));
      full.push_back(runs[f].c2);
      noloc.push_back(runs[n].c2);
    }
    const double mf = median(full), mn = median(noloc);
    return {mf >= mn - 0.02, "median cohort-2 DSC full " + fmt(mf) + " vs without localization " +
                                 fmt(mn) + " (need full >= " + fmt(mn - 0.02) + ")"};
  }));

  report(9, "determinism", guarded([&]() -> Outcome {
    if (!prepared.pass) return prepared;
    const auto a = run(ws, run_config(ws, "det_a", 7, true, 3));
    const auto b = run(ws, run_config(ws, "det_b", 7, true, 3));
    const auto& la = a.train.log.back();
    const auto& lb = b.train.log.back();
    const double diff = std::max({std::abs(la.loss_loc - lb.loss_loc), std::abs(la.loss_seg - lb.loss_seg),
                                  std::abs(la.loss_pixel - lb.loss_pixel)});
    const bool same_csv = slurp(a.c2_csv) == slurp(b.c2_csv) &&
                          slurp(a.c2_csv.parent_path() / "summary.csv") ==
                              slurp(b.c2_csv.parent_path() / "summary.csv") &&
                          !slurp(a.c2_csv).empty();
    return {diff <= 1e-6 && same_csv, "final loss difference " + fmt(diff, 3) + ", evaluation CSVs " +
                                          (same_csv ? "identical" : "DIFFER")};
  }));

  report(10, "report emission", guarded([&]() -> Outcome {
    const auto out = work / "report";
    fs::remove_all(out);
    std::string how;
    bool files_ok = false;
    if (prepared.pass && runs.count("full_1") && runs.count("noloc_1")) {
      const auto full = runs["full_1"].c2_csv, noloc = runs["noloc_1"].c2_csv;
      if (!cli.empty()) {
        const auto cmd = quote(cli) + " report --csv " + quote("full=" + full.string()) + " " +
                         quote("no-localization=" + noloc.string()) + " --out " + quote(out) +
                         " > " + quote(work / "report.log") + " 2>&1";
        files_ok = std::system(cmd.c_str()) == 0;
        how = "CLI";
      } else {
        write_report({load_arm("full=" + full.string()), load_arm("no-localization=" + noloc.string())}, out);
        files_ok = true;
        how = "library";
      }
    } else {
      return {false, "evaluation CSVs from the ablation runs are missing"};
    }
    for (const char* f : {"radar.svg", "curves.svg", "boxplots.svg"})
      files_ok = files_ok && fs::exists(out / f) && slurp(out / f).rfind("<svg", 0) == 0;

    // Window behaviour on a synthetic CSV: one arm inside, one below the window.
    std::vector<MetricsReport> inside, below;
    for (int i = 0; i < 4; ++i) {
      MetricsReport a;
      a.sample_id = "s" + std::to_string(i);
      a.dsc = a.sen = a.kappa = 0.9;
      a.hd95_mm = 2.0;
      a.assd_mm = 1.0;
      inside.push_back(a);
      a.dsc = a.sen = a.kappa = 0.4;
      a.hd95_mm = 8.0;
      a.assd_mm = 4.0;
      below.push_back(a);
    }
    write_reports_csv(work / "synthetic_inside.csv", inside);
    write_reports_csv(work / "synthetic_below.csv", below);
    const std::vector<ReportArm> arms{load_arm("inside=" + (work / "synthetic_inside.csv").string()),
                                      load_arm("below=" + (work / "synthetic_below.csv").string())};
    const auto values = radar_values(arms);
    bool window_ok = true;
    for (std::size_t m = 0; m < kReportMetrics.size(); ++m) {
      window_ok = window_ok && !values[0][m].clamped && values[1][m].clamped &&
                  values[1][m].radius == 0.0;
    }
    window_ok = window_ok && std::abs(values[0][0].radius - (0.9 - 0.7) / 0.3) < 1e-12;
    const auto svg = slurp(write_report(arms, work / "report_synthetic").radar);
    window_ok = window_ok && svg.find("* below DSC = 0.40 (score 0.40) outside window, clamped") != std::string::npos &&
                svg.find("* inside") == std::string::npos;
    return {files_ok && window_ok, "3 plot files via " + how + (files_ok ? "" : " MISSING") +
                                       ", radar window clamping " + (window_ok ? "verified" : "WRONG")};
  }));

  std::cout << "training criteria took " << fmt(seconds_since(t_train), 4) << " s" << std::endl;
  const bool all = std::all_of(results.begin(), results.end(), [](auto& r) { return r.second; });
  std::cout << (all ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED") << std::endl;
  return all ? 0 : 1;
}
