// Command-line front end: generate, train, eval, predict, report.

#include <iostream>

#include <CLI11.hpp>

#include "pdpnet/config.hpp"
#include "pdpnet/data.hpp"
#include "pdpnet/errors.hpp"
#include "pdpnet/pipeline.hpp"
#include "pdpnet/report.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Progressive dual-prior breast tumour segmentation"};
  app.require_subcommand(1);

  std::string params_path, out_dir;
  auto* gen = app.add_subcommand("generate", "Write a synthetic phantom cohort and its manifest");
  gen->add_option("--params", params_path, "Cohort parameter file")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();

  std::string config_path;
  auto* train = app.add_subcommand("train", "Train localization and segmentation networks");
  train->add_option("--config", config_path, "Training config file")->required();

  std::string ckpt, manifest, split = "test", eval_out;
  bool bypass = false, classical = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one manifest split");
  eval->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval->add_option("--manifest", manifest, "Manifest CSV")->required();
  eval->add_option("--split", split, "Split to evaluate");
  eval->add_option("--out", eval_out, "Directory for per_sample.csv and summary.csv")->required();
  eval->add_flag("--bypass", bypass, "Score reference masks against themselves");
  eval->add_flag("--classical-kappa", classical, "Cohen's kappa instead of the overlap variant");

  std::string image, mask_out, dump_dir;
  auto* predict = app.add_subcommand("predict", "Segment one image");
  predict->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  predict->add_option("--image", image, "Input PNG")->required();
  predict->add_option("--out", mask_out, "Output mask PNG")->required();
  predict->add_option("--dump-priors", dump_dir, "Directory for prior-map debug images");

  std::vector<std::string> csvs;
  std::string report_out;
  pdpnet::ReportOptions report_opts;
  auto* report = app.add_subcommand("report", "Radar, curve and box plots from metric CSVs");
  report->add_option("--csv", csvs, "Per-sample CSVs, optionally name=path")->required();
  report->add_option("--out", report_out, "Output directory")->required();
  report->add_option("--window-lo", report_opts.window_lo, "Radar window lower bound");
  report->add_option("--window-hi", report_opts.window_hi, "Radar window upper bound");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto spec = pdpnet::load_cohort_spec(params_path);
      const auto m = pdpnet::generate_cohort(spec, out_dir);
      std::cout << "wrote " << m.records.size() << " slices to " << out_dir << "\n";
    } else if (*train) {
      const auto cfg = pdpnet::load_train_config(config_path);
      const auto r = pdpnet::train(cfg, &std::cout);
      std::cout << "log " << r.log_path.string() << "\nlast " << r.last_checkpoint.string()
                << "\nbest " << r.best_checkpoint.string() << " (epoch " << r.best_epoch << ")\n";
    } else if (*eval) {
      pdpnet::EvalOptions opts;
      opts.bypass = bypass;
      opts.kappa = classical ? pdpnet::KappaMode::Classical : pdpnet::KappaMode::Overlap;
      const auto r = pdpnet::evaluate_checkpoint(ckpt, manifest, split, eval_out, opts);
      const auto& s = r.summary;
      std::cout << "n " << s.n << "\nDSC " << s.dsc.mean << " +- " << s.dsc.half_width << "\nSEN "
                << s.sen.mean << " +- " << s.sen.half_width << "\nKAPPA " << s.kappa.mean
                << " +- " << s.kappa.half_width << "\nHD95 " << s.hd95_mm.mean << " +- "
                << s.hd95_mm.half_width << " mm\nASSD " << s.assd_mm.mean << " +- "
                << s.assd_mm.half_width << " mm\n";
    } else if (*predict) {
      const auto m = pdpnet::predict_file(ckpt, image, mask_out, dump_dir);
      std::cout << "foreground pixels " << m.count() << "\n";
    } else if (*report) {
      std::vector<pdpnet::ReportArm> arms;
      for (const auto& c : csvs) arms.push_back(pdpnet::load_arm(c));
      const auto files = pdpnet::write_report(arms, report_out, report_opts);
      std::cout << files.radar.string() << "\n"
                << files.curves.string() << "\n"
                << files.boxplots.string() << "\n";
    }
  } catch (const pdpnet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
