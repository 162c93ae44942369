#include "pdpnet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "pdpnet/errors.hpp"
#include "pdpnet/image_io.hpp"
#include "pdpnet/ptm_geometry.hpp"

namespace pdpnet {

namespace {

Grid<std::uint8_t> tensor_to_mask(const torch::Tensor& t, float threshold) {
  const auto c = t.detach().to(torch::kFloat32).contiguous();
  const auto* p = c.data_ptr<float>();
  Grid<std::uint8_t> out(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)));
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = p[i] > threshold ? 1 : 0;
  return out;
}

Grid<float> tensor_to_grid(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kFloat32).contiguous();
  const auto* p = c.data_ptr<float>();
  return Grid<float>(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)),
                     std::vector<float>(p, p + c.numel()));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

BoundingBox box_for(const TrainConfig& config, const torch::Tensor& prob_grid, int side) {
  if (!config.ablation.use_localization) return full_image_box(side, side);
  return localize_from_grid(to_grid(prob_grid), side, config.extent()).box;
}

void save_probability(const std::filesystem::path& path, const torch::Tensor& map) {
  const auto g = tensor_to_grid(map);
  Grid<std::uint8_t> q(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.size(); ++i)
    q.values()[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(g.values()[i], 0.0f, 1.0f)));
  write_png8(path, q);
}

torch::Tensor torch_rng_state() {
  auto gen = at::detail::getDefaultCPUGenerator();
  std::lock_guard<std::mutex> lock(gen.mutex());
  return gen.get_state();
}

void set_torch_rng_state(const torch::Tensor& state) {
  if (!state.defined()) return;
  auto gen = at::detail::getDefaultCPUGenerator();
  std::lock_guard<std::mutex> lock(gen.mutex());
  gen.set_state(state);
}

struct Inference {
  std::vector<SamplePrediction> predictions;
  torch::Tensor prob_grid;
  torch::Tensor crops;
  DecoderState state;
};

Inference run_inference(Models& models, const std::vector<Grid<float>>& images) {
  torch::NoGradGuard no_grad;
  models.train(false);
  const auto& cfg = models.config;
  const int side = cfg.input_side, n = cfg.crop_side;
  for (const auto& img : images)
    if (img.rows() != side || img.cols() != side)
      throw ShapeMismatch("prediction input must be " + std::to_string(side) + " square");
  Inference out;
  out.prob_grid = models.loc->forward(images_to_tensor(images));
  std::vector<Grid<float>> crops;
  for (std::size_t b = 0; b < images.size(); ++b) {
    SamplePrediction p;
    p.box = box_for(cfg, out.prob_grid[b], side);
    crops.push_back(crop_and_resize(ImageSlice{images[b], {}, {}, 0}, p.box, n).pixels);
    out.predictions.push_back(std::move(p));
  }
  out.crops = images_to_tensor(crops);
  out.state = models.seg->forward(out.crops);
  for (std::size_t b = 0; b < images.size(); ++b) {
    auto& p = out.predictions[b];
    p.crop_mask = LabelMask{tensor_to_mask(out.state.y_hat[b][0], 0.5f), {}};
    p.mask = paste_back(p.crop_mask, p.box, side, side);
  }
  return out;
}

void write_epoch_row(std::ostream& out, const EpochRecord& r) {
  out << r.epoch << ',' << format_double(r.loss_loc) << ',' << format_double(r.loss_seg) << ','
      << format_double(r.loss_pixel);
  for (double t : r.prior_terms) out << ',' << format_double(t);
  out << ',' << format_double(r.val_dsc) << ',' << format_double(r.seconds) << '\n';
}

void dump_nonfinite(const std::filesystem::path& path, int epoch, std::size_t batch,
                    const std::vector<std::string>& ids, const ForwardLosses& fl,
                    const Models& models) {
  std::ofstream out(path);
  out << "epoch " << epoch << " batch " << batch << "\nsamples:";
  for (const auto& id : ids) out << ' ' << id;
  out << "\nloss_loc " << fl.loss_loc.item<double>() << "\nloss_seg_pixel "
      << fl.seg.pixel_term.item<double>() << '\n';
  for (std::size_t i = 0; i < fl.seg.prior_terms.size(); ++i)
    out << "loss_seg_prior" << i << ' ' << fl.seg.prior_terms[i].item<double>() << '\n';
  auto report = [&](const torch::nn::Module& m, const std::string& prefix) {
    for (const auto& item : m.named_parameters()) {
      const auto& t = item.value();
      out << prefix << item.key() << " norm " << t.norm().item<double>() << " finite "
          << t.isfinite().all().item<bool>() << '\n';
    }
  };
  report(*models.loc, "loc.");
  report(*models.seg, "seg.");
}

}  // namespace

Models::Models(const TrainConfig& c) : config(c) {
  config.validate();
  torch::manual_seed(config.seed);
  loc = LocalizationNet(config.localization_options());
  seg = DpkNet(config.dpk_options());
}

std::vector<torch::Tensor> Models::parameters() const {
  auto out = loc->parameters();
  for (auto& p : seg->parameters()) out.push_back(p);
  return out;
}

void Models::train(bool on) {
  loc->train(on);
  seg->train(on);
}

std::unique_ptr<torch::optim::Optimizer> make_optimizer(const OptimizerConfig& c,
                                                        const std::vector<torch::Tensor>& params) {
  if (c.kind == "adam")
    return std::make_unique<torch::optim::Adam>(
        params, torch::optim::AdamOptions(c.lr)
                    .betas(std::make_tuple(c.beta1, c.beta2))
                    .weight_decay(c.weight_decay));
  if (c.kind == "sgd")
    return std::make_unique<torch::optim::SGD>(
        params,
        torch::optim::SGDOptions(c.lr).momentum(c.momentum).weight_decay(c.weight_decay));
  throw ConfigInvalid("unknown optimizer '" + c.kind + "'");
}

std::vector<PreparedSample> load_split(const DatasetManifest& manifest, const std::string& split,
                                       int input_side) {
  const auto idx = manifest.indices_of_split(split);
  std::map<std::string, std::vector<std::size_t>> by_patient;
  for (auto i : idx) by_patient[manifest.records[i].patient_id].push_back(i);

  std::map<std::size_t, PreparedSample> prepared;
  for (const auto& [patient, records] : by_patient) {
    std::vector<Grid<float>> slices;
    for (auto i : records) {
      const auto& r = manifest.records[i];
      slices.push_back(load_image(manifest.resolve(r.image_path), r.intensity));
    }
    auto normalized = normalize_patient(slices, input_side);
    for (std::size_t k = 0; k < records.size(); ++k) {
      const auto& r = manifest.records[records[k]];
      auto mask = load_mask(manifest.resolve(r.mask_path));
      if (!mask.same_shape(slices[k]))
        throw DataError("mask and image extents differ for " + r.image_path.string());
      PreparedSample s;
      s.id = r.image_path.stem().string();
      s.cohort = r.cohort_id;
      s.image = std::move(normalized[k]);
      s.mask = (mask.rows() == input_side && mask.cols() == input_side)
                   ? mask
                   : resize_nearest(mask, input_side, input_side);
      s.original_mask = LabelMask{std::move(mask), r.spacing};
      prepared.emplace(records[k], std::move(s));
    }
  }
  std::vector<PreparedSample> out;
  for (auto& [i, s] : prepared) out.push_back(std::move(s));
  return out;
}

torch::Tensor images_to_tensor(const std::vector<Grid<float>>& images) {
  if (images.empty()) throw ShapeMismatch("empty image batch");
  const int rows = images[0].rows(), cols = images[0].cols();
  auto t = torch::empty({static_cast<std::int64_t>(images.size()), 1, rows, cols});
  auto* p = t.data_ptr<float>();
  for (const auto& img : images) {
    if (img.rows() != rows || img.cols() != cols) throw ShapeMismatch("ragged image batch");
    p = std::copy(img.values().begin(), img.values().end(), p);
  }
  return t;
}

torch::Tensor masks_to_tensor(const std::vector<Grid<std::uint8_t>>& masks) {
  if (masks.empty()) throw ShapeMismatch("empty mask batch");
  const int rows = masks[0].rows(), cols = masks[0].cols();
  auto t = torch::empty({static_cast<std::int64_t>(masks.size()), 1, rows, cols});
  auto* p = t.data_ptr<float>();
  for (const auto& m : masks) {
    if (m.rows() != rows || m.cols() != cols) throw ShapeMismatch("ragged mask batch");
    for (auto v : m.values()) *p++ = v ? 1.0f : 0.0f;
  }
  return t;
}

torch::Tensor ptm_targets(const torch::Tensor& y_crop, int side) {
  std::vector<Grid<std::uint8_t>> targets;
  for (std::int64_t b = 0; b < y_crop.size(0); ++b)
    targets.push_back(ptm(LabelMask{tensor_to_mask(y_crop[b][0], 0.5f), {}}, side, side));
  return masks_to_tensor(targets);
}

ForwardLosses forward_losses(Models& models, const std::vector<Grid<float>>& images,
                             const std::vector<Grid<std::uint8_t>>& masks) {
  const auto& cfg = models.config;
  const int side = cfg.input_side, n = cfg.crop_side;
  if (images.size() != masks.size()) throw ShapeMismatch("one mask per image required");
  ForwardLosses out;
  out.prob_grid = models.loc->forward(images_to_tensor(images));
  const int g = static_cast<int>(out.prob_grid.size(1));
  std::vector<Grid<std::uint8_t>> loc_targets;
  for (const auto& m : masks) loc_targets.push_back(ptm(LabelMask{m, {}}, g, g));
  out.loss_loc = loc_loss(out.prob_grid, masks_to_tensor(loc_targets).squeeze(1));

  const auto detached = out.prob_grid.detach();
  std::vector<Grid<float>> crops;
  std::vector<Grid<std::uint8_t>> crop_masks;
  for (std::size_t b = 0; b < images.size(); ++b) {
    out.boxes.push_back(box_for(cfg, detached[b], side));
    crops.push_back(crop_and_resize(ImageSlice{images[b], {}, {}, 0}, out.boxes[b], n).pixels);
    crop_masks.push_back(crop_and_resize(LabelMask{masks[b], {}}, out.boxes[b], n).values);
  }
  out.crops = images_to_tensor(crops);
  out.y_crop = masks_to_tensor(crop_masks);
  out.state = models.seg->forward(out.crops);
  const auto priors = out.state.priors();
  std::vector<torch::Tensor> targets;
  for (const auto& p : priors) targets.push_back(ptm_targets(out.y_crop, static_cast<int>(p.size(2))));
  out.seg = seg_loss(priors, targets, out.state.y_hat, out.y_crop);
  return out;
}

Checkpoint make_checkpoint(const Models& models, torch::optim::Optimizer* optimizer, int epoch,
                           const std::string& rng_state) {
  Checkpoint c;
  c.config_text = to_text(models.config);
  c.epoch = epoch;
  c.rng_state = rng_state;
  c.torch_rng_state = torch_rng_state();
  append_module_state(c.tensors, *models.loc, "loc.");
  append_module_state(c.tensors, *models.seg, "seg.");
  if (optimizer) append_optimizer_state(c.tensors, *optimizer, models.parameters(), "opt.");
  return c;
}

Models load_models(const Checkpoint& ckpt) {
  Models m(train_config_from(parse_key_values(ckpt.config_text, "checkpoint"), false));
  load_module_state(ckpt, *m.loc, "loc.");
  load_module_state(ckpt, *m.seg, "seg.");
  return m;
}

TrainResult train(const TrainConfig& config, std::ostream* progress) {
  config.validate();
  torch::set_num_threads(config.threads);
  const auto manifest = load_manifest(config.manifest);
  const auto train_set = load_split(manifest, config.train_split, config.input_side);
  if (train_set.empty()) throw DataError("split '" + config.train_split + "' has no records");
  std::vector<PreparedSample> val_set;
  if (config.val_every > 0) val_set = load_split(manifest, config.val_split, config.input_side);

  Models models(config);
  const auto params = models.parameters();
  auto optimizer = make_optimizer(config.optimizer, params);
  std::mt19937_64 rng(config.seed);
  int start = 1;

  TrainResult result;
  const auto& dir = config.checkpoint_dir;
  std::filesystem::create_directories(dir);
  result.log_path = dir / "train_log.csv";
  result.last_checkpoint = dir / "last.ckpt";
  result.best_checkpoint = dir / "best.ckpt";

  if (!config.resume.empty()) {
    const auto ckpt = read_checkpoint(config.resume);
    load_module_state(ckpt, *models.loc, "loc.");
    load_module_state(ckpt, *models.seg, "seg.");
    load_optimizer_state(ckpt, *optimizer, params, "opt.");
    std::istringstream(ckpt.rng_state) >> rng;
    set_torch_rng_state(ckpt.torch_rng_state);
    start = ckpt.epoch + 1;
  }

  const std::size_t n_priors =
      models.seg->has_semantic_heads() ? static_cast<std::size_t>(models.seg->options().levels() - 1) : 0;
  std::ofstream log(result.log_path, config.resume.empty() ? std::ios::trunc : std::ios::app);
  if (config.resume.empty()) {
    log << "epoch,loss_loc,loss_seg,loss_pixel";
    for (std::size_t i = 0; i < n_priors; ++i) log << ",loss_prior_s" << (i + 2);
    log << ",val_dsc,seconds\n";
  }

  auto rng_text = [&] {
    std::ostringstream ss;
    ss << rng;
    return ss.str();
  };

  std::vector<std::size_t> order(train_set.size());
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = start; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    models.train(true);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.prior_terms.assign(n_priors, 0.0);
    double seen = 0;
    for (std::size_t b0 = 0, bi = 0; b0 < order.size(); b0 += batch, ++bi) {
      std::vector<Grid<float>> images;
      std::vector<Grid<std::uint8_t>> masks;
      std::vector<std::string> ids;
      for (std::size_t k = b0; k < std::min(order.size(), b0 + batch); ++k) {
        const auto& s = train_set[order[k]];
        ids.push_back(s.id);
        if (config.augment) {
          auto [img, mask] = augment(s.image, s.mask,
                                     record_seed(config.seed, epoch, static_cast<int>(order[k]), 0),
                                     config.augmentation);
          images.push_back(std::move(img));
          masks.push_back(std::move(mask));
        } else {
          images.push_back(s.image);
          masks.push_back(s.mask);
        }
      }
      auto fl = forward_losses(models, images, masks);
      auto total = fl.loss_loc + fl.seg.total;
      if (!std::isfinite(total.item<double>())) {
        const auto dump = dir / "nonfinite_dump.txt";
        dump_nonfinite(dump, epoch, bi, ids, fl, models);
        throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(bi) + "; diagnostics in " + dump.string());
      }
      optimizer->zero_grad();
      total.backward();
      optimizer->step();

      const double w = static_cast<double>(images.size());
      seen += w;
      rec.loss_loc += w * fl.loss_loc.item<double>();
      rec.loss_seg += w * fl.seg.total.item<double>();
      rec.loss_pixel += w * fl.seg.pixel_term.item<double>();
      for (std::size_t i = 0; i < n_priors; ++i)
        rec.prior_terms[i] += w * fl.seg.prior_terms[i].item<double>();
    }
    rec.loss_loc /= seen;
    rec.loss_seg /= seen;
    rec.loss_pixel /= seen;
    for (auto& t : rec.prior_terms) t /= seen;

    const bool validate_now = !val_set.empty() && (epoch % config.val_every == 0 || epoch == config.epochs);
    if (validate_now) {
      rec.val_dsc = evaluate(models, val_set).summary.dsc.mean;
      if (std::isnan(result.best_val_dsc) || rec.val_dsc > result.best_val_dsc) {
        result.best_val_dsc = rec.val_dsc;
        result.best_epoch = epoch;
        write_checkpoint(make_checkpoint(models, optimizer.get(), epoch, rng_text()),
                         result.best_checkpoint);
      }
    }
    if ((config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) ||
        epoch == config.epochs)
      write_checkpoint(make_checkpoint(models, optimizer.get(), epoch, rng_text()),
                       result.last_checkpoint);

    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_epoch_row(log, rec);
    log.flush();
    if (progress) {
      *progress << "epoch " << epoch << "/" << config.epochs << " loss_loc " << rec.loss_loc
                << " loss_seg " << rec.loss_seg;
      if (!std::isnan(rec.val_dsc)) *progress << " val_dsc " << rec.val_dsc;
      *progress << " (" << rec.seconds << " s)\n";
    }
    result.log.push_back(rec);
  }
  if (val_set.empty() && std::filesystem::exists(result.last_checkpoint)) {
    std::filesystem::copy_file(result.last_checkpoint, result.best_checkpoint,
                               std::filesystem::copy_options::overwrite_existing);
    result.best_epoch = config.epochs;
  }
  return result;
}

std::vector<SamplePrediction> predict_batch(Models& models, const std::vector<Grid<float>>& images) {
  return run_inference(models, images).predictions;
}

EvalResult evaluate(Models& models, const std::vector<PreparedSample>& samples,
                    const EvalOptions& options) {
  EvalResult out;
  const auto batch = static_cast<std::size_t>(std::max(1, options.batch_size));
  for (std::size_t b0 = 0; b0 < samples.size(); b0 += batch) {
    const auto b1 = std::min(samples.size(), b0 + batch);
    std::vector<SamplePrediction> preds;
    if (!options.bypass) {
      std::vector<Grid<float>> images;
      for (auto i = b0; i < b1; ++i) images.push_back(samples[i].image);
      preds = predict_batch(models, images);
    }
    for (auto i = b0; i < b1; ++i) {
      const auto& s = samples[i];
      const auto& ref = s.original_mask;
      LabelMask predicted{ref.values, ref.spacing};
      if (!options.bypass) {
        const auto& m = preds[i - b0].mask.values;
        predicted.values = m.same_shape(ref.values)
                               ? m
                               : resize_nearest(m, ref.values.rows(), ref.values.cols());
      }
      out.reports.push_back(
          evaluate_pair(predicted, ref, ref.spacing, s.id, s.cohort, options.kappa));
    }
  }
  out.summary = aggregate(out.reports);
  return out;
}

EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::filesystem::path& manifest, const std::string& split,
                               const std::filesystem::path& out_dir, const EvalOptions& options) {
  auto models = load_models(read_checkpoint(checkpoint));
  torch::set_num_threads(models.config.threads);
  const auto m = load_manifest(manifest);
  const auto samples = load_split(m, split, models.config.input_side);
  if (samples.empty()) throw DataError("split '" + split + "' has no records in " + manifest.string());
  auto result = evaluate(models, samples, options);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_reports_csv(out_dir / "per_sample.csv", result.reports);
    write_summary_csv(out_dir / "summary.csv", result.summary);
  }
  return result;
}

void write_reports_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& reports) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample_id,cohort,dsc,sen,kappa,hd95_mm,assd_mm,flags\n";
  for (const auto& r : reports)
    out << r.sample_id << ',' << r.cohort << ',' << format_double(r.dsc) << ','
        << format_double(r.sen) << ',' << format_double(r.kappa) << ','
        << format_double(r.hd95_mm) << ',' << format_double(r.assd_mm) << ','
        << describe_flags(r.flags) << '\n';
}

std::vector<MetricsReport> read_reports_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("missing metrics CSV " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id,cohort,dsc,sen,kappa,hd95_mm,assd_mm", 0) != 0)
    throw MalformedCsv(path.string() + ": unexpected header");
  std::vector<MetricsReport> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 8)
      throw MalformedCsv(path.string() + ":" + std::to_string(line_no) + ": expected 8 columns");
    auto number = [&](const std::string& s) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || *end != '\0')
        throw MalformedCsv(path.string() + ":" + std::to_string(line_no) + ": bad number '" + s + "'");
      return v;
    };
    MetricsReport r;
    r.sample_id = cells[0];
    r.cohort = static_cast<int>(number(cells[1]));
    r.dsc = number(cells[2]);
    r.sen = number(cells[3]);
    r.kappa = number(cells[4]);
    r.hd95_mm = number(cells[5]);
    r.assd_mm = number(cells[6]);
    if (cells[7].find("EmptyReference") != std::string::npos) r.flags |= kEmptyReference;
    if (cells[7].find("EmptyPrediction") != std::string::npos) r.flags |= kEmptyPrediction;
    if (cells[7].find("EmptyMask") != std::string::npos) r.flags |= kEmptyMask;
    out.push_back(std::move(r));
  }
  return out;
}

void write_summary_csv(const std::filesystem::path& path, const CohortSummary& s) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "metric,mean,ci95_half_width,n,excluded\n";
  auto row = [&](const char* name, const MetricSummary& m) {
    out << name << ',' << format_double(m.mean) << ',' << format_double(m.half_width) << ','
        << m.n << ',' << m.excluded << '\n';
  };
  row("dsc", s.dsc);
  row("sen", s.sen);
  row("kappa", s.kappa);
  row("hd95_mm", s.hd95_mm);
  row("assd_mm", s.assd_mm);
}

LabelMask predict_file(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                       const std::filesystem::path& out, const std::filesystem::path& dump_dir) {
  auto models = load_models(read_checkpoint(checkpoint));
  torch::set_num_threads(models.config.threads);
  const auto raw = read_png(image);
  Grid<float> pixels(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.size(); ++i) pixels.values()[i] = raw.values()[i];
  const auto normalized = normalize_patient({pixels}, models.config.input_side);
  auto inf = run_inference(models, normalized);
  const auto& pred = inf.predictions[0];
  LabelMask result{resize_nearest(pred.mask.values, raw.rows(), raw.cols()), {}};
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  save_mask(out, result.values);

  if (!dump_dir.empty()) {
    std::filesystem::create_directories(dump_dir);
    save_probability(dump_dir / "localization_grid.png", inf.prob_grid[0]);
    save_visualisation(dump_dir / "crop.png", tensor_to_grid(inf.crops[0][0]));
    save_probability(dump_dir / "y_hat.png", inf.state.y_hat[0][0]);
    for (std::size_t s = 2; s < inf.state.p.size(); ++s) {
      if (inf.state.p[s].defined())
        save_probability(dump_dir / ("semantic_prior_s" + std::to_string(s) + ".png"),
                         inf.state.p[s][0][0]);
      if (inf.state.a_cr[s].defined()) {
        const auto& f = inf.state.f[s];
        const auto received = inf.state.a_cr[s][0].mean(0).reshape({f.size(2), f.size(3)});
        save_probability(dump_dir / ("correlation_prior_s" + std::to_string(s) + ".png"), received);
      }
    }
  }
  return result;
}

}  // namespace pdpnet
