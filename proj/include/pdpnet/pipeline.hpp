#pragma once

// Training, evaluation and prediction for the two-stage model: the
// localization network picks a square crop, the dual-prior network segments it.

#include <filesystem>
#include <iosfwd>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "pdpnet/checkpoint.hpp"
#include "pdpnet/config.hpp"
#include "pdpnet/data.hpp"
#include "pdpnet/dpknet.hpp"
#include "pdpnet/localization_net.hpp"
#include "pdpnet/losses.hpp"
#include "pdpnet/metrics.hpp"

namespace pdpnet {

/// Both networks, built from a config. Construction seeds torch with the
/// config seed so initial weights are reproducible.
struct Models {
  TrainConfig config;
  LocalizationNet loc{nullptr};
  DpkNet seg{nullptr};

  explicit Models(const TrainConfig& config);

  std::vector<torch::Tensor> loc_parameters() const { return loc->parameters(); }
  std::vector<torch::Tensor> seg_parameters() const { return seg->parameters(); }
  /// Localization parameters followed by segmentation parameters.
  std::vector<torch::Tensor> parameters() const;
  void train(bool on = true);
};

std::unique_ptr<torch::optim::Optimizer> make_optimizer(const OptimizerConfig& config,
                                                        const std::vector<torch::Tensor>& params);

/// One manifest record ready for the networks.
struct PreparedSample {
  std::string id;
  int cohort = 0;
  Grid<float> image;           // patient-normalised, input_side square
  Grid<std::uint8_t> mask;     // input_side square
  LabelMask original_mask;     // native extent and spacing
};

/// Loads, normalises per patient and resizes every record of a split, in
/// manifest order.
std::vector<PreparedSample> load_split(const DatasetManifest& manifest, const std::string& split,
                                       int input_side);

torch::Tensor images_to_tensor(const std::vector<Grid<float>>& images);
torch::Tensor masks_to_tensor(const std::vector<Grid<std::uint8_t>>& masks);

struct ForwardLosses {
  torch::Tensor prob_grid;  // [B,g,g]
  torch::Tensor loss_loc;
  SegLoss seg;
  std::vector<BoundingBox> boxes;
  DecoderState state;
  torch::Tensor crops;   // [B,1,N,N]
  torch::Tensor y_crop;  // [B,1,N,N]
};

/// One training forward pass: localization loss against the PTM patch labels,
/// hard boxes from the detached patch probabilities, crops of raw image and
/// label, and the segmentation loss against PTM targets at every semantic scale.
ForwardLosses forward_losses(Models& models, const std::vector<Grid<float>>& images,
                             const std::vector<Grid<std::uint8_t>>& masks);

/// PTM target of a crop batch at side `side`, [B,1,side,side].
torch::Tensor ptm_targets(const torch::Tensor& y_crop, int side);

struct EpochRecord {
  int epoch = 0;
  double loss_loc = 0.0;
  double loss_seg = 0.0;
  double loss_pixel = 0.0;
  std::vector<double> prior_terms;
  double val_dsc = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::filesystem::path log_path;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;  // equals last_checkpoint without validation
  double best_val_dsc = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = 0;
};

/// Trains both networks simultaneously with one optimizer. Writes
/// train_log.csv, last.ckpt and best.ckpt into the checkpoint directory.
TrainResult train(const TrainConfig& config, std::ostream* progress = nullptr);

/// Snapshot of models and optimizer.
Checkpoint make_checkpoint(const Models& models, torch::optim::Optimizer* optimizer, int epoch,
                           const std::string& rng_state);
/// Rebuilds the models recorded in a checkpoint.
Models load_models(const Checkpoint& ckpt);

struct SamplePrediction {
  BoundingBox box;
  LabelMask crop_mask;  // crop_side square
  LabelMask mask;       // input_side square
};

/// Inference on prepared images (eval mode, no gradients).
std::vector<SamplePrediction> predict_batch(Models& models, const std::vector<Grid<float>>& images);

struct EvalOptions {
  bool bypass = false;  // score the reference masks against themselves
  int batch_size = 16;
  KappaMode kappa = KappaMode::Overlap;
};

struct EvalResult {
  std::vector<MetricsReport> reports;
  CohortSummary summary;
};

/// Metrics at native resolution: predicted crop masks are pasted back into the
/// input frame and resized to the original extent.
EvalResult evaluate(Models& models, const std::vector<PreparedSample>& samples,
                    const EvalOptions& options = {});

/// Loads the checkpoint and manifest, evaluates one split and writes
/// per_sample.csv and summary.csv into out_dir.
EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::filesystem::path& manifest, const std::string& split,
                               const std::filesystem::path& out_dir,
                               const EvalOptions& options = {});

void write_reports_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& reports);
std::vector<MetricsReport> read_reports_csv(const std::filesystem::path& path);
void write_summary_csv(const std::filesystem::path& path, const CohortSummary& summary);

/// Segments one image file and writes the full-resolution mask. With a dump
/// directory, also writes the localization grid, semantic priors, correlation
/// prior maps and the crop probability map as PNGs.
LabelMask predict_file(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                       const std::filesystem::path& out,
                       const std::filesystem::path& dump_dir = {});

}  // namespace pdpnet
