#pragma once

// Flat `key = value` configuration documents for training runs and cohort
// generation. Lines starting with '#' are comments; unknown keys are errors.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "pdpnet/data.hpp"
#include "pdpnet/dpknet.hpp"
#include "pdpnet/localization_net.hpp"

namespace pdpnet {

struct OptimizerConfig {
  std::string kind = "sgd";  // sgd | adam
  double lr = 0.001;
  double momentum = 0.0;  // sgd
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double weight_decay = 0.0;
};

struct AblationConfig {
  bool use_localization = true;
  bool use_semantic_prior = true;
  bool use_correlation_prior = true;
};

struct TrainConfig {
  std::uint64_t seed = 1;
  int epochs = 30;
  int batch_size = 8;
  OptimizerConfig optimizer;
  int input_side = 128;
  int crop_side = 64;
  int dpm_depth = 3;
  AblationConfig ablation;
  AugmentRanges augmentation;
  bool augment = true;
  double attention_temperature = 1.0;
  std::string encoder = "compact";  // compact | densenet121
  std::string extent_mode = "count";  // count | span
  std::filesystem::path manifest;
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::string train_split = "train";
  std::string val_split = "val";
  int val_every = 1;  // epochs between validation passes, 0 disables
  int checkpoint_every = 1;
  int threads = 1;
  std::filesystem::path resume;

  void validate() const;

  /// Desk-scale defaults: batch 8, 30 epochs, compact encoders, SGD with
  /// momentum 0.9 at lr 0.01.
  static TrainConfig desk();
  /// Published training scale: batch 32, 500 epochs, DenseNet121-depth
  /// encoders, plain SGD at lr 0.001.
  static TrainConfig paper();

  LocalizationOptions localization_options() const;
  DpkOptions dpk_options() const;
  ExtentMode extent() const;
};

using KeyValues = std::map<std::string, std::string>;

/// Parses a flat key/value document. Duplicate keys and lines without '=' are errors.
KeyValues parse_key_values(const std::string& text, const std::string& origin = "<config>");
KeyValues read_key_values(const std::filesystem::path& path);

/// Builds a TrainConfig from a document; a `profile` key (desk | paper) selects
/// the starting defaults. PDPNET_SEED in the environment overrides `seed`.
TrainConfig train_config_from(const KeyValues& kv, bool apply_env = true);
TrainConfig load_train_config(const std::filesystem::path& path);

/// Canonical text form; parsing it yields the same config.
std::string to_text(const TrainConfig& config);

CohortSpec cohort_spec_from(const KeyValues& kv);
CohortSpec load_cohort_spec(const std::filesystem::path& path);

}  // namespace pdpnet
