#pragma once

#include <vector>

#include <torch/torch.h>

namespace pdpnet {

inline constexpr double kDiceEpsilon = 1e-6;

/// Soft Dice loss per sample: 1 - 2 sum(p t) / (sum p + sum t + eps).
/// Inputs are [B, ...]; result is [B]. A sample whose prediction and target
/// both sum to zero scores 0.
torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target);

/// log(cosh(dice_loss)) per sample, [B].
torch::Tensor log_cosh_dice(const torch::Tensor& pred, const torch::Tensor& target);

/// Localization loss on the patch probability grid, averaged over the batch.
torch::Tensor loc_loss(const torch::Tensor& prob_grid, const torch::Tensor& patch_target);

struct SegLoss {
  torch::Tensor total;
  std::vector<torch::Tensor> prior_terms;  // one per semantic scale, finest first
  torch::Tensor pixel_term;
};

/// Sum of the log-cosh Dice terms of every semantic prior against its PTM
/// target plus the pixel-level term; each term is a batch mean.
SegLoss seg_loss(const std::vector<torch::Tensor>& priors,
                 const std::vector<torch::Tensor>& prior_targets, const torch::Tensor& y_hat,
                 const torch::Tensor& y_crop);

}  // namespace pdpnet
