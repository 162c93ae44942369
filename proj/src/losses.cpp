#include "pdpnet/losses.hpp"

#include "pdpnet/errors.hpp"

namespace pdpnet {

namespace {

void check_pair(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes())
    throw ShapeMismatch(std::string(what) + ": prediction and target shapes differ");
  if (a.dim() < 1) throw ShapeMismatch(std::string(what) + ": expected a batch dimension");
}

}  // namespace

torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  check_pair(pred, target, "dice_loss");
  const auto p = pred.reshape({pred.size(0), -1});
  const auto t = target.to(pred.dtype()).reshape({pred.size(0), -1});
  const auto inter = (p * t).sum(1);
  const auto denom = p.sum(1) + t.sum(1);
  const auto loss = 1.0 - 2.0 * inter / (denom + kDiceEpsilon);
  return torch::where(denom == 0, torch::zeros_like(loss), loss);
}

torch::Tensor log_cosh_dice(const torch::Tensor& pred, const torch::Tensor& target) {
  return torch::log(torch::cosh(dice_loss(pred, target)));
}

torch::Tensor loc_loss(const torch::Tensor& prob_grid, const torch::Tensor& patch_target) {
  return log_cosh_dice(prob_grid, patch_target).mean();
}

SegLoss seg_loss(const std::vector<torch::Tensor>& priors,
                 const std::vector<torch::Tensor>& prior_targets, const torch::Tensor& y_hat,
                 const torch::Tensor& y_crop) {
  if (priors.size() != prior_targets.size())
    throw ShapeMismatch("seg_loss: one target per semantic prior required");
  SegLoss out;
  out.pixel_term = log_cosh_dice(y_hat, y_crop).mean();
  out.total = out.pixel_term;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    out.prior_terms.push_back(log_cosh_dice(priors[i], prior_targets[i]).mean());
    out.total = out.total + out.prior_terms.back();
  }
  return out;
}

}  // namespace pdpnet
