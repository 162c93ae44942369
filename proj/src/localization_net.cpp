#include "pdpnet/localization_net.hpp"

#include <string>

#include "pdpnet/errors.hpp"

namespace pdpnet {

LocalizationNetImpl::LocalizationNetImpl(LocalizationOptions options)
    : options_(std::move(options)) {
  options_.encoder.in_channels = 1;
  encoder_ = register_module("encoder", DenseEncoder(options_.encoder));
  head_ = register_module(
      "head", torch::nn::Conv2d(torch::nn::Conv2dOptions(options_.encoder.channels.back(), 1, 1)));
  kaiming_init(*this);
}

torch::Tensor LocalizationNetImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 1 || images.size(2) != images.size(3) ||
      images.size(2) % stride() != 0)
    throw ShapeMismatch("localization input must be [B,1,S,S] with S divisible by " +
                        std::to_string(stride()) + ", got " + c10::str(images.sizes()));
  auto features = encoder_->forward(images).back();
  return torch::sigmoid(head_->forward(features)).squeeze(1);
}

PatchLabelGrid loc_mask(const Grid<float>& prob_grid) {
  PatchLabelGrid out(prob_grid.rows(), prob_grid.cols(), 0);
  for (int i = 0; i < prob_grid.rows(); ++i)
    for (int j = 0; j < prob_grid.cols(); ++j) out(i, j) = prob_grid(i, j) > 0.5f ? 1 : 0;
  return out;
}

Grid<float> to_grid(const torch::Tensor& prob_grid) {
  auto t = prob_grid.detach().to(torch::kFloat32).contiguous();
  if (t.dim() != 2) throw ShapeMismatch("expected a 2-D probability grid");
  const auto* p = t.data_ptr<float>();
  return Grid<float>(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)),
                     std::vector<float>(p, p + t.numel()));
}

LocalizationOutput localize_from_grid(const Grid<float>& prob_grid, int image_side,
                                      ExtentMode mode) {
  LocalizationOutput out;
  out.prob_grid = prob_grid;
  out.mask_grid = loc_mask(prob_grid);
  const int patch = image_side / prob_grid.rows();
  out.box = derive_bbox(out.mask_grid, patch, patch, image_side, image_side, mode);
  return out;
}

std::vector<LocalizationOutput> localize(LocalizationNet& net, const torch::Tensor& images,
                                         ExtentMode mode) {
  const auto probs = net->forward(images).detach();
  std::vector<LocalizationOutput> out;
  for (std::int64_t b = 0; b < probs.size(0); ++b)
    out.push_back(localize_from_grid(to_grid(probs[b]), static_cast<int>(images.size(2)), mode));
  return out;
}

}  // namespace pdpnet
