#pragma once

#include <vector>

#include <torch/torch.h>

#include "pdpnet/dense_encoder.hpp"
#include "pdpnet/ptm_geometry.hpp"

namespace pdpnet {

struct LocalizationOptions {
  DenseEncoderOptions encoder = compact_encoder();

  static DenseEncoderOptions compact_encoder() {
    DenseEncoderOptions o;
    o.channels = {8, 16, 32, 64, 128};
    o.block_layers = {2, 2, 2, 2};
    o.growth = 8;
    return o;
  }
};

/// Coarse patch classifier: dense encoder, 1x1 convolution and a logistic
/// layer, one probability per stride-sized image patch.
class LocalizationNetImpl : public torch::nn::Module {
 public:
  explicit LocalizationNetImpl(LocalizationOptions options = {});

  /// [B,1,S,S] -> [B, S/stride, S/stride] probabilities.
  torch::Tensor forward(const torch::Tensor& images);

  int stride() const { return options_.encoder.total_stride(); }
  const LocalizationOptions& options() const { return options_; }

 private:
  LocalizationOptions options_;
  DenseEncoder encoder_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(LocalizationNet);

struct LocalizationOutput {
  Grid<float> prob_grid;
  PatchLabelGrid mask_grid;
  BoundingBox box;
};

/// Elementwise p > 0.5.
PatchLabelGrid loc_mask(const Grid<float>& prob_grid);

/// Converts one [g,g] slice of a probability tensor to a grid.
Grid<float> to_grid(const torch::Tensor& prob_grid);

/// Localization of every image in the batch. Boxes derive from detached
/// probabilities, so nothing downstream of them sees localization gradients.
std::vector<LocalizationOutput> localize(LocalizationNet& net, const torch::Tensor& images,
                                         ExtentMode mode = ExtentMode::Count);

/// Box from an already computed probability grid.
LocalizationOutput localize_from_grid(const Grid<float>& prob_grid, int image_side,
                                      ExtentMode mode = ExtentMode::Count);

}  // namespace pdpnet
