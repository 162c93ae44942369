#include "pdpnet/dense_encoder.hpp"

#include <string>

#include "pdpnet/errors.hpp"

namespace pdpnet {

void DenseEncoderOptions::validate() const {
  if (channels.empty()) throw ConfigInvalid("encoder needs at least one level");
  if (static_cast<int>(block_layers.size()) != levels() - 1)
    throw ConfigInvalid("encoder block_layers must have one entry per level above the stem");
  for (std::size_t i = 1; i < channels.size(); ++i)
    if (channels[i] <= channels[i - 1])
      throw ConfigInvalid("encoder channel widths must strictly increase");
  if (channels.front() <= 0 || growth <= 0 || in_channels <= 0)
    throw ConfigInvalid("encoder widths must be positive");
  for (int l : block_layers)
    if (l < 0) throw ConfigInvalid("dense block depth must be non-negative");
}

DenseEncoderOptions DenseEncoderOptions::densenet121() {
  DenseEncoderOptions o;
  o.channels = {64, 128, 256, 512, 1024};
  o.block_layers = {6, 12, 24, 16};
  o.growth = 32;
  return o;
}

torch::nn::Sequential conv_bn_relu(int in, int out, int kernel, int stride) {
  return torch::nn::Sequential(
      torch::nn::Conv2d(
          torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).bias(false)),
      torch::nn::BatchNorm2d(out), torch::nn::ReLU());
}

void kaiming_init(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& m : module.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<torch::nn::Conv2dImpl>()) {
      torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
      if (conv->bias.defined()) conv->bias.zero_();
    }
  }
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

DenseBlockImpl::DenseBlockImpl(int in_channels, int layers, int growth)
    : out_channels_(in_channels + layers * growth) {
  int c = in_channels;
  for (int i = 0; i < layers; ++i) {
    auto layer = torch::nn::Sequential(
        torch::nn::BatchNorm2d(c), torch::nn::ReLU(),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(c, growth, 3).padding(1).bias(false)));
    layers_.push_back(register_module("layer" + std::to_string(i), layer));
    c += growth;
  }
}

torch::Tensor DenseBlockImpl::forward(torch::Tensor x) {
  for (auto& layer : layers_) x = torch::cat({x, layer->forward(x)}, 1);
  return x;
}

DenseEncoderImpl::DenseEncoderImpl(DenseEncoderOptions options) : options_(std::move(options)) {
  options_.validate();
  const auto& ch = options_.channels;
  stem_ = register_module("stem", conv_bn_relu(options_.in_channels, ch[0], 3, 2));
  for (int s = 1; s < options_.levels(); ++s) {
    DenseBlock block(ch[s], options_.block_layers[s - 1], options_.growth);
    const int block_out = block->out_channels();
    torch::nn::Sequential level(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(ch[s - 1], ch[s], 3).stride(2).padding(1).bias(false)),
        torch::nn::BatchNorm2d(ch[s]), torch::nn::ReLU(), block,
        torch::nn::Conv2d(torch::nn::Conv2dOptions(block_out, ch[s], 1).bias(false)),
        torch::nn::BatchNorm2d(ch[s]), torch::nn::ReLU());
    levels_.push_back(register_module("level" + std::to_string(s + 1), level));
  }
  kaiming_init(*this);
}

std::vector<torch::Tensor> DenseEncoderImpl::forward(torch::Tensor x) {
  std::vector<torch::Tensor> pyramid;
  pyramid.push_back(stem_->forward(x));
  for (auto& level : levels_) pyramid.push_back(level->forward(pyramid.back()));
  return pyramid;
}

}  // namespace pdpnet
