#pragma once

#include <vector>

#include <torch/torch.h>

namespace pdpnet {

/// Shape of a dense-block pyramid encoder. Level 1 is a stride-2 stem; every
/// further level halves the resolution again and runs one dense block followed
/// by a 1x1 transition back to `channels[s]`.
struct DenseEncoderOptions {
  int in_channels = 1;
  std::vector<int> channels{16, 32, 64, 128, 256};
  std::vector<int> block_layers{2, 2, 2, 2};  // levels 2..L
  int growth = 8;

  int levels() const { return static_cast<int>(channels.size()); }
  int total_stride() const { return 1 << levels(); }
  void validate() const;

  /// DenseNet121 block depths and widths, for full-scale runs.
  static DenseEncoderOptions densenet121();
};

/// conv -> batch norm -> ReLU.
torch::nn::Sequential conv_bn_relu(int in, int out, int kernel, int stride = 1);

/// Kaiming-normal weights and zero biases for every convolution in `module`.
void kaiming_init(torch::nn::Module& module);

class DenseBlockImpl : public torch::nn::Module {
 public:
  DenseBlockImpl(int in_channels, int layers, int growth);
  torch::Tensor forward(torch::Tensor x);
  int out_channels() const { return out_channels_; }

 private:
  std::vector<torch::nn::Sequential> layers_;
  int out_channels_;
};
TORCH_MODULE(DenseBlock);

class DenseEncoderImpl : public torch::nn::Module {
 public:
  explicit DenseEncoderImpl(DenseEncoderOptions options);

  /// Feature pyramid, finest first: level s has stride 2^s.
  std::vector<torch::Tensor> forward(torch::Tensor x);
  const DenseEncoderOptions& options() const { return options_; }

 private:
  DenseEncoderOptions options_;
  torch::nn::Sequential stem_{nullptr};
  std::vector<torch::nn::Sequential> levels_;
};
TORCH_MODULE(DenseEncoder);

std::int64_t parameter_count(const torch::nn::Module& module);

}  // namespace pdpnet
