#pragma once

// Dual-prior segmentation network: dense pyramid encoder, per-scale weak
// semantic heads, dual prior modules (cross-scale correlation prior and
// semantic prior re-weighting value tokens), a progressive decoder and the
// full-resolution pixel head.

#include <optional>
#include <vector>

#include <torch/torch.h>

#include "pdpnet/dense_encoder.hpp"

namespace pdpnet {

/// Replaces computed priors by constants. Used for the module ablations
/// (constant 0 removes a prior) and for equivalence tests.
struct PriorOverrides {
  std::optional<double> correlation;
  std::optional<double> semantic;
};

struct DpkOptions {
  DenseEncoderOptions encoder;  // widths C_1..C_L, default 16..256
  int dpm_depth = 3;            // 1..4, DPMs at the deepest dpm_depth decoder steps
  bool use_semantic_prior = true;
  bool use_correlation_prior = true;
  double attention_temperature = 1.0;
  int head_channels = 16;

  void validate() const;
  int levels() const { return encoder.levels(); }
  /// Scales s that carry a DPM, deepest first.
  std::vector<int> dpm_scales() const;
  /// Finest decoded level: 2, or 1 when a DPM sits at s = 2.
  int finest_decoded_level() const;
};

/// Cross-scale fusion, correlation prior and prior-weighted values at one scale s.
/// Fused width is 2*C_s split evenly between the two branches; query, key and
/// value widths are C_s.
class DualPriorModuleImpl : public torch::nn::Module {
 public:
  DualPriorModuleImpl(int prev_channels, int channels, double temperature = 1.0);
  DualPriorModuleImpl(int prev_channels, int decoder_channels, int fused_half, int qkv_channels,
                      double temperature);

  /// Cat[strided Conv(M_{s-1}), LProj(F_s)].
  torch::Tensor cross_scale_fuse(const torch::Tensor& m_prev, const torch::Tensor& f);
  /// Small-gain init for the query and key projections so that Q K^T starts
  /// away from logistic saturation.
  void reset_query_key();

  /// sigmoid(Q K^T / temperature) over spatial tokens, [B,T,T].
  torch::Tensor correlation_prior(const torch::Tensor& m_cs);
  /// Values re-weighted by both priors: A V + diag(P) V, reshaped to [B,d,h,w].
  torch::Tensor dual_prior_weight(const torch::Tensor& m_cs, const torch::Tensor& a_cr,
                                  const torch::Tensor& p);

  struct Output {
    torch::Tensor fused;  // F_s^f
    torch::Tensor a_cr;
  };
  Output forward(const torch::Tensor& m_prev, const torch::Tensor& f, const torch::Tensor& p,
                 const PriorOverrides& overrides = {});

  torch::nn::Conv2d down{nullptr};
  torch::nn::Conv2d lproj{nullptr};
  torch::nn::Conv2d query{nullptr};
  torch::nn::Conv2d key{nullptr};
  torch::nn::Conv2d value{nullptr};

 private:
  double temperature_;
};
TORCH_MODULE(DualPriorModule);

/// [B,C,h,w] -> [B,h*w,C], token index r*w + c.
torch::Tensor to_tokens(const torch::Tensor& map);
/// [B,T,C] -> [B,C,h,w].
torch::Tensor from_tokens(const torch::Tensor& tokens, std::int64_t h, std::int64_t w);

/// Everything a forward pass produces, indexed by scale s (entry 0 unused;
/// undefined tensors where a scale does not produce the quantity).
struct DecoderState {
  std::vector<torch::Tensor> m;        // encoder pyramid M_s
  std::vector<torch::Tensor> f;        // decoded F_s
  std::vector<torch::Tensor> p;        // weak semantic priors P_s, s >= 2
  std::vector<torch::Tensor> a_cr;     // correlation priors at DPM scales
  std::vector<torch::Tensor> f_fused;  // DPM outputs at DPM scales
  torch::Tensor y_hat;                 // [B,1,N,N]

  /// Semantic priors in scale order 2..L (finest first).
  std::vector<torch::Tensor> priors() const;
};

class DpkNetImpl : public torch::nn::Module {
 public:
  explicit DpkNetImpl(DpkOptions options = {});

  DecoderState forward(const torch::Tensor& crop, const PriorOverrides& overrides = {});

  std::vector<torch::Tensor> encode(const torch::Tensor& crop);
  torch::Tensor semantic_head(int s, const torch::Tensor& f);
  torch::Tensor decode_step(int s, const torch::Tensor& m_prev, const torch::Tensor& x);
  torch::Tensor final_head(const torch::Tensor& f_finest);
  DualPriorModule dpm(int s) const { return dpms_.at(s); }
  bool has_semantic_heads() const { return options_.use_semantic_prior; }

  const DpkOptions& options() const { return options_; }

 private:
  void check_input(const torch::Tensor& crop) const;

  DpkOptions options_;
  DenseEncoder encoder_{nullptr};
  torch::nn::Sequential base_{nullptr};
  std::vector<torch::nn::Sequential> heads_;  // by s, null below 2
  std::vector<torch::nn::Sequential> decoders_;  // decoders_[s] produces F_{s-1}
  std::vector<DualPriorModule> dpms_;
  torch::nn::Sequential final_{nullptr};
};
TORCH_MODULE(DpkNet);

}  // namespace pdpnet
