#include "pdpnet/dpknet.hpp"

#include <string>

#include "pdpnet/errors.hpp"

namespace pdpnet {

namespace F = torch::nn::functional;

namespace {

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

torch::nn::Upsample upsample2_module() {
  return torch::nn::Upsample(torch::nn::UpsampleOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kNearest));
}

torch::nn::Conv2d conv(int in, int out, int kernel, int stride = 1) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2));
}

}  // namespace

void DpkOptions::validate() const {
  encoder.validate();
  if (levels() < 2) throw ConfigInvalid("DPKNet needs at least two encoder levels");
  if (dpm_depth < 1 || dpm_depth > 4) throw ConfigInvalid("dpm_depth must be in 1..4");
  if (dpm_depth > levels() - 1)
    throw ConfigInvalid("dpm_depth " + std::to_string(dpm_depth) + " exceeds the " +
                        std::to_string(levels() - 1) + " decoder steps of a " +
                        std::to_string(levels()) + "-level encoder");
  if (attention_temperature <= 0) throw ConfigInvalid("attention temperature must be positive");
  if (head_channels <= 0) throw ConfigInvalid("head_channels must be positive");
}

std::vector<int> DpkOptions::dpm_scales() const {
  std::vector<int> out;
  for (int s = levels(); s >= 2 && static_cast<int>(out.size()) < dpm_depth; --s) out.push_back(s);
  return out;
}

int DpkOptions::finest_decoded_level() const {
  const auto scales = dpm_scales();
  return (!scales.empty() && scales.back() == 2) ? 1 : 2;
}

torch::Tensor to_tokens(const torch::Tensor& map) { return map.flatten(2).transpose(1, 2); }

torch::Tensor from_tokens(const torch::Tensor& tokens, std::int64_t h, std::int64_t w) {
  return tokens.transpose(1, 2).reshape({tokens.size(0), tokens.size(2), h, w});
}

DualPriorModuleImpl::DualPriorModuleImpl(int prev_channels, int channels, double temperature)
    : DualPriorModuleImpl(prev_channels, channels, channels, channels, temperature) {}

DualPriorModuleImpl::DualPriorModuleImpl(int prev_channels, int decoder_channels, int fused_half,
                                         int qkv_channels, double temperature)
    : temperature_(temperature) {
  down = register_module("down", conv(prev_channels, fused_half, 3, 2));
  lproj = register_module("lproj", conv(decoder_channels, fused_half, 1));
  query = register_module("query", conv(2 * fused_half, qkv_channels, 1));
  key = register_module("key", conv(2 * fused_half, qkv_channels, 1));
  value = register_module("value", conv(2 * fused_half, qkv_channels, 1));
}

void DualPriorModuleImpl::reset_query_key() {
  torch::NoGradGuard guard;
  for (auto* c : {&query, &key}) {
    const double fan_in = static_cast<double>((*c)->weight.size(1));
    (*c)->weight.normal_(0.0, 1.0 / fan_in);
    if ((*c)->bias.defined()) (*c)->bias.zero_();
  }
}

torch::Tensor DualPriorModuleImpl::cross_scale_fuse(const torch::Tensor& m_prev,
                                                    const torch::Tensor& f) {
  if (m_prev.dim() != 4 || f.dim() != 4 || m_prev.size(2) != 2 * f.size(2) ||
      m_prev.size(3) != 2 * f.size(3))
    throw ShapeMismatch("cross_scale_fuse: lower level must be twice the side of F_s, got " +
                        c10::str(m_prev.sizes()) + " and " + c10::str(f.sizes()));
  return torch::cat({down->forward(m_prev), lproj->forward(f)}, 1);
}

torch::Tensor DualPriorModuleImpl::correlation_prior(const torch::Tensor& m_cs) {
  const auto q = to_tokens(query->forward(m_cs));
  const auto k = to_tokens(key->forward(m_cs));
  return torch::sigmoid(torch::bmm(q, k.transpose(1, 2)) / temperature_);
}

torch::Tensor DualPriorModuleImpl::dual_prior_weight(const torch::Tensor& m_cs,
                                                     const torch::Tensor& a_cr,
                                                     const torch::Tensor& p) {
  const auto h = m_cs.size(2), w = m_cs.size(3);
  if (p.dim() != 4 || p.size(1) != 1 || p.size(2) != h || p.size(3) != w)
    throw ShapeMismatch("dual_prior_weight: semantic prior must be [B,1,h,w] matching M_cs, got " +
                        c10::str(p.sizes()));
  if (a_cr.dim() != 3 || a_cr.size(1) != h * w || a_cr.size(2) != h * w)
    throw ShapeMismatch("dual_prior_weight: correlation prior must be [B,T,T]");
  const auto v = to_tokens(value->forward(m_cs));  // [B,T,d]
  const auto p_tokens = p.flatten(2).transpose(1, 2);  // [B,T,1]
  return from_tokens(torch::bmm(a_cr, v) + p_tokens * v, h, w);
}

DualPriorModuleImpl::Output DualPriorModuleImpl::forward(const torch::Tensor& m_prev,
                                                         const torch::Tensor& f,
                                                         const torch::Tensor& p,
                                                         const PriorOverrides& overrides) {
  const auto m_cs = cross_scale_fuse(m_prev, f);
  Output out;
  if (overrides.correlation) {
    const auto t = m_cs.size(2) * m_cs.size(3);
    out.a_cr = torch::full({m_cs.size(0), t, t}, *overrides.correlation, m_cs.options());
  } else {
    out.a_cr = correlation_prior(m_cs);
  }
  const auto prior = overrides.semantic ? torch::full_like(p, *overrides.semantic) : p;
  out.fused = dual_prior_weight(m_cs, out.a_cr, prior);
  return out;
}

std::vector<torch::Tensor> DecoderState::priors() const {
  std::vector<torch::Tensor> out;
  for (std::size_t s = 2; s < p.size(); ++s)
    if (p[s].defined()) out.push_back(p[s]);
  return out;
}

DpkNetImpl::DpkNetImpl(DpkOptions options) : options_(std::move(options)) {
  options_.encoder.in_channels = 1;
  options_.validate();
  const int levels = options_.levels();
  const auto& ch = options_.encoder.channels;
  auto width = [&](int s) { return ch[s - 1]; };

  encoder_ = register_module("encoder", DenseEncoder(options_.encoder));
  base_ = register_module("base", conv_bn_relu(width(levels), width(levels), 3));

  heads_.assign(levels + 1, torch::nn::Sequential(nullptr));
  if (options_.use_semantic_prior)
    for (int s = 2; s <= levels; ++s)
      heads_[s] = register_module("head" + std::to_string(s),
                                  torch::nn::Sequential(conv(width(s), 1, 3),
                                                        torch::nn::BatchNorm2d(1),
                                                        torch::nn::Sigmoid()));

  const int finest = options_.finest_decoded_level();
  decoders_.assign(levels + 1, torch::nn::Sequential(nullptr));
  for (int s = levels; s > finest; --s)
    decoders_[s] = register_module("decode" + std::to_string(s),
                                   conv_bn_relu(width(s - 1) + width(s), width(s - 1), 3));

  dpms_.assign(levels + 1, DualPriorModule(nullptr));
  for (int s : options_.dpm_scales())
    dpms_[s] = register_module("dpm" + std::to_string(s),
                               DualPriorModule(width(s - 1), width(s),
                                               options_.attention_temperature));

  final_ = torch::nn::Sequential();
  final_->push_back(upsample2_module());
  final_->push_back(torch::nn::Conv2d(
      torch::nn::Conv2dOptions(width(finest), options_.head_channels, 3).padding(1).bias(false)));
  final_->push_back(torch::nn::BatchNorm2d(options_.head_channels));
  final_->push_back(torch::nn::ReLU());
  if (finest == 2) final_->push_back(upsample2_module());
  final_->push_back(conv(options_.head_channels, 1, 3));
  final_->push_back(torch::nn::Sigmoid());
  final_ = register_module("final", final_);

  kaiming_init(*this);
  for (int s : options_.dpm_scales()) dpms_[s]->reset_query_key();
}

void DpkNetImpl::check_input(const torch::Tensor& crop) const {
  const int stride = options_.encoder.total_stride();
  if (crop.dim() != 4 || crop.size(1) != 1 || crop.size(2) != crop.size(3) ||
      crop.size(2) % stride != 0)
    throw ShapeMismatch("DPKNet input must be [B,1,N,N] with N divisible by " +
                        std::to_string(stride) + ", got " + c10::str(crop.sizes()));
}

std::vector<torch::Tensor> DpkNetImpl::encode(const torch::Tensor& crop) {
  check_input(crop);
  return encoder_->forward(crop);
}

torch::Tensor DpkNetImpl::semantic_head(int s, const torch::Tensor& f) {
  if (s < 2 || s > options_.levels() || !heads_[s])
    throw ShapeMismatch("no semantic head at scale " + std::to_string(s));
  return heads_[s]->forward(f);
}

torch::Tensor DpkNetImpl::decode_step(int s, const torch::Tensor& m_prev, const torch::Tensor& x) {
  if (s < 2 || s > options_.levels() || !decoders_[s])
    throw ShapeMismatch("no decoder step at scale " + std::to_string(s));
  if (m_prev.size(2) != 2 * x.size(2) || m_prev.size(3) != 2 * x.size(3))
    throw ShapeMismatch("decode_step: skip features must be twice the side of the decoded map");
  return decoders_[s]->forward(torch::cat({m_prev, upsample2(x)}, 1));
}

torch::Tensor DpkNetImpl::final_head(const torch::Tensor& f_finest) {
  return final_->forward(f_finest);
}

DecoderState DpkNetImpl::forward(const torch::Tensor& crop, const PriorOverrides& overrides) {
  const int levels = options_.levels();
  DecoderState st;
  st.m.resize(levels + 1);
  st.f.resize(levels + 1);
  st.p.resize(levels + 1);
  st.a_cr.resize(levels + 1);
  st.f_fused.resize(levels + 1);

  const auto pyramid = encode(crop);
  for (int s = 1; s <= levels; ++s) st.m[s] = pyramid[s - 1];

  PriorOverrides effective = overrides;
  if (!options_.use_correlation_prior && !effective.correlation) effective.correlation = 0.0;
  if (!options_.use_semantic_prior && !effective.semantic) effective.semantic = 0.0;

  const int finest = options_.finest_decoded_level();
  st.f[levels] = base_->forward(st.m[levels]);
  for (int s = levels; s >= 2; --s) {
    if (heads_[s]) st.p[s] = semantic_head(s, st.f[s]);
    if (s <= finest) break;
    torch::Tensor x = st.f[s];
    if (dpms_[s]) {
      const auto p = st.p[s].defined()
                         ? st.p[s]
                         : torch::zeros({x.size(0), 1, x.size(2), x.size(3)}, x.options());
      auto out = dpms_[s]->forward(st.m[s - 1], st.f[s], p, effective);
      st.a_cr[s] = out.a_cr;
      st.f_fused[s] = out.fused;
      x = out.fused;
    }
    st.f[s - 1] = decode_step(s, st.m[s - 1], x);
  }
  st.y_hat = final_head(st.f[finest]);
  return st;
}

}  // namespace pdpnet
