#pragma once

// Binary checkpoint: format version, config snapshot, epoch, RNG states and an
// ordered list of named tensors (both networks' parameters and buffers plus
// optimizer state). Writing the same contents always yields the same bytes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace pdpnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_text;
  int epoch = 0;  // last completed epoch
  std::string rng_state;  // std::mt19937_64 stream form
  torch::Tensor torch_rng_state;  // uint8, may be undefined
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor* find(const std::string& name) const;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Parameters then buffers of `module`, names prefixed with `prefix`.
void append_module_state(std::vector<std::pair<std::string, torch::Tensor>>& out,
                         const torch::nn::Module& module, const std::string& prefix);
/// Copies tensors named `prefix + name` into the module. Missing or
/// mis-shaped entries throw CheckpointError.
void load_module_state(const Checkpoint& ckpt, torch::nn::Module& module,
                       const std::string& prefix);

/// Per-parameter optimizer state keyed by the parameter's position in `params`.
void append_optimizer_state(std::vector<std::pair<std::string, torch::Tensor>>& out,
                            torch::optim::Optimizer& optimizer,
                            const std::vector<torch::Tensor>& params, const std::string& prefix);
void load_optimizer_state(const Checkpoint& ckpt, torch::optim::Optimizer& optimizer,
                          const std::vector<torch::Tensor>& params, const std::string& prefix);

}  // namespace pdpnet
