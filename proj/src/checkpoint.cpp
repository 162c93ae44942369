#include "pdpnet/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "pdpnet/errors.hpp"

namespace pdpnet {

namespace {

constexpr char kMagic[8] = {'P', 'D', 'P', 'N', 'E', 'T', 'C', 'K'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot write checkpoint " + path.string());
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }
  template <class T>
  void pod(T v) {
    bytes(&v, sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  void tensor(const torch::Tensor& t) {
    pod<std::uint8_t>(t.defined() ? 1 : 0);
    if (!t.defined()) return;
    const auto c = t.detach().cpu().contiguous();
    pod<std::int16_t>(static_cast<std::int16_t>(c.scalar_type()));
    pod<std::uint32_t>(static_cast<std::uint32_t>(c.dim()));
    for (auto d : c.sizes()) pod<std::int64_t>(d);
    bytes(c.data_ptr(), c.nbytes());
  }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw IoError("failed writing checkpoint " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!std::filesystem::exists(path)) throw MissingFile("missing checkpoint " + path.string());
    if (!in_) throw IoError("cannot read checkpoint " + path.string());
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), n);
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw CheckpointError("truncated checkpoint " + path_.string());
  }
  template <class T>
  T pod() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ull << 32)) throw CheckpointError("corrupt string length in " + path_.string());
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  torch::Tensor tensor() {
    if (!pod<std::uint8_t>()) return {};
    const auto type = static_cast<c10::ScalarType>(pod<std::int16_t>());
    const auto dim = pod<std::uint32_t>();
    if (dim > 16) throw CheckpointError("corrupt tensor rank in " + path_.string());
    std::vector<std::int64_t> sizes(dim);
    for (auto& d : sizes) d = pod<std::int64_t>();
    auto t = torch::empty(sizes, torch::TensorOptions().dtype(type));
    bytes(t.data_ptr(), t.nbytes());
    return t;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

const torch::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    Writer w(tmp);
    w.bytes(kMagic, sizeof kMagic);
    w.pod<std::uint32_t>(ckpt.version);
    w.str(ckpt.config_text);
    w.pod<std::int32_t>(ckpt.epoch);
    w.str(ckpt.rng_state);
    w.tensor(ckpt.torch_rng_state);
    w.pod<std::uint64_t>(ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
      w.str(name);
      w.tensor(t);
    }
    w.finish(tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[sizeof kMagic];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw CheckpointError(path.string() + " is not a checkpoint");
  Checkpoint c;
  c.version = r.pod<std::uint32_t>();
  if (c.version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(c.version));
  c.config_text = r.str();
  c.epoch = r.pod<std::int32_t>();
  c.rng_state = r.str();
  c.torch_rng_state = r.tensor();
  const auto n = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    auto name = r.str();
    c.tensors.emplace_back(std::move(name), r.tensor());
  }
  if (!r.at_end()) throw CheckpointError("trailing bytes in " + path.string());
  return c;
}

void append_module_state(std::vector<std::pair<std::string, torch::Tensor>>& out,
                         const torch::nn::Module& module, const std::string& prefix) {
  for (const auto& item : module.named_parameters()) out.emplace_back(prefix + item.key(), item.value());
  for (const auto& item : module.named_buffers()) out.emplace_back(prefix + item.key(), item.value());
}

void load_module_state(const Checkpoint& ckpt, torch::nn::Module& module,
                       const std::string& prefix) {
  torch::NoGradGuard no_grad;
  auto copy = [&](const std::string& name, torch::Tensor& dst) {
    const auto* src = ckpt.find(prefix + name);
    if (!src) throw CheckpointError("checkpoint lacks tensor " + prefix + name);
    if (src->sizes() != dst.sizes())
      throw CheckpointError("shape mismatch for " + prefix + name + ": checkpoint " +
                            c10::str(src->sizes()) + ", model " + c10::str(dst.sizes()));
    dst.copy_(*src);
  };
  for (auto& item : module.named_parameters()) copy(item.key(), item.value());
  for (auto& item : module.named_buffers()) copy(item.key(), item.value());
}

void append_optimizer_state(std::vector<std::pair<std::string, torch::Tensor>>& out,
                            torch::optim::Optimizer& optimizer,
                            const std::vector<torch::Tensor>& params, const std::string& prefix) {
  auto& state = optimizer.state();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = state.find(params[i].unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto base = prefix + std::to_string(i) + ".";
    if (auto* sgd = dynamic_cast<torch::optim::SGDParamState*>(it->second.get())) {
      out.emplace_back(base + "momentum_buffer", sgd->momentum_buffer());
    } else if (auto* adam = dynamic_cast<torch::optim::AdamParamState*>(it->second.get())) {
      out.emplace_back(base + "step", torch::tensor(adam->step(), torch::kInt64));
      out.emplace_back(base + "exp_avg", adam->exp_avg());
      out.emplace_back(base + "exp_avg_sq", adam->exp_avg_sq());
      if (adam->max_exp_avg_sq().defined())
        out.emplace_back(base + "max_exp_avg_sq", adam->max_exp_avg_sq());
    } else {
      throw CheckpointError("unsupported optimizer state type");
    }
  }
}

void load_optimizer_state(const Checkpoint& ckpt, torch::optim::Optimizer& optimizer,
                          const std::vector<torch::Tensor>& params, const std::string& prefix) {
  auto& state = optimizer.state();
  state.clear();
  const bool is_adam = dynamic_cast<torch::optim::Adam*>(&optimizer) != nullptr;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto base = prefix + std::to_string(i) + ".";
    void* key = params[i].unsafeGetTensorImpl();
    if (is_adam) {
      const auto* step = ckpt.find(base + "step");
      if (!step) continue;
      auto s = std::make_unique<torch::optim::AdamParamState>();
      s->step(step->item<std::int64_t>());
      const auto* avg = ckpt.find(base + "exp_avg");
      const auto* avg_sq = ckpt.find(base + "exp_avg_sq");
      if (!avg || !avg_sq) throw CheckpointError("incomplete Adam state for parameter " + base);
      s->exp_avg(avg->clone());
      s->exp_avg_sq(avg_sq->clone());
      if (const auto* m = ckpt.find(base + "max_exp_avg_sq")) s->max_exp_avg_sq(m->clone());
      state[key] = std::move(s);
    } else {
      const auto* buf = ckpt.find(base + "momentum_buffer");
      if (!buf) continue;
      auto s = std::make_unique<torch::optim::SGDParamState>();
      s->momentum_buffer(buf->clone());
      state[key] = std::move(s);
    }
  }
}

}  // namespace pdpnet
