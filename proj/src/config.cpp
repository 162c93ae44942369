#include "pdpnet/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "pdpnet/errors.hpp"

namespace pdpnet {

namespace {

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigInvalid(key + ": not a number: '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigInvalid(key + ": not an integer: '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigInvalid(key + ": not a boolean: '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

struct Field {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

std::vector<Field> train_fields(TrainConfig& c) {
  auto real = [](const std::string& key, double& ref) {
    return Field{key, [&ref, key](const std::string& v) { ref = to_double(key, v); },
                 [&ref] { return fmt(ref); }};
  };
  auto integer = [](const std::string& key, int& ref) {
    return Field{key, [&ref, key](const std::string& v) { ref = static_cast<int>(to_int(key, v)); },
                 [&ref] { return std::to_string(ref); }};
  };
  auto flag = [](const std::string& key, bool& ref) {
    return Field{key, [&ref, key](const std::string& v) { ref = to_bool(key, v); },
                 [&ref] { return std::string(ref ? "true" : "false"); }};
  };
  auto text = [](const std::string& key, std::string& ref) {
    return Field{key, [&ref](const std::string& v) { ref = v; }, [&ref] { return ref; }};
  };
  auto path = [](const std::string& key, std::filesystem::path& ref) {
    return Field{key, [&ref](const std::string& v) { ref = v; }, [&ref] { return ref.string(); }};
  };
  return {
      Field{"seed", [&c](const std::string& v) { c.seed = static_cast<std::uint64_t>(to_int("seed", v)); },
            [&c] { return std::to_string(c.seed); }},
      integer("epochs", c.epochs),
      integer("batch_size", c.batch_size),
      text("optimizer", c.optimizer.kind),
      real("lr", c.optimizer.lr),
      real("momentum", c.optimizer.momentum),
      real("beta1", c.optimizer.beta1),
      real("beta2", c.optimizer.beta2),
      real("weight_decay", c.optimizer.weight_decay),
      integer("input_side", c.input_side),
      integer("crop_side", c.crop_side),
      integer("dpm_depth", c.dpm_depth),
      flag("use_localization", c.ablation.use_localization),
      flag("use_semantic_prior", c.ablation.use_semantic_prior),
      flag("use_correlation_prior", c.ablation.use_correlation_prior),
      flag("augment", c.augment),
      real("aug_scale_min", c.augmentation.scale_min),
      real("aug_scale_max", c.augmentation.scale_max),
      real("aug_translate", c.augmentation.translate),
      real("aug_rotate_deg", c.augmentation.rotate_deg),
      real("attention_temperature", c.attention_temperature),
      text("encoder", c.encoder),
      text("extent_mode", c.extent_mode),
      path("manifest", c.manifest),
      path("checkpoint_dir", c.checkpoint_dir),
      text("train_split", c.train_split),
      text("val_split", c.val_split),
      integer("val_every", c.val_every),
      integer("checkpoint_every", c.checkpoint_every),
      integer("threads", c.threads),
      path("resume", c.resume),
  };
}

std::vector<std::pair<std::string, double>> parse_splits(const std::string& v) {
  std::vector<std::pair<std::string, double>> out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigInvalid("splits: expected name:fraction, got '" + item + "'");
    out.emplace_back(trim(item.substr(0, colon)), to_double("splits", trim(item.substr(colon + 1))));
  }
  if (out.empty()) throw ConfigInvalid("splits: empty");
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigInvalid(m); };
  if (epochs < 0) fail("epochs must be non-negative");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (!(optimizer.lr > 0)) fail("lr must be positive");
  if (optimizer.kind != "sgd" && optimizer.kind != "adam") fail("optimizer must be sgd or adam");
  if (dpm_depth < 1 || dpm_depth > 4) fail("dpm_depth must be in 1..4");
  if (input_side % 32 != 0 || input_side <= 0) fail("input_side must be a positive multiple of 32");
  if (crop_side % 32 != 0 || crop_side <= 0) fail("crop_side must be a positive multiple of 32");
  if (crop_side > input_side) fail("crop_side cannot exceed input_side");
  if (augmentation.scale_min <= 0 || augmentation.scale_max < augmentation.scale_min)
    fail("augmentation scale range invalid");
  if (augmentation.translate < 0 || augmentation.rotate_deg < 0)
    fail("augmentation ranges must be non-negative");
  if (encoder != "compact" && encoder != "densenet121") fail("encoder must be compact or densenet121");
  if (extent_mode != "count" && extent_mode != "span") fail("extent_mode must be count or span");
  if (threads < 1) fail("threads must be at least 1");
  if (attention_temperature <= 0) fail("attention_temperature must be positive");
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.optimizer.lr = 0.01;
  c.optimizer.momentum = 0.9;
  return c;
}

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.batch_size = 32;
  c.epochs = 500;
  c.encoder = "densenet121";
  c.crop_side = 128;
  c.optimizer = OptimizerConfig{};
  return c;
}

LocalizationOptions TrainConfig::localization_options() const {
  LocalizationOptions o;
  if (encoder == "densenet121") o.encoder = DenseEncoderOptions::densenet121();
  return o;
}

DpkOptions TrainConfig::dpk_options() const {
  DpkOptions o;
  if (encoder == "densenet121") o.encoder = DenseEncoderOptions::densenet121();
  o.dpm_depth = dpm_depth;
  o.use_semantic_prior = ablation.use_semantic_prior;
  o.use_correlation_prior = ablation.use_correlation_prior;
  o.attention_temperature = attention_temperature;
  return o;
}

ExtentMode TrainConfig::extent() const {
  return extent_mode == "span" ? ExtentMode::Span : ExtentMode::Count;
}

KeyValues parse_key_values(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    const auto where = origin + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigInvalid(where + "expected key = value");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigInvalid(where + "empty key");
    if (!kv.emplace(key, value).second) throw ConfigInvalid(where + "duplicate key '" + key + "'");
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

TrainConfig train_config_from(const KeyValues& input, bool apply_env) {
  KeyValues kv = input;
  TrainConfig c = TrainConfig::desk();
  if (auto it = kv.find("profile"); it != kv.end()) {
    if (it->second == "paper")
      c = TrainConfig::paper();
    else if (it->second != "desk")
      throw ConfigInvalid("profile must be desk or paper");
    kv.erase(it);
  }
  auto fields = train_fields(c);
  for (const auto& [key, value] : kv) {
    auto f = std::find_if(fields.begin(), fields.end(), [&](const Field& x) { return x.key == key; });
    if (f == fields.end()) throw ConfigInvalid("unknown config key '" + key + "'");
    f->set(value);
  }
  if (apply_env)
    if (const char* env = std::getenv("PDPNET_SEED"))
      c.seed = static_cast<std::uint64_t>(to_int("PDPNET_SEED", env));
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  return train_config_from(read_key_values(path));
}

std::string to_text(const TrainConfig& config) {
  TrainConfig copy = config;
  std::string out;
  for (const auto& f : train_fields(copy)) out += f.key + " = " + f.get() + "\n";
  return out;
}

CohortSpec cohort_spec_from(const KeyValues& kv) {
  CohortSpec s;
  auto& p = s.phantom;
  for (const auto& [key, v] : kv) {
    if (key == "image_side") p.image_side = static_cast<int>(to_int(key, v));
    else if (key == "tumor_count_min") p.tumor_count_min = static_cast<int>(to_int(key, v));
    else if (key == "tumor_count_max") p.tumor_count_max = static_cast<int>(to_int(key, v));
    else if (key == "tumor_radius_min") p.tumor_radius_min = to_double(key, v);
    else if (key == "tumor_radius_max") p.tumor_radius_max = to_double(key, v);
    else if (key == "contrast_min") p.contrast_min = to_double(key, v);
    else if (key == "contrast_max") p.contrast_max = to_double(key, v);
    else if (key == "irregularity") p.irregularity = to_double(key, v);
    else if (key == "noise_sigma") p.noise_sigma = to_double(key, v);
    else if (key == "spacing_y_mm") p.spacing.row_mm = to_double(key, v);
    else if (key == "spacing_x_mm") p.spacing.col_mm = to_double(key, v);
    else if (key == "shift_gamma") p.domain_shift.gamma = to_double(key, v);
    else if (key == "shift_intensity_scale") p.domain_shift.intensity_scale = to_double(key, v);
    else if (key == "shift_blur_sigma") p.domain_shift.blur_sigma = to_double(key, v);
    else if (key == "shift_resample_factor") p.domain_shift.resample_factor = to_double(key, v);
    else if (key == "n_patients") s.n_patients = static_cast<int>(to_int(key, v));
    else if (key == "slices_per_patient") s.slices_per_patient = static_cast<int>(to_int(key, v));
    else if (key == "seed") s.seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "cohort_id") s.cohort_id = static_cast<int>(to_int(key, v));
    else if (key == "splits") s.splits = parse_splits(v);
    else throw ConfigInvalid("unknown phantom params key '" + key + "'");
  }
  p.validate();
  return s;
}

CohortSpec load_cohort_spec(const std::filesystem::path& path) {
  return cohort_spec_from(read_key_values(path));
}

}  // namespace pdpnet
