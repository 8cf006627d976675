#pragma once

// Run configuration: every tunable under namespaced keys, strict parsing
// (unknown keys rejected), a canonical echo for reproducibility, and an
// FNV-1a hash that names run directories.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "pstl/augment.hpp"
#include "pstl/common.hpp"
#include "pstl/encoder.hpp"
#include "pstl/eval.hpp"
#include "pstl/loss.hpp"
#include "pstl/masking.hpp"
#include "pstl/skeleton.hpp"
#include "pstl/train.hpp"

namespace pstl {

struct RunConfig {
  uint64_t seed = 1;
  SyntheticConfig data;
  int bone_root = 0;
  AugmentParams augment;
  MaskConfig mask;
  EncoderConfig encoder;
  LossConfig loss;
  TrainConfig train;
  EvalConfig eval;

  // Desk-scale profile: coherent defaults for the packaged 10-joint synthetic
  // dataset. Paper-scale values (25 joints, 9 masked, 256/6144 dims, 150
  // epochs, batch 128) stay reachable through a config file.
  static RunConfig desk_default() {
    RunConfig cfg;
    cfg.mask.n_mask = 3;  // scaled to V=10; 9 assumes the 25-joint layout
    cfg.mask.top_k = 10;
    cfg.train.epochs = 25;
    cfg.train.batch_size = 16;
    cfg.train.warmup_epochs = 2;
    cfg.train.base_lr = 1e-3;
    return cfg;
  }

  void validate() const {
    augment.validate();
    encoder.validate();
    loss.validate();
    train.validate();
    eval.validate();
  }

  void apply(const std::string& key, const std::string& value);
  std::string canonical_text() const;
  uint64_t hash() const;
};

namespace detail {

inline int parse_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const int x = std::stoi(v, &pos);
    require(pos == v.size(), errc::config, "config: trailing characters in '" + key + "'");
    return x;
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail(errc::config, "config: '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline uint64_t parse_u64(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const uint64_t x = std::stoull(v, &pos);
    require(pos == v.size(), errc::config, "config: trailing characters in '" + key + "'");
    return x;
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail(errc::config, "config: '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

inline double parse_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    require(pos == v.size(), errc::config, "config: trailing characters in '" + key + "'");
    return x;
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail(errc::config, "config: '" + key + "' expects a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  fail(errc::config, "config: '" + key + "' expects a boolean, got '" + v + "'");
}

inline std::string fmt_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace detail

inline void RunConfig::apply(const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  using detail::parse_u64;
  if (key == "seed") seed = parse_u64(value, key);
  else if (key == "data.topology") data.topology = value;
  else if (key == "data.num_classes") data.num_classes = parse_int(value, key);
  else if (key == "data.train_per_class") data.train_per_class = parse_int(value, key);
  else if (key == "data.test_per_class") data.test_per_class = parse_int(value, key);
  else if (key == "data.frames") data.frames = parse_int(value, key);
  else if (key == "data.noise") data.noise = parse_double(value, key);
  else if (key == "data.num_subjects") data.num_subjects = parse_int(value, key);
  else if (key == "data.bone_root") bone_root = parse_int(value, key);
  else if (key == "augment.shear_amplitude") augment.shear_amplitude = parse_double(value, key);
  else if (key == "augment.crop_pad_ratio") augment.crop_pad_ratio = parse_double(value, key);
  else if (key == "augment.rotate_main_max") augment.rotate_main_max = parse_double(value, key);
  else if (key == "augment.rotate_minor_max") augment.rotate_minor_max = parse_double(value, key);
  else if (key == "augment.flip_probability") augment.flip_probability = parse_double(value, key);
  else if (key == "augment.spatial_transforms") augment.spatial_transforms = parse_bool(value, key);
  else if (key == "mask.n_mask") mask.n_mask = parse_int(value, key);
  else if (key == "mask.K") mask.top_k = parse_int(value, key);
  else if (key == "encoder.input_channels") encoder.input_channels = parse_int(value, key);
  else if (key == "encoder.hidden_channels") encoder.hidden_channels = parse_int(value, key);
  else if (key == "encoder.num_gcn_blocks") encoder.num_gcn_blocks = parse_int(value, key);
  else if (key == "encoder.temporal_kernel_size") encoder.temporal_kernel_size = parse_int(value, key);
  else if (key == "encoder.feature_dim") encoder.feature_dim = parse_int(value, key);
  else if (key == "encoder.projector_dims") {
    std::istringstream is(value);
    int a = 0, b = 0, c = 0;
    is >> a >> b >> c;
    require(!is.fail(), errc::config, "config: encoder.projector_dims expects three integers");
    encoder.projector_dims = {a, b, c};
  } else if (key == "loss.lambda") loss.lambda = parse_double(value, key);
  else if (key == "loss.center_embeddings") loss.center_embeddings = parse_bool(value, key);
  else if (key == "loss.epsilon") loss.epsilon = parse_double(value, key);
  else if (key == "train.mode") train.mode = pretrain_mode_from_name(value);
  else if (key == "train.modality") train.modality = modality_from_name(value);
  else if (key == "train.epochs") train.epochs = parse_int(value, key);
  else if (key == "train.batch_size") train.batch_size = parse_int(value, key);
  else if (key == "train.warmup_epochs") train.warmup_epochs = parse_int(value, key);
  else if (key == "train.weight_decay") train.weight_decay = parse_double(value, key);
  else if (key == "train.base_lr") train.base_lr = parse_double(value, key);
  else if (key == "train.max_steps") train.max_steps = parse_int(value, key);
  else if (key == "eval.linear_lr") eval.linear_lr = parse_double(value, key);
  else if (key == "eval.finetune_lr") eval.finetune_lr = parse_double(value, key);
  else if (key == "eval.classifier_epochs") eval.classifier_epochs = parse_int(value, key);
  else if (key == "eval.finetune_epochs") eval.finetune_epochs = parse_int(value, key);
  else if (key == "eval.batch_size") eval.batch_size = parse_int(value, key);
  else if (key == "eval.weight_decay") eval.weight_decay = parse_double(value, key);
  else fail(errc::config, "config: unknown key '" + key + "'");
}

inline std::string RunConfig::canonical_text() const {
  using detail::fmt_double;
  std::ostringstream os;
  os << "seed = " << seed << "\n";
  os << "data.topology = " << data.topology << "\n";
  os << "data.num_classes = " << data.num_classes << "\n";
  os << "data.train_per_class = " << data.train_per_class << "\n";
  os << "data.test_per_class = " << data.test_per_class << "\n";
  os << "data.frames = " << data.frames << "\n";
  os << "data.noise = " << fmt_double(data.noise) << "\n";
  os << "data.num_subjects = " << data.num_subjects << "\n";
  os << "data.bone_root = " << bone_root << "\n";
  os << "augment.shear_amplitude = " << fmt_double(augment.shear_amplitude) << "\n";
  os << "augment.crop_pad_ratio = " << fmt_double(augment.crop_pad_ratio) << "\n";
  os << "augment.rotate_main_max = " << fmt_double(augment.rotate_main_max) << "\n";
  os << "augment.rotate_minor_max = " << fmt_double(augment.rotate_minor_max) << "\n";
  os << "augment.flip_probability = " << fmt_double(augment.flip_probability) << "\n";
  os << "augment.spatial_transforms = " << (augment.spatial_transforms ? "true" : "false") << "\n";
  os << "mask.n_mask = " << mask.n_mask << "\n";
  os << "mask.K = " << mask.top_k << "\n";
  os << "encoder.input_channels = " << encoder.input_channels << "\n";
  os << "encoder.hidden_channels = " << encoder.hidden_channels << "\n";
  os << "encoder.num_gcn_blocks = " << encoder.num_gcn_blocks << "\n";
  os << "encoder.temporal_kernel_size = " << encoder.temporal_kernel_size << "\n";
  os << "encoder.feature_dim = " << encoder.feature_dim << "\n";
  os << "encoder.projector_dims = " << encoder.projector_dims[0] << ' ' << encoder.projector_dims[1]
     << ' ' << encoder.projector_dims[2] << "\n";
  os << "loss.lambda = " << fmt_double(loss.lambda) << "\n";
  os << "loss.center_embeddings = " << (loss.center_embeddings ? "true" : "false") << "\n";
  os << "loss.epsilon = " << fmt_double(loss.epsilon) << "\n";
  os << "train.mode = " << pretrain_mode_name(train.mode) << "\n";
  os << "train.modality = " << modality_name(train.modality) << "\n";
  os << "train.epochs = " << train.epochs << "\n";
  os << "train.batch_size = " << train.batch_size << "\n";
  os << "train.warmup_epochs = " << train.warmup_epochs << "\n";
  os << "train.weight_decay = " << fmt_double(train.weight_decay) << "\n";
  os << "train.base_lr = " << fmt_double(train.base_lr) << "\n";
  os << "train.max_steps = " << train.max_steps << "\n";
  os << "eval.linear_lr = " << fmt_double(eval.linear_lr) << "\n";
  os << "eval.finetune_lr = " << fmt_double(eval.finetune_lr) << "\n";
  os << "eval.classifier_epochs = " << eval.classifier_epochs << "\n";
  os << "eval.finetune_epochs = " << eval.finetune_epochs << "\n";
  os << "eval.batch_size = " << eval.batch_size << "\n";
  os << "eval.weight_decay = " << fmt_double(eval.weight_decay) << "\n";
  return os.str();
}

inline uint64_t RunConfig::hash() const {
  const std::string text = canonical_text();
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Parses "key = value" lines over the given base config; '#' starts a
// comment line, blank lines are skipped, unknown keys are fatal.
inline RunConfig load_run_config(const std::string& path, RunConfig base = RunConfig::desk_default()) {
  std::ifstream in(path);
  require(in.good(), errc::missing_input, "cannot open config '" + path + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, errc::config,
            "config " + path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!key.empty() && !value.empty(), errc::config,
            "config " + path + ":" + std::to_string(line_no) + ": empty key or value");
    base.apply(key, value);
  }
  return base;
}

// Wires the flat run config into the pretraining setup.
inline PretrainSetup make_pretrain_setup(const RunConfig& cfg) {
  PretrainSetup setup;
  setup.train = cfg.train;
  setup.train.seed = cfg.seed;
  setup.augment = cfg.augment;
  setup.mask = cfg.mask;
  setup.loss = cfg.loss;
  setup.encoder = cfg.encoder;
  setup.bone_root = cfg.bone_root;
  return setup;
}

inline EvalConfig make_eval_config(const RunConfig& cfg) {
  EvalConfig ec = cfg.eval;
  ec.seed = cfg.seed;
  ec.modality = cfg.train.modality;
  ec.bone_root = cfg.bone_root;
  return ec;
}

}  // namespace pstl
