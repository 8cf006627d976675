#pragma once

// Compact spatio-temporal GCN encoder and MLP projector.
//
// Each block: joint mixing by the normalized adjacency, a 1x1 channel
// convolution, batch norm, ReLU, a temporal convolution, batch norm, ReLU.
// Global mean pooling over frames and joints erases T and V, so the encoder
// accepts masked (restricted) graphs and shortened sequences unchanged.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pstl/common.hpp"
#include "pstl/manifest.hpp"
#include "pstl/skeleton.hpp"
#include "pstl/tensor.hpp"

namespace pstl {

struct EncoderConfig {
  int input_channels = 3;
  int hidden_channels = 16;
  int num_gcn_blocks = 3;
  int temporal_kernel_size = 5;
  int feature_dim = 32;                     // c_h (256 at paper scale)
  std::array<int, 3> projector_dims = {128, 128, 128};  // final entry is c_z (6144 at paper scale)

  void validate() const {
    require(input_channels >= 1 && hidden_channels >= 1 && num_gcn_blocks >= 1 &&
                feature_dim >= 1,
            errc::config, "encoder: all dimensions must be >= 1");
    require(temporal_kernel_size >= 1 && temporal_kernel_size % 2 == 1, errc::config,
            "encoder: temporal kernel size must be odd and >= 1");
    for (int d : projector_dims)
      require(d >= 1, errc::config, "encoder: projector dims must be >= 1");
  }

  bool operator==(const EncoderConfig&) const = default;
};

struct EncoderState {
  EncoderConfig config;
  std::map<std::string, Tensor> params;
  std::map<std::string, BatchNormStats> bn;
  std::string init_scheme = "fan_in_uniform";
  uint64_t init_seed = 0;
};

// ------------------------------------------------------ adjacency handling

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I. Rows of
// isolated joints reduce to the bare self-loop entry 1.
inline std::vector<double> normalize_adjacency(const GraphTopology& topo) {
  const int v = topo.num_joints;
  std::vector<double> a = topo.adjacency();
  for (int i = 0; i < v; ++i) a[static_cast<size_t>(i) * v + i] += 1.0;
  std::vector<double> dinv(static_cast<size_t>(v));
  for (int i = 0; i < v; ++i) {
    double deg = 0.0;
    for (int j = 0; j < v; ++j) deg += a[static_cast<size_t>(i) * v + j];
    dinv[static_cast<size_t>(i)] = 1.0 / std::sqrt(deg);
  }
  for (int i = 0; i < v; ++i)
    for (int j = 0; j < v; ++j)
      a[static_cast<size_t>(i) * v + j] *= dinv[static_cast<size_t>(i)] * dinv[static_cast<size_t>(j)];
  return a;
}

inline Tensor adjacency_tensor(const std::vector<double>& norm_adj, int v) {
  std::vector<double> copy = norm_adj;
  return Tensor::from({1, v, v}, std::move(copy));
}

// Replicates one normalized adjacency across a batch.
inline Tensor adjacency_batch(const std::vector<double>& norm_adj, int v, int64_t batch) {
  std::vector<double> data;
  data.reserve(static_cast<size_t>(batch) * norm_adj.size());
  for (int64_t b = 0; b < batch; ++b) data.insert(data.end(), norm_adj.begin(), norm_adj.end());
  return Tensor::from({batch, v, v}, std::move(data));
}

// Stacks per-sample normalized adjacencies (all of equal joint count).
inline Tensor adjacency_batch(const std::vector<std::vector<double>>& per_sample, int v) {
  std::vector<double> data;
  data.reserve(per_sample.size() * static_cast<size_t>(v) * v);
  for (const auto& a : per_sample) {
    require(static_cast<int>(a.size()) == v * v, errc::shape_mismatch,
            "adjacency_batch: inconsistent joint counts");
    data.insert(data.end(), a.begin(), a.end());
  }
  return Tensor::from({static_cast<int64_t>(per_sample.size()), v, v}, std::move(data));
}

// [B, C, T, V] leaf tensor from sequences of identical shape.
inline Tensor sequence_batch_tensor(const std::vector<const SkeletonSequence*>& seqs) {
  require(!seqs.empty(), errc::invalid_argument, "sequence batch: empty");
  const int C = seqs[0]->C, T = seqs[0]->T, V = seqs[0]->V;
  std::vector<double> data;
  data.reserve(seqs.size() * static_cast<size_t>(C) * T * V);
  for (const auto* s : seqs) {
    require(s->C == C && s->T == T && s->V == V, errc::shape_mismatch,
            "sequence batch: sequences must share C, T, V");
    data.insert(data.end(), s->data.begin(), s->data.end());
  }
  return Tensor::from({static_cast<int64_t>(seqs.size()), C, T, V}, std::move(data));
}

// -------------------------------------------------------------- init / state

namespace detail {

inline Tensor init_weight(Shape shape, int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> w(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : w) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(w), true);
}

inline void add_bn(EncoderState& st, const std::string& name, int64_t c) {
  st.params.emplace(name + ".gamma", Tensor::filled({c}, 1.0, true));
  st.params.emplace(name + ".beta", Tensor::zeros({c}, true));
  st.bn.emplace(name, BatchNormStats{std::vector<double>(static_cast<size_t>(c), 0.0),
                                     std::vector<double>(static_cast<size_t>(c), 1.0)});
}

}  // namespace detail

inline EncoderState init_encoder(const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate();
  EncoderState st;
  st.config = cfg;
  st.init_seed = seed;
  Rng rng(seed);
  int c_in = cfg.input_channels;
  for (int i = 0; i < cfg.num_gcn_blocks; ++i) {
    const std::string blk = "block" + std::to_string(i);
    const int c_out = cfg.hidden_channels;
    st.params.emplace(blk + ".gcn.w", detail::init_weight({c_out, c_in, 1}, c_in, rng));
    st.params.emplace(blk + ".gcn.b", Tensor::zeros({c_out}, true));
    detail::add_bn(st, blk + ".bn1", c_out);
    st.params.emplace(blk + ".tcn.w",
                      detail::init_weight({c_out, c_out, cfg.temporal_kernel_size},
                                          static_cast<int64_t>(c_out) * cfg.temporal_kernel_size, rng));
    st.params.emplace(blk + ".tcn.b", Tensor::zeros({c_out}, true));
    detail::add_bn(st, blk + ".bn2", c_out);
    c_in = c_out;
  }
  st.params.emplace("feature.w",
                    detail::init_weight({cfg.hidden_channels, cfg.feature_dim}, cfg.hidden_channels, rng));
  st.params.emplace("feature.b", Tensor::zeros({cfg.feature_dim}, true));

  int p_in = cfg.feature_dim;
  for (int i = 0; i < 3; ++i) {
    const std::string fc = "proj.fc" + std::to_string(i + 1);
    const int p_out = cfg.projector_dims[static_cast<size_t>(i)];
    st.params.emplace(fc + ".w", detail::init_weight({p_in, p_out}, p_in, rng));
    st.params.emplace(fc + ".b", Tensor::zeros({p_out}, true));
    if (i < 2) detail::add_bn(st, "proj.bn" + std::to_string(i + 1), p_out);
    p_in = p_out;
  }
  return st;
}

// Deep copy: parameter tensors become fresh leaves (shared nodes would alias
// gradients between the copies).
inline EncoderState clone_encoder(const EncoderState& st) {
  EncoderState out;
  out.config = st.config;
  out.init_scheme = st.init_scheme;
  out.init_seed = st.init_seed;
  for (const auto& [name, p] : st.params) {
    std::vector<double> v = p.values();
    out.params.emplace(name, Tensor::from(p.shape(), std::move(v), true));
  }
  out.bn = st.bn;
  return out;
}

// ------------------------------------------------------------------ forward

// x: [B, C, T, V], adj: [B, V, V] (already normalized). Output: [B, c_h].
inline Tensor encode_batch(EncoderState& st, const Tensor& x, const Tensor& adj, bool training) {
  const auto& cfg = st.config;
  require(x.rank() == 4, errc::shape_mismatch,
          "encode: input must be [B,C,T,V], got " + shape_str(x.shape()));
  require(adj.rank() == 3 && adj.dim(1) == adj.dim(2), errc::shape_mismatch,
          "encode: adjacency must be [B,V,V], got " + shape_str(adj.shape()));
  require(adj.dim(0) == x.dim(0), errc::shape_mismatch,
          "encode: adjacency batch " + shape_str(adj.shape()) + " does not match input " +
              shape_str(x.shape()));
  require(x.dim(3) == adj.dim(1), errc::shape_mismatch,
          "encode: joint count " + std::to_string(x.dim(3)) + " does not match adjacency " +
              shape_str(adj.shape()));
  require(x.dim(1) == cfg.input_channels, errc::shape_mismatch,
          "encode: expected " + std::to_string(cfg.input_channels) + " channels, got " +
              std::to_string(x.dim(1)));

  Tensor h = x;
  for (int i = 0; i < cfg.num_gcn_blocks; ++i) {
    const std::string blk = "block" + std::to_string(i);
    const int64_t B = h.dim(0), C = h.dim(1), T = h.dim(2), V = h.dim(3);
    Tensor mixed = reshape(batched_matmul(reshape(h, {B, C * T, V}), adj), {B, C, T, V});
    h = temporal_conv1d(mixed, st.params.at(blk + ".gcn.w"), st.params.at(blk + ".gcn.b"));
    h = batch_norm(h, st.params.at(blk + ".bn1.gamma"), st.params.at(blk + ".bn1.beta"),
                   st.bn.at(blk + ".bn1"), training);
    h = relu(h);
    h = temporal_conv1d(h, st.params.at(blk + ".tcn.w"), st.params.at(blk + ".tcn.b"));
    h = batch_norm(h, st.params.at(blk + ".bn2.gamma"), st.params.at(blk + ".bn2.beta"),
                   st.bn.at(blk + ".bn2"), training);
    h = relu(h);
  }
  Tensor pooled = mean_pool(h, {2, 3});
  return add_rowvec(matmul(pooled, st.params.at("feature.w")), st.params.at("feature.b"));
}

// h: [B, c_h] -> z: [B, c_z] through the 3-layer MLP (BN + ReLU after the
// first two layers). Training mode needs batch >= 2 for the batch norms.
inline Tensor project_batch(EncoderState& st, const Tensor& h, bool training) {
  require(h.rank() == 2 && h.dim(1) == st.config.feature_dim, errc::shape_mismatch,
          "project: input must be [B," + std::to_string(st.config.feature_dim) + "], got " +
              shape_str(h.shape()));
  Tensor z = h;
  for (int i = 0; i < 3; ++i) {
    const std::string fc = "proj.fc" + std::to_string(i + 1);
    z = add_rowvec(matmul(z, st.params.at(fc + ".w")), st.params.at(fc + ".b"));
    if (i < 2) {
      const std::string bn = "proj.bn" + std::to_string(i + 1);
      z = batch_norm(z, st.params.at(bn + ".gamma"), st.params.at(bn + ".beta"), st.bn.at(bn),
                     training);
      z = relu(z);
    }
  }
  return z;
}

// Eval-mode feature vector for one sequence under the given normalized
// adjacency. Consumes no RNG and never touches running statistics.
inline std::vector<double> encode_single(EncoderState& st, const SkeletonSequence& seq,
                                         const std::vector<double>& norm_adj) {
  std::vector<double> x = seq.data;
  Tensor xt = Tensor::from({1, seq.C, seq.T, seq.V}, std::move(x));
  Tensor h = encode_batch(st, xt, adjacency_tensor(norm_adj, seq.V), false);
  return h.values();
}

// ------------------------------------------------------------- checkpoints

inline void save_checkpoint(const EncoderState& st, const std::string& manifest_path) {
  const std::filesystem::path mpath(manifest_path);
  const std::string payload_name = mpath.stem().string() + ".bin";
  const std::filesystem::path ppath = mpath.parent_path() / payload_name;

  std::ofstream m(mpath);
  require(m.good(), errc::generic, "cannot write checkpoint manifest '" + manifest_path + "'");
  const auto& cfg = st.config;
  m << "format: pstl-checkpoint-v1\n";
  m << "payload: " << payload_name << "\n";
  m << "input_channels: " << cfg.input_channels << "\n";
  m << "hidden_channels: " << cfg.hidden_channels << "\n";
  m << "num_gcn_blocks: " << cfg.num_gcn_blocks << "\n";
  m << "temporal_kernel_size: " << cfg.temporal_kernel_size << "\n";
  m << "feature_dim: " << cfg.feature_dim << "\n";
  m << "projector_dims: " << cfg.projector_dims[0] << ' ' << cfg.projector_dims[1] << ' '
    << cfg.projector_dims[2] << "\n";
  m << "init_scheme: " << st.init_scheme << "\n";
  m << "init_seed: " << st.init_seed << "\n";
  for (const auto& [name, p] : st.params) {
    m << "param: " << name;
    for (int64_t d : p.shape()) m << ' ' << d;
    m << "\n";
  }
  for (const auto& [name, s] : st.bn) m << "stats: " << name << ' ' << s.mean.size() << "\n";
  m.close();
  require(m.good(), errc::generic, "failed writing checkpoint manifest");

  std::ofstream p(ppath, std::ios::binary);
  require(p.good(), errc::generic, "cannot write checkpoint payload '" + ppath.string() + "'");
  auto write_doubles = [&p](const std::vector<double>& v) {
    p.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  for (const auto& [name, t] : st.params) write_doubles(t.values());
  for (const auto& [name, s] : st.bn) {
    write_doubles(s.mean);
    write_doubles(s.var);
  }
  p.close();
  require(p.good(), errc::generic, "failed writing checkpoint payload");
}

inline EncoderState load_checkpoint(const std::string& manifest_path) {
  const auto entries = detail::read_manifest_lines(manifest_path, "pstl-checkpoint-v1");
  EncoderState st;
  std::string payload_name;
  std::vector<std::pair<std::string, Shape>> param_specs;
  std::vector<std::pair<std::string, int64_t>> stat_specs;
  for (const auto& [key, value] : entries) {
    std::istringstream is(value);
    if (key == "payload") {
      payload_name = value;
    } else if (key == "input_channels") {
      is >> st.config.input_channels;
    } else if (key == "hidden_channels") {
      is >> st.config.hidden_channels;
    } else if (key == "num_gcn_blocks") {
      is >> st.config.num_gcn_blocks;
    } else if (key == "temporal_kernel_size") {
      is >> st.config.temporal_kernel_size;
    } else if (key == "feature_dim") {
      is >> st.config.feature_dim;
    } else if (key == "projector_dims") {
      is >> st.config.projector_dims[0] >> st.config.projector_dims[1] >> st.config.projector_dims[2];
    } else if (key == "init_scheme") {
      st.init_scheme = value;
    } else if (key == "init_seed") {
      is >> st.init_seed;
    } else if (key == "param") {
      std::string name;
      is >> name;
      Shape shape;
      int64_t d;
      while (is >> d) shape.push_back(d);
      param_specs.emplace_back(std::move(name), std::move(shape));
    } else if (key == "stats") {
      std::string name;
      int64_t n = 0;
      is >> name >> n;
      stat_specs.emplace_back(std::move(name), n);
    } else {
      fail(errc::format, "unknown checkpoint key '" + key + "'");
    }
    require(!is.fail() || is.eof(), errc::format, "malformed checkpoint value for '" + key + "'");
  }
  st.config.validate();
  require(!payload_name.empty(), errc::format, "checkpoint manifest lacks a payload entry");

  const std::filesystem::path ppath =
      std::filesystem::path(manifest_path).parent_path() / payload_name;
  std::ifstream p(ppath, std::ios::binary);
  require(p.good(), errc::missing_input, "cannot open checkpoint payload '" + ppath.string() + "'");
  p.seekg(0, std::ios::end);
  const int64_t bytes = static_cast<int64_t>(p.tellg());
  p.seekg(0);
  int64_t expect = 0;
  for (const auto& [name, shape] : param_specs) expect += shape_numel(shape);
  for (const auto& [name, n] : stat_specs) expect += 2 * n;
  require(bytes == expect * static_cast<int64_t>(sizeof(double)), errc::shape_mismatch,
          "checkpoint payload holds " + std::to_string(bytes) + " bytes but the manifest requires " +
              std::to_string(expect * static_cast<int64_t>(sizeof(double))));

  auto read_doubles = [&p, &ppath](int64_t n) {
    std::vector<double> v(static_cast<size_t>(n));
    p.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    require(p.good(), errc::shape_mismatch, "checkpoint payload '" + ppath.string() + "' ended early");
    return v;
  };
  for (const auto& [name, shape] : param_specs)
    st.params.emplace(name, Tensor::from(shape, read_doubles(shape_numel(shape)), true));
  for (const auto& [name, n] : stat_specs)
    st.bn.emplace(name, BatchNormStats{read_doubles(n), read_doubles(n)});
  return st;
}

}  // namespace pstl
