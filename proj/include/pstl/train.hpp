#pragma once

// Pretraining: the double-stream redundancy-reduction baseline and the
// triple-stream variant with spatial and temporal masking, driven by Adam
// under a warmup + cosine-annealing schedule.

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "pstl/augment.hpp"
#include "pstl/common.hpp"
#include "pstl/encoder.hpp"
#include "pstl/loss.hpp"
#include "pstl/masking.hpp"
#include "pstl/skeleton.hpp"
#include "pstl/tensor.hpp"

namespace pstl {

enum class PretrainMode { skeletonbt, pstl };

inline const char* pretrain_mode_name(PretrainMode m) {
  return m == PretrainMode::pstl ? "pstl" : "skeletonbt";
}

inline PretrainMode pretrain_mode_from_name(const std::string& s) {
  if (s == "pstl") return PretrainMode::pstl;
  if (s == "skeletonbt") return PretrainMode::skeletonbt;
  fail(errc::config, "unknown pretrain mode '" + s + "' (expected pstl or skeletonbt)");
}

struct TrainConfig {
  int epochs = 150;
  int batch_size = 128;
  int warmup_epochs = 10;
  double weight_decay = 1e-5;
  double base_lr = 1e-3;
  uint64_t seed = 1;
  PretrainMode mode = PretrainMode::pstl;
  Modality modality = Modality::joint;
  int max_steps = -1;  // optional hard cap across all epochs (< 0: run them all)

  void validate() const {
    require(warmup_epochs >= 0 && epochs > warmup_epochs, errc::config,
            "train: need epochs > warmup_epochs >= 0");
    require(batch_size >= 2, errc::config, "train: batch size must be >= 2");
    require(base_lr > 0.0 && weight_decay >= 0.0, errc::config,
            "train: base_lr must be > 0 and weight_decay >= 0");
  }
};

// Linear ramp 0 -> base over the warmup epochs, then cosine annealing to 0.
inline double lr_at(int epoch, const TrainConfig& cfg) {
  require(epoch >= 0 && epoch < cfg.epochs, errc::invalid_argument,
          "lr_at: epoch out of range");
  if (epoch < cfg.warmup_epochs)
    return cfg.base_lr * static_cast<double>(epoch) / static_cast<double>(cfg.warmup_epochs);
  const double progress = static_cast<double>(epoch - cfg.warmup_epochs) /
                          static_cast<double>(cfg.epochs - cfg.warmup_epochs);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

// ---------------------------------------------------------------------- adam

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  int64_t step = 0;
};

// Bias-corrected moment updates with coupled weight decay (decay enters as an
// additive wd*theta gradient term). Parameters that received no gradient this
// step are left untouched.
inline void adam_step(std::map<std::string, Tensor>& params, AdamState& state, double lr,
                      double weight_decay, const AdamConfig& cfg = {}) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    const auto& g = p.grad();
    if (g.empty()) continue;
    require(g.size() == p.values().size(), errc::shape_mismatch,
            "adam: gradient size mismatch for '" + name + "'");
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(g.size(), 0.0);
    if (v.empty()) v.assign(g.size(), 0.0);
    auto& theta = p.values_mut();
    for (size_t i = 0; i < g.size(); ++i) {
      const double grad = g[i] + weight_decay * theta[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad * grad;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

// ------------------------------------------------------------ batch views

struct PretrainSetup {
  TrainConfig train;
  AugmentParams augment;
  MaskConfig mask;
  LossConfig loss;
  EncoderConfig encoder;
  int bone_root = 0;

  void validate() const {
    train.validate();
    augment.validate();
    loss.validate();
    encoder.validate();
    require(mask.n_mask >= 0 && mask.top_k >= 0, errc::config,
            "mask: counts must be >= 0");
  }
};

// The three views of one batch: anchor (full), spatially masked (fewer
// joints, per-sample restricted adjacency), temporally masked (fewer frames).
// Masks and augmentations are drawn fresh per sample.
struct PstlBatchViews {
  std::vector<SkeletonSequence> anchor;
  std::vector<SkeletonSequence> spatial;
  std::vector<SkeletonSequence> temporal;
  std::vector<std::vector<double>> spatial_adj;
  std::vector<double> full_adj;
  int num_joints = 0;
};

inline PstlBatchViews build_pstl_views(const std::vector<const SkeletonSequence*>& batch,
                                       const GraphTopology& topo, const AugmentParams& augment,
                                       const MaskConfig& mask, Rng& rng) {
  PstlBatchViews views;
  views.full_adj = normalize_adjacency(topo);
  views.num_joints = topo.num_joints;
  const auto probs = csm_probabilities(topo);
  for (size_t i = 0; i < batch.size(); ++i) {
    Rng sample_rng = rng.fork(i);
    views.anchor.push_back(ordinary_augment(*batch[i], topo, augment, sample_rng));

    SkeletonSequence sp = ordinary_augment(*batch[i], topo, augment, sample_rng);
    if (mask.n_mask >= 1) {
      auto plan = sample_spatial_mask(probs, mask.n_mask, sample_rng);
      auto restriction = restrict_topology(topo, plan.masked_joints);
      views.spatial_adj.push_back(normalize_adjacency(restriction.topology));
      views.spatial.push_back(apply_spatial_mask(sp, plan.masked_joints));
    } else {
      views.spatial_adj.push_back(views.full_adj);
      views.spatial.push_back(std::move(sp));
    }

    SkeletonSequence tm = ordinary_augment(*batch[i], topo, augment, sample_rng);
    if (mask.top_k >= 1) {
      auto plan = sample_temporal_mask(tm, mask.top_k, sample_rng);
      views.temporal.push_back(apply_temporal_mask(tm, plan));
    } else {
      views.temporal.push_back(std::move(tm));
    }
  }
  rng.next_u64();  // advance the step stream
  return views;
}

inline std::vector<const SkeletonSequence*> seq_ptrs(const std::vector<SkeletonSequence>& v) {
  std::vector<const SkeletonSequence*> out;
  out.reserve(v.size());
  for (const auto& s : v) out.push_back(&s);
  return out;
}

// Forward pass of the triple stream through the shared encoder + projector.
inline PstlLoss pstl_forward(EncoderState& st, const PstlBatchViews& views, const LossConfig& loss,
                             bool training) {
  const auto b = static_cast<int64_t>(views.anchor.size());
  Tensor anchor_x = sequence_batch_tensor(seq_ptrs(views.anchor));
  Tensor spatial_x = sequence_batch_tensor(seq_ptrs(views.spatial));
  Tensor temporal_x = sequence_batch_tensor(seq_ptrs(views.temporal));
  Tensor full_adj = adjacency_batch(views.full_adj, views.num_joints, b);
  Tensor spatial_adj = adjacency_batch(views.spatial_adj, views.spatial.front().V);

  Tensor z_anchor = project_batch(st, encode_batch(st, anchor_x, full_adj, training), training);
  Tensor z_spatial = project_batch(st, encode_batch(st, spatial_x, spatial_adj, training), training);
  Tensor z_temporal = project_batch(st, encode_batch(st, temporal_x, full_adj, training), training);
  return pstl_loss(z_anchor, z_spatial, z_temporal, loss);
}

// ----------------------------------------------------------------- stepping

struct StepTelemetry {
  int64_t step = 0;
  double lp = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double lr = 0.0;
};

inline void write_telemetry_header(std::ostream& os) { os << "step,L_p,L_1,L_2,lr\n"; }

inline void write_telemetry_row(std::ostream& os, const StepTelemetry& t) {
  os << t.step << ',' << t.lp << ',' << t.l1 << ',' << t.l2 << ',' << t.lr << "\n";
}

// One triple-stream step: build views, forward, backprop, Adam update.
inline StepTelemetry pretrain_step_pstl(const std::vector<const SkeletonSequence*>& batch,
                                        EncoderState& st, AdamState& adam,
                                        const PretrainSetup& setup, const GraphTopology& topo,
                                        double lr, Rng& rng) {
  require(batch.size() >= 2, errc::invalid_argument, "pretrain: batch must hold >= 2 sequences");
  auto views = build_pstl_views(batch, topo, setup.augment, setup.mask, rng);
  auto loss = pstl_forward(st, views, setup.loss, true);
  backward(loss.total);
  adam_step(st.params, adam, lr, setup.train.weight_decay);
  StepTelemetry t;
  t.lp = loss.total.item();
  t.l1 = loss.spatial.item();
  t.l2 = loss.temporal.item();
  t.lr = lr;
  return t;
}

// One double-stream step: two augmented views, no masking.
inline StepTelemetry pretrain_step_skeletonbt(const std::vector<const SkeletonSequence*>& batch,
                                              EncoderState& st, AdamState& adam,
                                              const PretrainSetup& setup,
                                              const GraphTopology& topo, double lr, Rng& rng) {
  require(batch.size() >= 2, errc::invalid_argument, "pretrain: batch must hold >= 2 sequences");
  std::vector<SkeletonSequence> view1, view2;
  for (size_t i = 0; i < batch.size(); ++i) {
    Rng sample_rng = rng.fork(i);
    view1.push_back(ordinary_augment(*batch[i], topo, setup.augment, sample_rng));
    view2.push_back(ordinary_augment(*batch[i], topo, setup.augment, sample_rng));
  }
  rng.next_u64();
  const auto b = static_cast<int64_t>(batch.size());
  Tensor adj = adjacency_batch(normalize_adjacency(topo), topo.num_joints, b);
  Tensor x1 = sequence_batch_tensor(seq_ptrs(view1));
  Tensor x2 = sequence_batch_tensor(seq_ptrs(view2));
  Tensor z1 = project_batch(st, encode_batch(st, x1, adj, true), true);
  Tensor z2 = project_batch(st, encode_batch(st, x2, adj, true), true);
  Tensor loss = bt_loss(cross_correlation(z1, z2, setup.loss), setup.loss.lambda);
  backward(loss);
  adam_step(st.params, adam, lr, setup.train.weight_decay);
  StepTelemetry t;
  t.lp = loss.item();
  t.l1 = loss.item();
  t.l2 = 0.0;
  t.lr = lr;
  return t;
}

// -------------------------------------------------------------- the loop

struct PretrainResult {
  EncoderState state;
  std::vector<StepTelemetry> log;
};

// Full pretraining over the train split of the dataset. The modality stream
// is derived up front; batches drop the epoch remainder so every step sees a
// full batch. Fully deterministic given (dataset, setup.train.seed).
inline PretrainResult pretrain(const Dataset& dataset, const PretrainSetup& setup,
                               std::ostream* telemetry = nullptr) {
  setup.validate();
  dataset.validate();
  Dataset stream = apply_modality(dataset, setup.train.modality, setup.bone_root);

  std::vector<int> train_idx = stream.indices_of(Split::train);
  require(static_cast<int>(train_idx.size()) >= setup.train.batch_size, errc::invalid_argument,
          "pretrain: train split smaller than one batch");

  PretrainResult result;
  Rng root(setup.train.seed);
  result.state = init_encoder(setup.encoder, root.fork(0xA11CE).next_u64());
  AdamState adam;
  Rng shuffle_rng = root.fork(0x5F0F1E);

  if (telemetry) write_telemetry_header(*telemetry);
  const int steps_per_epoch = static_cast<int>(train_idx.size()) / setup.train.batch_size;
  int64_t step = 0;
  for (int epoch = 0; epoch < setup.train.epochs; ++epoch) {
    const double lr = lr_at(epoch, setup.train);
    for (int i = static_cast<int>(train_idx.size()) - 1; i > 0; --i)
      std::swap(train_idx[static_cast<size_t>(i)],
                train_idx[static_cast<size_t>(shuffle_rng.uniform_int(i + 1))]);
    for (int b = 0; b < steps_per_epoch; ++b) {
      if (setup.train.max_steps >= 0 && step >= setup.train.max_steps) break;
      std::vector<const SkeletonSequence*> batch;
      for (int k = 0; k < setup.train.batch_size; ++k)
        batch.push_back(&stream.sequences[static_cast<size_t>(
            train_idx[static_cast<size_t>(b * setup.train.batch_size + k)])]);
      Rng step_rng = root.fork(0x57E9000000ULL + static_cast<uint64_t>(step));
      StepTelemetry t =
          setup.train.mode == PretrainMode::pstl
              ? pretrain_step_pstl(batch, result.state, adam, setup, stream.topology, lr, step_rng)
              : pretrain_step_skeletonbt(batch, result.state, adam, setup, stream.topology, lr,
                                         step_rng);
      t.step = ++step;
      result.log.push_back(t);
      if (telemetry) write_telemetry_row(*telemetry, t);
    }
    if (setup.train.max_steps >= 0 && step >= setup.train.max_steps) break;
  }
  return result;
}

}  // namespace pstl
