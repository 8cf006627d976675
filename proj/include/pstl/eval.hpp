#pragma once

// Downstream protocols: linear probe on frozen features, partial-body
// evaluation with joints or whole parts removed at test time, full
// finetuning, the label-limited semi-supervised variant, and score fusion
// across modality streams.

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "pstl/common.hpp"
#include "pstl/encoder.hpp"
#include "pstl/masking.hpp"
#include "pstl/skeleton.hpp"
#include "pstl/train.hpp"

namespace pstl {

struct EvalConfig {
  double linear_lr = 0.01;
  double finetune_lr = 0.005;
  int classifier_epochs = 50;
  int finetune_epochs = 10;
  int batch_size = 32;
  double weight_decay = 1e-5;
  uint64_t seed = 1;
  Modality modality = Modality::joint;
  int bone_root = 0;

  void validate() const {
    require(linear_lr > 0.0 && finetune_lr > 0.0, errc::config, "eval: learning rates must be > 0");
    require(classifier_epochs >= 1 && finetune_epochs >= 0, errc::config,
            "eval: epoch counts out of range");
    require(batch_size >= 2, errc::config, "eval: batch size must be >= 2");
  }
};

enum class PartialMode { joints, parts };

struct EvalReport {
  std::string protocol;
  double top1 = 0.0;
  std::vector<double> per_class_acc;
  std::vector<int> per_class_count;
  int masked_joints = 0;
  int masked_parts = 0;
  uint64_t seed = 0;
  std::vector<int> test_labels;
  std::vector<int> predictions;
  std::vector<std::vector<double>> test_logits;
};

namespace detail {

// Eval-mode features for the given sequences under one shared adjacency.
// Chunked for locality; batch composition cannot change per-sample results.
inline std::vector<std::vector<double>> extract_features(EncoderState& st,
                                                         const Dataset& data,
                                                         const std::vector<int>& indices,
                                                         const std::vector<double>& norm_adj) {
  std::vector<std::vector<double>> features;
  features.reserve(indices.size());
  const int chunk = 64;
  const int ch = st.config.feature_dim;
  for (size_t pos = 0; pos < indices.size(); pos += chunk) {
    std::vector<const SkeletonSequence*> batch;
    for (size_t i = pos; i < std::min(indices.size(), pos + chunk); ++i)
      batch.push_back(&data.sequences[static_cast<size_t>(indices[i])]);
    Tensor x = sequence_batch_tensor(batch);
    Tensor adj = adjacency_batch(norm_adj, batch.front()->V, static_cast<int64_t>(batch.size()));
    Tensor h = encode_batch(st, x, adj, false);
    for (size_t b = 0; b < batch.size(); ++b)
      features.emplace_back(h.values().begin() + static_cast<int64_t>(b) * ch,
                            h.values().begin() + static_cast<int64_t>(b + 1) * ch);
  }
  return features;
}

struct LinearHead {
  Tensor w;  // [c_h, K]
  Tensor b;  // [K]
};

inline LinearHead init_head(int in_dim, int num_classes, Rng& rng) {
  LinearHead head;
  head.w = detail::init_weight({in_dim, num_classes}, in_dim, rng);
  head.b = Tensor::zeros({num_classes}, true);
  return head;
}

inline std::vector<double> head_logits(const std::vector<double>& feature, const LinearHead& head) {
  const int64_t in = head.w.dim(0), k = head.w.dim(1);
  std::vector<double> out(static_cast<size_t>(k));
  for (int64_t j = 0; j < k; ++j) {
    double acc = head.b.values()[static_cast<size_t>(j)];
    for (int64_t i = 0; i < in; ++i)
      acc += feature[static_cast<size_t>(i)] * head.w.values()[static_cast<size_t>(i * k + j)];
    out[static_cast<size_t>(j)] = acc;
  }
  return out;
}

// Cross-entropy training of an affine classifier on fixed features with Adam
// under the cosine schedule.
inline LinearHead train_linear_head(const std::vector<std::vector<double>>& features,
                                    const std::vector<int>& labels, int num_classes, double lr,
                                    int epochs, int batch_size, double weight_decay, Rng rng) {
  require(!features.empty() && features.size() == labels.size(), errc::invalid_argument,
          "classifier: feature/label mismatch");
  const int in_dim = static_cast<int>(features.front().size());
  Rng init_rng = rng.fork(1);
  LinearHead head = init_head(in_dim, num_classes, init_rng);
  std::map<std::string, Tensor> params;
  params.emplace("head.w", head.w);
  params.emplace("head.b", head.b);
  AdamState adam;
  Rng shuffle = rng.fork(2);

  TrainConfig sched;
  sched.epochs = epochs;
  sched.warmup_epochs = 0;
  sched.base_lr = lr;
  sched.batch_size = 2;  // unused by lr_at; satisfies validation
  const int n = static_cast<int>(features.size());
  const int bs = std::min(batch_size, n);
  std::vector<int> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double step_lr = lr_at(epoch, sched);
    for (int i = n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(shuffle.uniform_int(i + 1))]);
    for (int start = 0; start + bs <= n; start += bs) {
      std::vector<double> xdata;
      std::vector<int> y;
      for (int k = 0; k < bs; ++k) {
        const int idx = order[static_cast<size_t>(start + k)];
        xdata.insert(xdata.end(), features[static_cast<size_t>(idx)].begin(),
                     features[static_cast<size_t>(idx)].end());
        y.push_back(labels[static_cast<size_t>(idx)]);
      }
      Tensor x = Tensor::from({bs, in_dim}, std::move(xdata));
      Tensor loss = softmax_cross_entropy(add_rowvec(matmul(x, head.w), head.b), y);
      backward(loss);
      adam_step(params, adam, step_lr, weight_decay);
    }
  }
  return head;
}

inline void finalize_report(EvalReport& report, int num_classes) {
  report.per_class_acc.assign(static_cast<size_t>(num_classes), 0.0);
  report.per_class_count.assign(static_cast<size_t>(num_classes), 0);
  int correct = 0;
  for (size_t i = 0; i < report.test_labels.size(); ++i) {
    const int y = report.test_labels[i];
    ++report.per_class_count[static_cast<size_t>(y)];
    if (report.predictions[i] == y) {
      ++report.per_class_acc[static_cast<size_t>(y)];
      ++correct;
    }
  }
  for (int k = 0; k < num_classes; ++k)
    if (report.per_class_count[static_cast<size_t>(k)] > 0)
      report.per_class_acc[static_cast<size_t>(k)] /= report.per_class_count[static_cast<size_t>(k)];
  report.top1 = report.test_labels.empty()
                    ? 0.0
                    : static_cast<double>(correct) / static_cast<double>(report.test_labels.size());
}

}  // namespace detail

// Linear probe with optional test-time masking. The classifier always trains
// on unmasked features; masking perturbs only the evaluation inputs, with a
// fresh mask per test sequence. n = 0 reduces exactly to the plain probe.
inline EvalReport partial_body_eval(EncoderState& st, const Dataset& dataset, PartialMode mode,
                                    int n, const EvalConfig& cfg) {
  cfg.validate();
  dataset.validate();
  const int v = dataset.topology.num_joints;
  if (mode == PartialMode::joints)
    require(n >= 0 && n <= v - 2, errc::invalid_argument,
            "partial eval: masked joint count must lie in [0, V-2]");
  else
    require(n >= 0 && n <= GraphTopology::kNumParts - 1, errc::invalid_argument,
            "partial eval: masked part count must lie in [0, 4]");

  Dataset data = apply_modality(dataset, cfg.modality, cfg.bone_root);
  const auto train_idx = data.indices_of(Split::train);
  const auto test_idx = data.indices_of(Split::test);
  require(!train_idx.empty() && !test_idx.empty(), errc::invalid_argument,
          "partial eval: need both train and test splits");
  const auto full_adj = normalize_adjacency(data.topology);

  Rng root(cfg.seed);
  auto features = detail::extract_features(st, data, train_idx, full_adj);
  std::vector<int> labels;
  for (int i : train_idx) labels.push_back(data.sequences[static_cast<size_t>(i)].label);
  auto head = detail::train_linear_head(features, labels, data.num_classes, cfg.linear_lr,
                                        cfg.classifier_epochs, cfg.batch_size, cfg.weight_decay,
                                        root.fork(0xC1A55));

  EvalReport report;
  report.protocol = n == 0 ? "linear" : (mode == PartialMode::joints ? "partial-joints" : "partial-parts");
  report.seed = cfg.seed;
  (mode == PartialMode::joints ? report.masked_joints : report.masked_parts) = n;

  Rng mask_rng = root.fork(0x3A5C);
  for (size_t i = 0; i < test_idx.size(); ++i) {
    const auto& seq = data.sequences[static_cast<size_t>(test_idx[i])];
    std::vector<double> h;
    if (n == 0) {
      h = encode_single(st, seq, full_adj);
    } else {
      Rng seq_rng = mask_rng.fork(i);
      std::vector<int> joints;
      if (mode == PartialMode::joints) {
        std::vector<int> pool(static_cast<size_t>(v));
        std::iota(pool.begin(), pool.end(), 0);
        for (int k = 0; k < n; ++k) {
          const auto pick = seq_rng.uniform_int(static_cast<int64_t>(pool.size()));
          joints.push_back(pool[static_cast<size_t>(pick)]);
          pool.erase(pool.begin() + pick);
        }
      } else {
        std::vector<int> parts(GraphTopology::kNumParts);
        std::iota(parts.begin(), parts.end(), 0);
        std::vector<int> chosen;
        for (int k = 0; k < n; ++k) {
          const auto pick = seq_rng.uniform_int(static_cast<int64_t>(parts.size()));
          chosen.push_back(parts[static_cast<size_t>(pick)]);
          parts.erase(parts.begin() + pick);
        }
        for (int j = 0; j < v; ++j)
          if (std::find(chosen.begin(), chosen.end(),
                        data.topology.part_assignment[static_cast<size_t>(j)]) != chosen.end())
            joints.push_back(j);
      }
      std::sort(joints.begin(), joints.end());
      auto restriction = restrict_topology(data.topology, joints);
      h = encode_single(st, apply_spatial_mask(seq, joints),
                        normalize_adjacency(restriction.topology));
    }
    auto logits = detail::head_logits(h, head);
    const int pred = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    report.test_labels.push_back(seq.label);
    report.predictions.push_back(pred);
    report.test_logits.push_back(std::move(logits));
  }
  detail::finalize_report(report, data.num_classes);
  return report;
}

// Linear evaluation: affine classifier on the frozen encoder's features.
inline EvalReport linear_eval(EncoderState& st, const Dataset& dataset, const EvalConfig& cfg) {
  return partial_body_eval(st, dataset, PartialMode::joints, 0, cfg);
}

namespace detail {

// Shared by finetune and semi-supervised: train encoder + head end to end on
// the given train indices, then score the test split in eval mode.
inline EvalReport finetune_on(const EncoderState& pretrained, const Dataset& dataset,
                              const std::vector<int>& train_idx, const EvalConfig& cfg,
                              const std::string& protocol) {
  cfg.validate();
  Dataset data = apply_modality(dataset, cfg.modality, cfg.bone_root);
  const auto test_idx = data.indices_of(Split::test);
  require(!train_idx.empty() && !test_idx.empty(), errc::invalid_argument,
          "finetune: need both train and test splits");
  const auto full_adj = normalize_adjacency(data.topology);
  const int v = data.topology.num_joints;

  EncoderState st = clone_encoder(pretrained);
  Rng root(cfg.seed);
  Rng init_rng = root.fork(0xF17E);
  LinearHead head = init_head(st.config.feature_dim, data.num_classes, init_rng);
  std::map<std::string, Tensor> params = st.params;
  params.emplace("head.w", head.w);
  params.emplace("head.b", head.b);
  AdamState adam;
  Rng shuffle = root.fork(0x5F0F1E);

  const int n = static_cast<int>(train_idx.size());
  const int bs = std::min(cfg.batch_size, n);
  require(bs >= 2, errc::invalid_argument, "finetune: labeled subset smaller than a batch of 2");
  std::vector<int> order = train_idx;
  if (cfg.finetune_epochs > 0) {
    TrainConfig sched;
    sched.epochs = cfg.finetune_epochs;
    sched.warmup_epochs = 0;
    sched.base_lr = cfg.finetune_lr;
    for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
      const double step_lr = lr_at(epoch, sched);
      for (int i = n - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(shuffle.uniform_int(i + 1))]);
      for (int start = 0; start + bs <= n; start += bs) {
        std::vector<const SkeletonSequence*> batch;
        std::vector<int> y;
        for (int k = 0; k < bs; ++k) {
          const auto& seq = data.sequences[static_cast<size_t>(order[static_cast<size_t>(start + k)])];
          batch.push_back(&seq);
          y.push_back(seq.label);
        }
        Tensor x = sequence_batch_tensor(batch);
        Tensor adj = adjacency_batch(full_adj, v, bs);
        Tensor h = encode_batch(st, x, adj, true);
        Tensor loss = softmax_cross_entropy(add_rowvec(matmul(h, head.w), head.b), y);
        backward(loss);
        adam_step(params, adam, step_lr, cfg.weight_decay);
      }
    }
  }

  EvalReport report;
  report.protocol = protocol;
  report.seed = cfg.seed;
  for (int idx : test_idx) {
    const auto& seq = data.sequences[static_cast<size_t>(idx)];
    auto logits = head_logits(encode_single(st, seq, full_adj), head);
    const int pred = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    report.test_labels.push_back(seq.label);
    report.predictions.push_back(pred);
    report.test_logits.push_back(std::move(logits));
  }
  finalize_report(report, data.num_classes);
  return report;
}

}  // namespace detail

// Finetune the whole network (encoder + appended classifier) on the train
// split. With finetune_epochs = 0 this scores the initialized classifier on
// frozen features.
inline EvalReport finetune_eval(const EncoderState& pretrained, const Dataset& dataset,
                                const EvalConfig& cfg) {
  dataset.validate();
  return detail::finetune_on(pretrained, dataset, dataset.indices_of(Split::train), cfg, "finetune");
}

// Stratified labeled subset of the train split: per-class quotas by largest
// remainder summing to round(fraction * train size), at least one per class.
inline std::vector<int> stratified_subset(const Dataset& data, double fraction, Rng rng) {
  const auto train_idx = data.indices_of(Split::train);
  const int total_target = static_cast<int>(std::llround(fraction * static_cast<double>(train_idx.size())));
  require(total_target >= data.num_classes, errc::invalid_argument,
          "semi: fraction * train size must cover at least one label per class");
  std::vector<std::vector<int>> by_class(static_cast<size_t>(data.num_classes));
  for (int i : train_idx)
    by_class[static_cast<size_t>(data.sequences[static_cast<size_t>(i)].label)].push_back(i);

  std::vector<int> quota(static_cast<size_t>(data.num_classes), 0);
  std::vector<std::pair<double, int>> remainder;
  int assigned = 0;
  for (int k = 0; k < data.num_classes; ++k) {
    const double exact = fraction * static_cast<double>(by_class[static_cast<size_t>(k)].size());
    quota[static_cast<size_t>(k)] = std::max(1, static_cast<int>(std::floor(exact)));
    quota[static_cast<size_t>(k)] =
        std::min(quota[static_cast<size_t>(k)], static_cast<int>(by_class[static_cast<size_t>(k)].size()));
    assigned += quota[static_cast<size_t>(k)];
    remainder.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t r = 0; assigned < total_target && r < remainder.size(); ++r) {
    const int k = remainder[r].second;
    if (quota[static_cast<size_t>(k)] < static_cast<int>(by_class[static_cast<size_t>(k)].size())) {
      ++quota[static_cast<size_t>(k)];
      ++assigned;
    }
  }

  std::vector<int> subset;
  for (int k = 0; k < data.num_classes; ++k) {
    auto& pool = by_class[static_cast<size_t>(k)];
    Rng class_rng = rng.fork(static_cast<uint64_t>(k));
    for (int need = quota[static_cast<size_t>(k)]; need > 0; --need) {
      const auto pick = class_rng.uniform_int(static_cast<int64_t>(pool.size()));
      subset.push_back(pool[static_cast<size_t>(pick)]);
      pool.erase(pool.begin() + pick);
    }
  }
  std::sort(subset.begin(), subset.end());
  return subset;
}

// Finetuning restricted to a stratified labeled fraction of the train split.
inline EvalReport semi_supervised_eval(const EncoderState& pretrained, const Dataset& dataset,
                                       double fraction, const EvalConfig& cfg) {
  dataset.validate();
  require(fraction > 0.0 && fraction <= 1.0, errc::invalid_argument,
          "semi: fraction must lie in (0, 1]");
  Rng root(cfg.seed);
  auto subset = stratified_subset(dataset, fraction, root.fork(0x5E31));
  auto report = detail::finetune_on(pretrained, dataset, subset, cfg, "semi-supervised");
  return report;
}

// Equal-weight score fusion: per stream softmax, summed, argmax (ties toward
// the lower class index).
inline EvalReport fuse_streams(const std::vector<EvalReport>& reports) {
  require(reports.size() >= 2, errc::invalid_argument, "fuse: need at least two streams");
  const auto& base = reports.front();
  for (const auto& r : reports) {
    require(r.test_labels == base.test_labels, errc::shape_mismatch,
            "fuse: test sets are misaligned across streams");
    require(r.test_logits.size() == base.test_logits.size(), errc::shape_mismatch,
            "fuse: logit row counts differ");
  }
  const size_t n = base.test_labels.size();
  const size_t k = base.test_logits.empty() ? 0 : base.test_logits.front().size();
  EvalReport fused;
  fused.protocol = "fused";
  fused.seed = base.seed;
  fused.test_labels = base.test_labels;
  int num_classes = static_cast<int>(k);
  for (size_t i = 0; i < n; ++i) {
    std::vector<double> prob(k, 0.0);
    for (const auto& r : reports) {
      require(r.test_logits[i].size() == k, errc::shape_mismatch, "fuse: logit widths differ");
      double mx = r.test_logits[i][0];
      for (double x : r.test_logits[i]) mx = std::max(mx, x);
      double z = 0.0;
      std::vector<double> e(k);
      for (size_t j = 0; j < k; ++j) {
        e[j] = std::exp(r.test_logits[i][j] - mx);
        z += e[j];
      }
      for (size_t j = 0; j < k; ++j) prob[j] += e[j] / z;
    }
    int arg = 0;
    for (size_t j = 1; j < k; ++j)
      if (prob[j] > prob[static_cast<size_t>(arg)]) arg = static_cast<int>(j);
    fused.predictions.push_back(arg);
    fused.test_logits.push_back(std::move(prob));
  }
  detail::finalize_report(fused, num_classes);
  return fused;
}

// ------------------------------------------------------------- report output

inline void write_report_kv(std::ostream& os, const EvalReport& r) {
  os << "protocol: " << r.protocol << "\n";
  os << "seed: " << r.seed << "\n";
  os << "top1: " << r.top1 << "\n";
  if (r.masked_joints > 0) os << "masked_joints: " << r.masked_joints << "\n";
  if (r.masked_parts > 0) os << "masked_parts: " << r.masked_parts << "\n";
  os << "per_class_acc:";
  for (double a : r.per_class_acc) os << ' ' << a;
  os << "\nper_class_count:";
  for (int c : r.per_class_count) os << ' ' << c;
  os << "\n";
}

inline void write_report_csv_header(std::ostream& os) {
  os << "protocol,seed,masked_joints,masked_parts,top1\n";
}

inline void write_report_csv_row(std::ostream& os, const EvalReport& r) {
  os << r.protocol << ',' << r.seed << ',' << r.masked_joints << ',' << r.masked_parts << ','
     << r.top1 << "\n";
}

}  // namespace pstl
