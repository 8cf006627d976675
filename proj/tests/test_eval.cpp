#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "pstl/eval.hpp"

using namespace pstl;

namespace {

EncoderConfig tiny_encoder() {
  EncoderConfig cfg;
  cfg.hidden_channels = 4;
  cfg.num_gcn_blocks = 2;
  cfg.temporal_kernel_size = 3;
  cfg.feature_dim = 6;
  cfg.projector_dims = {8, 8, 6};
  return cfg;
}

Dataset tiny_dataset(uint64_t seed, int train_per_class = 10, int test_per_class = 5) {
  SyntheticConfig cfg;
  cfg.num_classes = 2;
  cfg.train_per_class = train_per_class;
  cfg.test_per_class = test_per_class;
  cfg.frames = 12;
  return generate_synthetic(cfg, seed);
}

EvalConfig fast_eval(uint64_t seed = 1) {
  EvalConfig cfg;
  cfg.classifier_epochs = 30;
  cfg.finetune_epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = seed;
  return cfg;
}

EvalReport report_with_logits(std::vector<int> labels, std::vector<std::vector<double>> logits) {
  EvalReport r;
  r.protocol = "stub";
  r.test_labels = std::move(labels);
  r.test_logits = std::move(logits);
  for (const auto& row : r.test_logits)
    r.predictions.push_back(
        static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  detail::finalize_report(r, static_cast<int>(r.test_logits.front().size()));
  return r;
}

}  // namespace

TEST_CASE("linear evaluation never mutates encoder parameters") {
  auto data = tiny_dataset(70);
  auto st = init_encoder(tiny_encoder(), 1);
  std::map<std::string, std::vector<double>> before;
  for (const auto& [name, p] : st.params) before[name] = p.values();
  auto bn_before = st.bn;

  auto report = linear_eval(st, data, fast_eval());
  REQUIRE(report.test_labels.size() == 10);

  for (const auto& [name, p] : st.params) REQUIRE(p.values() == before.at(name));
  for (const auto& [name, s] : st.bn) {
    REQUIRE(s.mean == bn_before.at(name).mean);
    REQUIRE(s.var == bn_before.at(name).var);
  }
}

TEST_CASE("reports are deterministic functions of checkpoint, data, and seed") {
  auto data = tiny_dataset(71);
  auto st = init_encoder(tiny_encoder(), 2);
  auto r1 = linear_eval(st, data, fast_eval(5));
  auto r2 = linear_eval(st, data, fast_eval(5));
  REQUIRE(r1.top1 == r2.top1);
  REQUIRE(r1.predictions == r2.predictions);
  REQUIRE(r1.test_logits == r2.test_logits);
}

TEST_CASE("a constant encoder scores the majority-class frequency") {
  // unbalanced split: class 0 dominates the train prior
  SyntheticConfig cfg;
  cfg.num_classes = 2;
  cfg.train_per_class = 9;
  cfg.test_per_class = 4;
  auto data = generate_synthetic(cfg, 72);
  // drop most class-1 train sequences to skew the prior
  Dataset skewed;
  skewed.topology = data.topology;
  skewed.num_classes = 2;
  int kept1 = 0;
  for (size_t i = 0; i < data.sequences.size(); ++i) {
    if (data.split[i] == Split::train && data.sequences[i].label == 1 && kept1 >= 3) continue;
    if (data.split[i] == Split::train && data.sequences[i].label == 1) ++kept1;
    skewed.sequences.push_back(data.sequences[i]);
    skewed.split.push_back(data.split[i]);
  }

  auto st = init_encoder(tiny_encoder(), 3);
  for (auto& [name, p] : st.params)
    for (auto& x : p.values_mut()) x = 0.0;
  auto report = linear_eval(st, skewed, fast_eval());
  // every prediction collapses to the majority train class (0); test holds 4+4
  for (int pred : report.predictions) REQUIRE(pred == 0);
  REQUIRE(report.top1 == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("randomly permuted labels score near chance") {
  SyntheticConfig cfg;
  cfg.num_classes = 4;
  cfg.train_per_class = 25;
  cfg.test_per_class = 25;
  cfg.frames = 12;
  auto data = generate_synthetic(cfg, 73);
  Rng rng(74);
  for (auto& s : data.sequences) s.label = static_cast<int>(rng.uniform_int(4));

  auto st = init_encoder(tiny_encoder(), 4);
  auto report = linear_eval(st, data, fast_eval());
  const double n = static_cast<double>(report.test_labels.size());
  const double sigma = std::sqrt(0.25 * 0.75 / n);
  REQUIRE(std::abs(report.top1 - 0.25) <= 3.0 * sigma + 1e-12);
}

TEST_CASE("partial evaluation with n = 0 equals plain linear evaluation") {
  auto data = tiny_dataset(75);
  auto st = init_encoder(tiny_encoder(), 5);
  auto lin = linear_eval(st, data, fast_eval(9));
  auto part = partial_body_eval(st, data, PartialMode::joints, 0, fast_eval(9));
  REQUIRE(lin.top1 == part.top1);
  REQUIRE(lin.predictions == part.predictions);
  REQUIRE(lin.test_logits == part.test_logits);
}

TEST_CASE("masking four parts leaves exactly the joints of the remaining part") {
  auto topo = desk10_topology();
  for (int keep = 0; keep < GraphTopology::kNumParts; ++keep) {
    std::vector<int> joints;
    for (int j = 0; j < topo.num_joints; ++j)
      if (topo.part_assignment[static_cast<size_t>(j)] != keep) joints.push_back(j);
    auto restriction = restrict_topology(topo, joints);
    for (int old : restriction.kept)
      REQUIRE(topo.part_assignment[static_cast<size_t>(old)] == keep);
  }
}

TEST_CASE("partial evaluation rejects out-of-range mask counts and runs in parts mode") {
  auto data = tiny_dataset(76);
  auto st = init_encoder(tiny_encoder(), 6);
  REQUIRE_THROWS_AS(partial_body_eval(st, data, PartialMode::joints, 9, fast_eval()), Error);
  REQUIRE_THROWS_AS(partial_body_eval(st, data, PartialMode::parts, 5, fast_eval()), Error);
  auto report = partial_body_eval(st, data, PartialMode::parts, 4, fast_eval());
  REQUIRE(report.masked_parts == 4);
  REQUIRE(report.test_labels.size() == 10);
}

TEST_CASE("finetune with zero epochs scores the initialized classifier") {
  auto data = tiny_dataset(77);
  auto st = init_encoder(tiny_encoder(), 7);
  auto cfg = fast_eval();
  cfg.finetune_epochs = 0;
  auto r1 = finetune_eval(st, data, cfg);
  auto r2 = finetune_eval(st, data, cfg);
  REQUIRE(r1.top1 == r2.top1);
  REQUIRE(r1.predictions == r2.predictions);
  // encoder copy: the original state is untouched
  auto r3 = finetune_eval(st, data, fast_eval());
  REQUIRE(r3.test_labels.size() == 10);
}

TEST_CASE("stratified subsets: exact counts, coverage, determinism") {
  SyntheticConfig cfg;
  cfg.num_classes = 4;
  cfg.train_per_class = 125;
  cfg.test_per_class = 1;
  cfg.frames = 4;
  auto data = generate_synthetic(cfg, 78);  // 500 train sequences

  Rng rng(79);
  auto subset = stratified_subset(data, 0.10, rng);
  REQUIRE(subset.size() == 50);
  std::vector<int> per_class(4, 0);
  for (int i : subset) ++per_class[static_cast<size_t>(data.sequences[static_cast<size_t>(i)].label)];
  for (int c : per_class) REQUIRE(c >= 1);

  auto subset2 = stratified_subset(data, 0.10, Rng(79));
  REQUIRE(subset == subset2);

  REQUIRE_THROWS_AS(stratified_subset(data, 0.002, Rng(80)), Error);
}

TEST_CASE("semi-supervised with fraction 1.0 equals plain finetuning") {
  auto data = tiny_dataset(81);
  auto st = init_encoder(tiny_encoder(), 8);
  auto cfg = fast_eval(3);
  auto full = finetune_eval(st, data, cfg);
  auto semi = semi_supervised_eval(st, data, 1.0, cfg);
  REQUIRE(full.top1 == semi.top1);
  REQUIRE(full.predictions == semi.predictions);
}

TEST_CASE("fusing identical streams reproduces the single-stream accuracy") {
  auto r = report_with_logits({0, 1, 0, 1}, {{2.0, 0.1}, {0.2, 1.0}, {3.0, 0.0}, {0.0, 0.5}});
  auto fused = fuse_streams({r, r, r});
  REQUIRE(fused.top1 == r.top1);
  REQUIRE(fused.predictions == r.predictions);
}

TEST_CASE("a perfect stream dominates uniform streams under fusion") {
  auto perfect = report_with_logits({0, 1, 1, 0}, {{5.0, 0.0}, {0.0, 5.0}, {0.0, 5.0}, {5.0, 0.0}});
  auto uniform = report_with_logits({0, 1, 1, 0}, {{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}});
  auto fused = fuse_streams({perfect, uniform, uniform});
  REQUIRE(fused.top1 == 1.0);
  REQUIRE(fused.predictions == perfect.predictions);
}

TEST_CASE("fusion matches a direct probability-summing oracle") {
  Rng rng(82);
  const int n = 12, k = 3;
  std::vector<EvalReport> streams;
  std::vector<int> labels(n);
  for (auto& y : labels) y = static_cast<int>(rng.uniform_int(k));
  for (int s = 0; s < 3; ++s) {
    std::vector<std::vector<double>> logits;
    for (int i = 0; i < n; ++i) {
      std::vector<double> row(k);
      for (auto& x : row) x = rng.uniform(-2.0, 2.0);
      logits.push_back(std::move(row));
    }
    streams.push_back(report_with_logits(labels, std::move(logits)));
  }
  auto fused = fuse_streams(streams);

  for (int i = 0; i < n; ++i) {
    std::vector<double> prob(k, 0.0);
    for (const auto& st : streams) {
      double z = 0.0;
      for (int j = 0; j < k; ++j) z += std::exp(st.test_logits[static_cast<size_t>(i)][static_cast<size_t>(j)]);
      for (int j = 0; j < k; ++j)
        prob[static_cast<size_t>(j)] += std::exp(st.test_logits[static_cast<size_t>(i)][static_cast<size_t>(j)]) / z;
    }
    int arg = 0;
    for (int j = 1; j < k; ++j)
      if (prob[static_cast<size_t>(j)] > prob[static_cast<size_t>(arg)]) arg = j;
    REQUIRE(fused.predictions[static_cast<size_t>(i)] == arg);
    for (int j = 0; j < k; ++j)
      REQUIRE(fused.test_logits[static_cast<size_t>(i)][static_cast<size_t>(j)] ==
              Catch::Approx(prob[static_cast<size_t>(j)]).margin(1e-12));
  }
}

TEST_CASE("fusion is invariant to per-sample logit shifts") {
  Rng rng(83);
  const int n = 8, k = 4;
  std::vector<int> labels(n);
  for (auto& y : labels) y = static_cast<int>(rng.uniform_int(k));
  std::vector<std::vector<double>> logits_a, logits_b;
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(k);
    for (auto& x : row) x = rng.uniform(-1.0, 1.0);
    logits_a.push_back(row);
    logits_b.push_back(std::move(row));
  }
  auto a = report_with_logits(labels, logits_a);
  // shift every logit of sample i by a per-sample constant
  for (int i = 0; i < n; ++i)
    for (auto& x : logits_b[static_cast<size_t>(i)]) x += 3.7 * (i + 1);
  auto b = report_with_logits(labels, logits_b);
  auto other = report_with_logits(labels, logits_a);

  auto f1 = fuse_streams({a, other});
  auto f2 = fuse_streams({b, other});
  REQUIRE(f1.predictions == f2.predictions);
  for (size_t i = 0; i < f1.test_logits.size(); ++i)
    for (size_t j = 0; j < f1.test_logits[i].size(); ++j)
      REQUIRE(f1.test_logits[i][j] == Catch::Approx(f2.test_logits[i][j]).margin(1e-9));
}

TEST_CASE("misaligned test sets are rejected") {
  auto a = report_with_logits({0, 1}, {{1.0, 0.0}, {0.0, 1.0}});
  auto b = report_with_logits({1, 0}, {{1.0, 0.0}, {0.0, 1.0}});
  REQUIRE_THROWS_AS(fuse_streams({a, b}), Error);
}

TEST_CASE("per-class accuracies weight-average to top-1") {
  auto data = tiny_dataset(84);
  auto st = init_encoder(tiny_encoder(), 9);
  auto report = linear_eval(st, data, fast_eval());
  double weighted = 0.0;
  int total = 0;
  for (size_t k = 0; k < report.per_class_acc.size(); ++k) {
    weighted += report.per_class_acc[k] * report.per_class_count[k];
    total += report.per_class_count[k];
  }
  REQUIRE(report.top1 == Catch::Approx(weighted / total).margin(1e-12));
}
