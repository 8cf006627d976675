#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "pstl/grad_check.hpp"
#include "pstl/train.hpp"

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

PretrainSetup tiny_setup() {
  PretrainSetup s;
  s.encoder = tiny_encoder();
  s.train.epochs = 4;
  s.train.batch_size = 4;
  s.train.warmup_epochs = 1;
  s.train.seed = 7;
  s.mask.n_mask = 2;
  s.mask.top_k = 2;
  return s;
}

Dataset tiny_dataset(uint64_t seed, int frames = 12) {
  SyntheticConfig cfg;
  cfg.num_classes = 2;
  cfg.train_per_class = 8;
  cfg.test_per_class = 2;
  cfg.frames = frames;
  return generate_synthetic(cfg, seed);
}

}  // namespace

TEST_CASE("learning rate schedule: warmup ramp, cosine tail, continuity") {
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.warmup_epochs = 10;
  cfg.base_lr = 0.02;
  REQUIRE(lr_at(0, cfg) == 0.0);
  REQUIRE(lr_at(10, cfg) == Catch::Approx(cfg.base_lr).margin(1e-15));

  // continuity at the boundary: ramp end == cosine start
  REQUIRE(lr_at(9, cfg) == Catch::Approx(cfg.base_lr * 0.9).margin(1e-15));

  // closed form at the final epoch
  const double want =
      cfg.base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * (149.0 - 10.0) / 140.0));
  REQUIRE(lr_at(149, cfg) == Catch::Approx(want).margin(1e-15));

  for (int e = 10; e + 1 < cfg.epochs; ++e) REQUIRE(lr_at(e + 1, cfg) <= lr_at(e, cfg) + 1e-15);
}

TEST_CASE("adam: zero gradients leave parameters untouched") {
  std::map<std::string, Tensor> params;
  params.emplace("w", Tensor::from({3}, {1.0, -2.0, 0.5}, true));
  Tensor loss = sum_all(mul(params.at("w"), Tensor::zeros({3})));
  backward(loss);
  AdamState state;
  adam_step(params, state, 0.1, 0.0);
  REQUIRE(params.at("w").values() == std::vector<double>{1.0, -2.0, 0.5});
}

TEST_CASE("adam single step matches the hand-evaluated update") {
  std::map<std::string, Tensor> params;
  params.emplace("theta", Tensor::from({1}, {2.0}, true));
  Tensor loss = sum_all(params.at("theta"));  // gradient exactly 1
  backward(loss);
  AdamState state;
  const double lr = 0.05;
  adam_step(params, state, lr, 0.0);
  // t=1: mhat = g, vhat = g^2 -> delta = lr / (1 + eps)
  const double want = 2.0 - lr / (1.0 + 1e-8);
  REQUIRE(params.at("theta").values()[0] == Catch::Approx(want).margin(1e-15));
}

TEST_CASE("pretraining is bitwise deterministic given the seed") {
  auto data = tiny_dataset(3);
  auto setup = tiny_setup();
  auto r1 = pretrain(data, setup);
  auto r2 = pretrain(data, setup);
  REQUIRE(r1.log.size() == r2.log.size());
  for (size_t i = 0; i < r1.log.size(); ++i) {
    REQUIRE(r1.log[i].lp == r2.log[i].lp);
    REQUIRE(r1.log[i].lr == r2.log[i].lr);
  }
  for (const auto& [name, p] : r1.state.params)
    REQUIRE(p.values() == r2.state.params.at(name).values());
  for (const auto& [name, s] : r1.state.bn) {
    REQUIRE(s.mean == r2.state.bn.at(name).mean);
    REQUIRE(s.var == r2.state.bn.at(name).var);
  }

  auto setup2 = setup;
  setup2.train.seed = 8;
  auto r3 = pretrain(data, setup2);
  bool differs = false;
  for (const auto& [name, p] : r1.state.params)
    if (p.values() != r3.state.params.at(name).values()) differs = true;
  REQUIRE(differs);
}

TEST_CASE("identity augmentations and zero masks degenerate to self-correlation") {
  auto data = tiny_dataset(4);
  auto setup = tiny_setup();
  setup.augment.shear_amplitude = 0.0;
  setup.augment.crop_pad_ratio = 0.0;
  setup.augment.rotate_main_max = 0.0;
  setup.augment.rotate_minor_max = 0.0;
  setup.augment.flip_probability = 0.0;
  setup.mask.n_mask = 0;
  setup.mask.top_k = 0;

  auto st = init_encoder(setup.encoder, 5);
  std::vector<const SkeletonSequence*> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(&data.sequences[static_cast<size_t>(i)]);
  Rng rng(11);
  auto views = build_pstl_views(batch, data.topology, setup.augment, setup.mask, rng);
  for (size_t i = 0; i < batch.size(); ++i) {
    REQUIRE(views.anchor[i].data == batch[i]->data);
    REQUIRE(views.spatial[i].data == batch[i]->data);
    REQUIRE(views.temporal[i].data == batch[i]->data);
  }
  auto loss = pstl_forward(st, views, setup.loss, true);
  REQUIRE(loss.spatial.item() == Catch::Approx(loss.temporal.item()).margin(1e-12));
  REQUIRE(loss.total.item() == Catch::Approx(2.0 * loss.spatial.item()).margin(1e-12));

  // each half is the lambda-scaled off-diagonal energy of the self-correlation
  Tensor x = sequence_batch_tensor(batch);
  Tensor adj = adjacency_batch(views.full_adj, views.num_joints, 4);
  auto bn_backup = st.bn;
  Tensor z = project_batch(st, encode_batch(st, x, adj, true), true);
  st.bn = bn_backup;
  Tensor c = cross_correlation(z, z, setup.loss);
  const int64_t d = c.dim(0);
  double off = 0.0, diag_err = 0.0;
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) {
      const double v = c.values()[static_cast<size_t>(i * d + j)];
      if (i == j)
        diag_err += (1.0 - v) * (1.0 - v);
      else
        off += v * v;
    }
  REQUIRE(loss.spatial.item() == Catch::Approx(diag_err + setup.loss.lambda * off).margin(1e-9));
}

TEST_CASE("loss telemetry is finite at every step and monotone in step index") {
  auto data = tiny_dataset(5);
  auto setup = tiny_setup();
  setup.train.epochs = 13;
  setup.train.warmup_epochs = 2;
  setup.train.max_steps = 50;
  std::ostringstream telemetry;
  auto result = pretrain(data, setup, &telemetry);
  REQUIRE(result.log.size() == 50);
  for (size_t i = 0; i < result.log.size(); ++i) {
    REQUIRE(std::isfinite(result.log[i].lp));
    REQUIRE(std::isfinite(result.log[i].l1));
    REQUIRE(std::isfinite(result.log[i].l2));
    REQUIRE(result.log[i].step == static_cast<int64_t>(i + 1));
  }
  REQUIRE(telemetry.str().rfind("step,L_p,L_1,L_2,lr\n", 0) == 0);
}

TEST_CASE("a training step keeps a single shared parameter set") {
  auto data = tiny_dataset(6);
  auto setup = tiny_setup();
  auto st = init_encoder(setup.encoder, 6);
  const auto names_before = [&] {
    std::vector<std::string> n;
    for (const auto& [k, v] : st.params) n.push_back(k);
    return n;
  }();
  AdamState adam;
  std::vector<const SkeletonSequence*> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(&data.sequences[static_cast<size_t>(i)]);
  Rng rng(12);
  pretrain_step_pstl(batch, st, adam, setup, data.topology, 1e-3, rng);
  std::vector<std::string> names_after;
  for (const auto& [k, v] : st.params) names_after.push_back(k);
  REQUIRE(names_before == names_after);
}

TEST_CASE("full triple-stream loss gradient passes finite differences") {
  auto data = tiny_dataset(7, 10);
  auto setup = tiny_setup();
  auto st = init_encoder(setup.encoder, 21);
  std::vector<const SkeletonSequence*> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(&data.sequences[static_cast<size_t>(2 * i)]);
  Rng rng(13);
  auto views = build_pstl_views(batch, data.topology, setup.augment, setup.mask, rng);

  std::vector<std::pair<std::string, Tensor>> params;
  for (const auto& [name, p] : st.params) params.emplace_back(name, p);
  auto fn = [&] {
    auto bn_backup = st.bn;
    auto loss = pstl_forward(st, views, setup.loss, true);
    st.bn = bn_backup;
    return loss.total;
  };
  auto report = grad_check(fn, params);
  INFO("max rel err " << report.max_rel_err);
  REQUIRE(report.passed());
}

TEST_CASE("skeletonbt: identical views give the self-correlation loss; seeded determinism") {
  auto data = tiny_dataset(8);
  auto setup = tiny_setup();
  setup.train.mode = PretrainMode::skeletonbt;
  setup.augment.shear_amplitude = 0.0;
  setup.augment.crop_pad_ratio = 0.0;
  setup.augment.rotate_main_max = 0.0;
  setup.augment.rotate_minor_max = 0.0;
  setup.augment.flip_probability = 0.0;

  auto st = init_encoder(setup.encoder, 9);
  auto st2 = clone_encoder(st);
  AdamState a1, a2;
  std::vector<const SkeletonSequence*> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(&data.sequences[static_cast<size_t>(i)]);

  Rng r1(14), r2(14);
  auto t1 = pretrain_step_skeletonbt(batch, st, a1, setup, data.topology, 1e-3, r1);
  auto t2 = pretrain_step_skeletonbt(batch, st2, a2, setup, data.topology, 1e-3, r2);
  REQUIRE(t1.lp == t2.lp);
  REQUIRE(t1.l2 == 0.0);
  for (const auto& [name, p] : st.params) REQUIRE(p.values() == st2.params.at(name).values());

  // identical views: loss is the off-diagonal self-correlation energy plus
  // the tiny epsilon-driven diagonal residue
  auto st3 = init_encoder(setup.encoder, 9);
  Tensor x = sequence_batch_tensor(batch);
  Tensor adj = adjacency_batch(normalize_adjacency(data.topology), data.topology.num_joints, 4);
  auto bn_backup = st3.bn;
  Tensor z = project_batch(st3, encode_batch(st3, x, adj, true), true);
  st3.bn = bn_backup;
  Tensor c = cross_correlation(z, z, setup.loss);
  const double direct = bt_loss(c, setup.loss.lambda).item();
  Rng r3(15);
  AdamState a3;
  auto t3 = pretrain_step_skeletonbt(batch, st3, a3, setup, data.topology, 1e-3, r3);
  REQUIRE(t3.lp == Catch::Approx(direct).margin(1e-9));
}

TEST_CASE("skeletonbt gradients pass finite differences on a small batch") {
  auto data = tiny_dataset(9, 10);
  auto setup = tiny_setup();
  // seed chosen away from near-collapsed batch variances, where central
  // differences at eps=1e-5 are truncation-limited
  auto st = init_encoder(setup.encoder, 33);
  std::vector<const SkeletonSequence*> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(&data.sequences[static_cast<size_t>(i)]);
  Rng rng(16);
  std::vector<SkeletonSequence> v1, v2;
  for (size_t i = 0; i < batch.size(); ++i) {
    Rng sr = rng.fork(i);
    v1.push_back(ordinary_augment(*batch[i], data.topology, setup.augment, sr));
    v2.push_back(ordinary_augment(*batch[i], data.topology, setup.augment, sr));
  }
  Tensor adj = adjacency_batch(normalize_adjacency(data.topology), data.topology.num_joints, 4);
  std::vector<std::pair<std::string, Tensor>> params;
  for (const auto& [name, p] : st.params) params.emplace_back(name, p);
  auto fn = [&] {
    auto bn_backup = st.bn;
    Tensor z1 = project_batch(st, encode_batch(st, sequence_batch_tensor(seq_ptrs(v1)), adj, true), true);
    Tensor z2 = project_batch(st, encode_batch(st, sequence_batch_tensor(seq_ptrs(v2)), adj, true), true);
    Tensor loss = bt_loss(cross_correlation(z1, z2, setup.loss), setup.loss.lambda);
    st.bn = bn_backup;
    return loss;
  };
  auto report = grad_check(fn, params);
  INFO("max rel err " << report.max_rel_err);
  REQUIRE(report.passed());
}
