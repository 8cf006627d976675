#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pstl/grad_check.hpp"
#include "pstl/loss.hpp"

using namespace pstl;

namespace {

Tensor random_embeddings(Rng& rng, int64_t b, int64_t d, bool grad = false) {
  std::vector<double> v(static_cast<size_t>(b * d));
  for (auto& x : v) x = rng.normal();
  return Tensor::from({b, d}, std::move(v), grad);
}

// Direct double-loop evaluation of the cross-correlation formula.
std::vector<double> cc_oracle(const std::vector<double>& z, const std::vector<double>& zp,
                              int64_t b, int64_t d, bool center, double eps) {
  std::vector<double> a = z, bb = zp;
  if (center) {
    for (int64_t i = 0; i < d; ++i) {
      double ma = 0.0, mb = 0.0;
      for (int64_t r = 0; r < b; ++r) {
        ma += a[static_cast<size_t>(r * d + i)];
        mb += bb[static_cast<size_t>(r * d + i)];
      }
      ma /= b;
      mb /= b;
      for (int64_t r = 0; r < b; ++r) {
        a[static_cast<size_t>(r * d + i)] -= ma;
        bb[static_cast<size_t>(r * d + i)] -= mb;
      }
    }
  }
  std::vector<double> c(static_cast<size_t>(d * d));
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) {
      double num = 0.0, na = 0.0, nb = 0.0;
      for (int64_t r = 0; r < b; ++r) {
        num += a[static_cast<size_t>(r * d + i)] * bb[static_cast<size_t>(r * d + j)];
        na += a[static_cast<size_t>(r * d + i)] * a[static_cast<size_t>(r * d + i)];
        nb += bb[static_cast<size_t>(r * d + j)] * bb[static_cast<size_t>(r * d + j)];
      }
      c[static_cast<size_t>(i * d + j)] = num / (std::sqrt(na + eps) * std::sqrt(nb + eps));
    }
  return c;
}

}  // namespace

TEST_CASE("self-correlation has unit diagonal within 1e-9") {
  Rng rng(61);
  for (bool center : {true, false}) {
    LossConfig cfg;
    cfg.center_embeddings = center;
    Tensor z = random_embeddings(rng, 8, 5);
    Tensor c = cross_correlation(z, z, cfg);
    for (int64_t i = 0; i < 5; ++i)
      REQUIRE(c.values()[static_cast<size_t>(i * 5 + i)] == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("cross-correlation matches the double-loop oracle") {
  Rng rng(62);
  for (bool center : {true, false}) {
    LossConfig cfg;
    cfg.center_embeddings = center;
    Tensor z = random_embeddings(rng, 4, 3);
    Tensor zp = random_embeddings(rng, 4, 3);
    Tensor c = cross_correlation(z, zp, cfg);
    auto want = cc_oracle(z.values(), zp.values(), 4, 3, center, cfg.epsilon);
    for (size_t i = 0; i < want.size(); ++i)
      REQUIRE(c.values()[i] == Catch::Approx(want[i]).margin(1e-12));
  }
}

TEST_CASE("entries stay within the Cauchy-Schwarz bound") {
  Rng rng(63);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor z = random_embeddings(rng, 6, 4);
    Tensor zp = random_embeddings(rng, 6, 4);
    Tensor c = cross_correlation(z, zp);
    for (double x : c.values()) REQUIRE(std::abs(x) <= 1.0 + 1e-9);
  }
}

TEST_CASE("per-dimension positive rescaling leaves the matrix unchanged") {
  Rng rng(64);
  Tensor z = random_embeddings(rng, 8, 5);
  Tensor zp = random_embeddings(rng, 8, 5);
  Tensor base = cross_correlation(z, zp);

  for (const auto& [which, dim, factor] :
       {std::tuple{0, 2, 3.0}, std::tuple{1, 4, 0.25}, std::tuple{0, 0, 7.5}}) {
    std::vector<double> scaled = (which == 0 ? z : zp).values();
    for (int64_t r = 0; r < 8; ++r) scaled[static_cast<size_t>(r * 5 + dim)] *= factor;
    Tensor zs = Tensor::from({8, 5}, std::move(scaled));
    Tensor c = which == 0 ? cross_correlation(zs, zp) : cross_correlation(z, zs);
    for (size_t i = 0; i < c.values().size(); ++i)
      REQUIRE(c.values()[i] == Catch::Approx(base.values()[i]).margin(1e-9));
  }
}

TEST_CASE("batches smaller than two are rejected") {
  Tensor z = Tensor::zeros({1, 4});
  REQUIRE_THROWS_AS(cross_correlation(z, z), Error);
  Tensor a = Tensor::zeros({4, 3});
  Tensor b = Tensor::zeros({4, 2});
  REQUIRE_THROWS_AS(cross_correlation(a, b), Error);
}

TEST_CASE("bt_loss: identity, zero matrix, and the direct formula") {
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  REQUIRE(bt_loss(eye, 2e-4).item() == 0.0);

  Tensor zero = Tensor::zeros({4, 4});
  REQUIRE(bt_loss(zero, 2e-4).item() == Catch::Approx(4.0).margin(1e-12));

  // diag 1, off-diagonal 0.5, d = 3: off term = lambda * 6 * 0.25
  std::vector<double> v(9, 0.5);
  v[0] = v[4] = v[8] = 1.0;
  Tensor c = Tensor::from({3, 3}, std::move(v));
  REQUIRE(bt_loss(c, 2e-4).item() == Catch::Approx(3e-4).margin(1e-15));
}

TEST_CASE("bt_loss is nonnegative and zero only at the identity") {
  Rng rng(65);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> v(9);
    for (auto& x : v) x = rng.uniform(-1.5, 1.5);
    Tensor c = Tensor::from({3, 3}, std::move(v));
    REQUIRE(bt_loss(c, 2e-4).item() >= 0.0);
  }
  // off-identity matrices give strictly positive loss
  Tensor near = Tensor::from({2, 2}, {1.0, 0.1, 0.0, 1.0});
  REQUIRE(bt_loss(near, 2e-4).item() > 0.0);
}

TEST_CASE("pstl_loss composes two bt evaluations") {
  Rng rng(66);
  LossConfig cfg;
  Tensor z = random_embeddings(rng, 6, 4);
  Tensor zs = random_embeddings(rng, 6, 4);
  Tensor zt = random_embeddings(rng, 6, 4);
  auto out = pstl_loss(z, zs, zt, cfg);
  const double l1 = bt_loss(cross_correlation(z, zs, cfg), cfg.lambda).item();
  const double l2 = bt_loss(cross_correlation(z, zt, cfg), cfg.lambda).item();
  REQUIRE(out.spatial.item() == Catch::Approx(l1).margin(1e-12));
  REQUIRE(out.temporal.item() == Catch::Approx(l2).margin(1e-12));
  REQUIRE(out.total.item() == Catch::Approx(l1 + l2).margin(1e-12));
}

TEST_CASE("identical masked streams give equal loss halves") {
  Rng rng(67);
  Tensor z = random_embeddings(rng, 6, 4);
  Tensor zm = random_embeddings(rng, 6, 4);
  auto out = pstl_loss(z, zm, zm);
  REQUIRE(out.spatial.item() == out.temporal.item());

  // three identical batches: both halves reduce to the self-correlation
  // off-diagonal energy scaled by lambda
  LossConfig cfg;
  auto self_out = pstl_loss(z, z, z, cfg);
  Tensor c = cross_correlation(z, z, cfg);
  double off = 0.0;
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 4; ++j)
      if (i != j) off += c.values()[static_cast<size_t>(i * 4 + j)] * c.values()[static_cast<size_t>(i * 4 + j)];
  REQUIRE(self_out.spatial.item() == Catch::Approx(cfg.lambda * off).margin(1e-9));
  REQUIRE(self_out.total.item() == Catch::Approx(2.0 * self_out.spatial.item()).margin(1e-12));
}

TEST_CASE("mismatched embedding shapes are rejected") {
  Tensor a = Tensor::zeros({4, 3});
  Tensor b = Tensor::zeros({4, 2});
  REQUIRE_THROWS_AS(pstl_loss(a, a, b), Error);
}

TEST_CASE("gradient of bt_loss over cross_correlation passes finite differences") {
  Rng rng(68);
  Tensor z = random_embeddings(rng, 8, 6, true);
  Tensor zp = random_embeddings(rng, 8, 6, true);
  LossConfig cfg;
  auto fn = [&] { return bt_loss(cross_correlation(z, zp, cfg), cfg.lambda); };
  auto report = grad_check(fn, {{"z", z}, {"zp", zp}});
  INFO("max rel err " << report.max_rel_err);
  REQUIRE(report.passed());
}
