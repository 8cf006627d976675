#pragma once

// Cross-correlation matrix between embedding batches and the redundancy-
// reduction loss that pushes it toward the identity: the diagonal term aligns
// paired embeddings, the off-diagonal term decorrelates dimensions.

#include <vector>

#include "pstl/common.hpp"
#include "pstl/tensor.hpp"

namespace pstl {

struct LossConfig {
  double lambda = 2e-4;
  bool center_embeddings = true;  // subtract per-dimension batch means first
  double epsilon = 1e-9;          // stabilizes zero-variance dimensions

  void validate() const {
    require(lambda > 0.0, errc::config, "loss: lambda must be > 0");
    require(epsilon > 0.0, errc::config, "loss: epsilon must be > 0");
  }
};

// C[i,j] = sum_b z[b,i] z'[b,j] / (sqrt(sum_b z[b,i]^2 + eps) * sqrt(sum_b z'[b,j]^2 + eps)).
// The printed formula omits mean subtraction; the centered variant is the
// default and both live behind the center_embeddings flag.
inline Tensor cross_correlation(const Tensor& z, const Tensor& zp, const LossConfig& cfg = {}) {
  require(z.rank() == 2 && zp.rank() == 2, errc::shape_mismatch,
          "cross_correlation: embeddings must be [B,d], got " + shape_str(z.shape()) + " and " +
              shape_str(zp.shape()));
  require(z.shape() == zp.shape(), errc::shape_mismatch,
          "cross_correlation: shape mismatch " + shape_str(z.shape()) + " vs " +
              shape_str(zp.shape()));
  require(z.dim(0) >= 2, errc::invalid_argument,
          "cross_correlation: batch must be >= 2, got " + std::to_string(z.dim(0)));
  Tensor a = z, b = zp;
  if (cfg.center_embeddings) {
    a = add_rowvec(a, scale(mean_axes(a, {0}), -1.0));
    b = add_rowvec(b, scale(mean_axes(b, {0}), -1.0));
  }
  Tensor norm_a = sqrt_elem(add_scalar(sum_axes(mul(a, a), {0}), cfg.epsilon));
  Tensor norm_b = sqrt_elem(add_scalar(sum_axes(mul(b, b), {0}), cfg.epsilon));
  Tensor numer = matmul(transpose2d(a), b);
  return div_rowvec(div_colvec(numer, norm_a), norm_b);
}

// sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2
inline Tensor bt_loss(const Tensor& c, double lambda) {
  require(c.rank() == 2 && c.dim(0) == c.dim(1), errc::shape_mismatch,
          "bt_loss: expected a square matrix, got " + shape_str(c.shape()));
  const int64_t d = c.dim(0);
  std::vector<int64_t> diag_idx(static_cast<size_t>(d));
  for (int64_t i = 0; i < d; ++i) diag_idx[static_cast<size_t>(i)] = i * d + i;
  Tensor diag = gather(reshape(c, {d * d}), 0, diag_idx);
  Tensor diag_err = add_scalar(scale(diag, -1.0), 1.0);
  Tensor on_diag = sum_all(mul(diag_err, diag_err));
  Tensor off_diag = sub(sum_all(mul(c, c)), sum_all(mul(diag, diag)));
  return add(on_diag, scale(off_diag, lambda));
}

struct PstlLoss {
  Tensor total;    // L_p = L_1 + L_2
  Tensor spatial;  // L_1: anchor vs spatially masked stream
  Tensor temporal; // L_2: anchor vs temporally masked stream
};

inline PstlLoss pstl_loss(const Tensor& z_anchor, const Tensor& z_spatial, const Tensor& z_temporal,
                          const LossConfig& cfg = {}) {
  require(z_anchor.shape() == z_spatial.shape() && z_anchor.shape() == z_temporal.shape(),
          errc::shape_mismatch,
          "pstl_loss: embedding batches must share shape, got " + shape_str(z_anchor.shape()) +
              ", " + shape_str(z_spatial.shape()) + ", " + shape_str(z_temporal.shape()));
  PstlLoss out;
  out.spatial = bt_loss(cross_correlation(z_anchor, z_spatial, cfg), cfg.lambda);
  out.temporal = bt_loss(cross_correlation(z_anchor, z_temporal, cfg), cfg.lambda);
  out.total = add(out.spatial, out.temporal);
  return out;
}

}  // namespace pstl
