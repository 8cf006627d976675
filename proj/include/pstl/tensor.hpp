#pragma once

// Dense double-precision tensors with reverse-mode automatic differentiation.
// Ops build a DAG of nodes; backward() walks it in reverse topological order
// exactly once. Every primitive checks its outputs for NaN/Inf and raises a
// numeric-fault error on the first offender.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "pstl/common.hpp"

namespace pstl {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated during backward, only if requires_grad
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents
  const char* op = "leaf";

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
};

inline void check_finite(const Node& n) {
  for (double v : n.value) {
    if (!std::isfinite(v))
      fail(errc::numeric_fault,
           std::string("numeric fault: non-finite value produced by op '") + n.op + "'");
  }
}

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), 0.0, requires_grad);
  }

  static Tensor filled(Shape shape, double v, bool requires_grad = false) {
    auto n = std::make_shared<detail::Node>();
    n->value.assign(static_cast<size_t>(shape_numel(shape)), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    require(shape_numel(shape) == static_cast<int64_t>(data.size()), errc::shape_mismatch,
            "tensor: data length " + std::to_string(data.size()) + " does not match shape " +
                shape_str(shape));
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    detail::check_finite(*n);
    return Tensor(std::move(n));
  }

  static Tensor scalar(double v) { return from({}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return node_->numel(); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& values() const { return node_->value; }
  // Mutating values is only meaningful for leaves (parameters, inputs).
  std::vector<double>& values_mut() { return node_->value; }

  const std::vector<double>& grad() const { return node_->grad; }

  double item() const {
    require(numel() == 1, errc::shape_mismatch, "item: tensor is not scalar, shape " + shape_str(shape()));
    return node_->value[0];
  }

  detail::NodePtr node() const { return node_; }

  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}

 private:
  detail::NodePtr node_;
};

namespace detail {

inline Tensor make_op(const char* op, Shape shape, std::vector<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return Tensor(std::move(n));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail(errc::shape_mismatch, std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                   " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ------------------------------------------------------------- elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out = detail::make_op("add", a.shape(), {a.node(), b.node()});
  auto* n = out.node().get();
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] + bv[i];
  detail::check_finite(*n);
  n->backward_fn = [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    if (pb.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i];
  };
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out = detail::make_op("sub", a.shape(), {a.node(), b.node()});
  auto* n = out.node().get();
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] - bv[i];
  detail::check_finite(*n);
  n->backward_fn = [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    if (pb.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
  };
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out = detail::make_op("mul", a.shape(), {a.node(), b.node()});
  auto* n = out.node().get();
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] * bv[i];
  detail::check_finite(*n);
  n->backward_fn = [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
    if (pb.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
  };
  return out;
}

inline Tensor divide(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "div");
  Tensor out = detail::make_op("div", a.shape(), {a.node(), b.node()});
  auto* n = out.node().get();
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] / bv[i];
  detail::check_finite(*n);
  n->backward_fn = [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] / pb.value[i];
    if (pb.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i)
        pb.grad[i] -= self.grad[i] * self.value[i] / pb.value[i];
  };
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out = detail::make_op("scale", a.shape(), {a.node()});
  auto* n = out.node().get();
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] * s;
  detail::check_finite(*n);
  n->backward_fn = [s](detail::Node& self) {
    auto& pa = *self.parents[0];
    if (pa.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * s;
  };
  return out;
}

inline Tensor add_scalar(const Tensor& a, double s) {
  Tensor out = detail::make_op("add_scalar", a.shape(), {a.node()});
  auto* n = out.node().get();
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] + s;
  detail::check_finite(*n);
  n->backward_fn = [](detail::Node& self) {
    auto& pa = *self.parents[0];
    if (pa.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
  };
  return out;
}

inline Tensor relu(const Tensor& a) {
  Tensor out = detail::make_op("relu", a.shape(), {a.node()});
  auto* n = out.node().get();
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) n->value[i] = av[i] > 0.0 ? av[i] : 0.0;
  detail::check_finite(*n);
  n->backward_fn = [](detail::Node& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (pa.value[i] > 0.0) pa.grad[i] += self.grad[i];
  };
  return out;
}

inline Tensor sqrt_elem(const Tensor& a) {
  Tensor out = detail::make_op("sqrt", a.shape(), {a.node()});
  auto* n = out.node().get();
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) n->value[i] = std::sqrt(av[i]);
  detail::check_finite(*n);
  n->backward_fn = [](detail::Node& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i)
      pa.grad[i] += self.grad[i] * 0.5 / self.value[i];
  };
  return out;
}

// ---------------------------------------------------------------- matmul

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, errc::shape_mismatch,
          "matmul: expected rank-2 operands, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  require(a.dim(1) == b.dim(0), errc::shape_mismatch,
          "matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), nn = b.dim(1);
  Tensor out = detail::make_op("matmul", {m, nn}, {a.node(), b.node()});
  auto* n = out.node().get();
  const double* A = a.values().data();
  const double* B = b.values().data();
  double* Y = n->value.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * nn;
      double* yrow = Y + i * nn;
      for (int64_t j = 0; j < nn; ++j) yrow[j] += av * brow[j];
    }
  detail::check_finite(*n);
  n->backward_fn = [m, k, nn](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double* G = self.grad.data();
    if (pa.requires_grad) {
      // dA = G * B^T
      const double* B = pb.value.data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = G + i * nn;
          const double* brow = B + p * nn;
          for (int64_t j = 0; j < nn; ++j) acc += grow[j] * brow[j];
          pa.grad[i * k + p] += acc;
        }
    }
    if (pb.requires_grad) {
      // dB = A^T * G
      const double* A = pa.value.data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          const double* grow = G + i * nn;
          double* brow = pb.grad.data() + p * nn;
          for (int64_t j = 0; j < nn; ++j) brow[j] += av * grow[j];
        }
    }
  };
  return out;
}

inline Tensor batched_matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 3 && b.rank() == 3, errc::shape_mismatch,
          "batched_matmul: expected rank-3 operands, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1), errc::shape_mismatch,
          "batched_matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  const int64_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), nn = b.dim(2);
  Tensor out = detail::make_op("batched_matmul", {bs, m, nn}, {a.node(), b.node()});
  auto* n = out.node().get();
  const double* A = a.values().data();
  const double* B = b.values().data();
  double* Y = n->value.data();
  for (int64_t t = 0; t < bs; ++t) {
    const double* At = A + t * m * k;
    const double* Bt = B + t * k * nn;
    double* Yt = Y + t * m * nn;
    for (int64_t i = 0; i < m; ++i)
      for (int64_t p = 0; p < k; ++p) {
        const double av = At[i * k + p];
        const double* brow = Bt + p * nn;
        double* yrow = Yt + i * nn;
        for (int64_t j = 0; j < nn; ++j) yrow[j] += av * brow[j];
      }
  }
  detail::check_finite(*n);
  n->backward_fn = [bs, m, k, nn](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double* G = self.grad.data();
    if (pa.requires_grad) {
      const double* B = pb.value.data();
      for (int64_t t = 0; t < bs; ++t) {
        const double* Gt = G + t * m * nn;
        const double* Bt = B + t * k * nn;
        double* dAt = pa.grad.data() + t * m * k;
        for (int64_t i = 0; i < m; ++i)
          for (int64_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = Gt + i * nn;
            const double* brow = Bt + p * nn;
            for (int64_t j = 0; j < nn; ++j) acc += grow[j] * brow[j];
            dAt[i * k + p] += acc;
          }
      }
    }
    if (pb.requires_grad) {
      const double* A = pa.value.data();
      for (int64_t t = 0; t < bs; ++t) {
        const double* Gt = G + t * m * nn;
        const double* At = A + t * m * k;
        double* dBt = pb.grad.data() + t * k * nn;
        for (int64_t i = 0; i < m; ++i)
          for (int64_t p = 0; p < k; ++p) {
            const double av = At[i * k + p];
            const double* grow = Gt + i * nn;
            double* brow = dBt + p * nn;
            for (int64_t j = 0; j < nn; ++j) brow[j] += av * grow[j];
          }
      }
    }
  };
  return out;
}

// -------------------------------------------------------------- reductions

inline Tensor sum_all(const Tensor& a) {
  Tensor out = detail::make_op("sum", {}, {a.node()});
  auto* n = out.node().get();
  n->value[0] = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  detail::check_finite(*n);
  n->backward_fn = [](detail::Node& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    const double g = self.grad[0];
    for (auto& gv : pa.grad) gv += g;
  };
  return out;
}

namespace detail {

// Decompose indices for axis reductions: out keeps the non-reduced axes in order.
struct ReducePlan {
  Shape out_shape;
  std::vector<int64_t> in_strides;
  std::vector<int64_t> out_stride_for_axis;  // 0 for reduced axes
  int64_t reduced_count = 1;
};

inline ReducePlan make_reduce_plan(const Shape& in, const std::vector<int>& axes) {
  ReducePlan plan;
  std::vector<bool> reduced(in.size(), false);
  for (int ax : axes) {
    require(ax >= 0 && ax < static_cast<int>(in.size()), errc::invalid_argument,
            "reduce: axis out of range");
    require(!reduced[static_cast<size_t>(ax)], errc::invalid_argument, "reduce: duplicate axis");
    reduced[static_cast<size_t>(ax)] = true;
  }
  plan.in_strides.assign(in.size(), 1);
  for (int i = static_cast<int>(in.size()) - 2; i >= 0; --i)
    plan.in_strides[static_cast<size_t>(i)] =
        plan.in_strides[static_cast<size_t>(i + 1)] * in[static_cast<size_t>(i + 1)];
  for (size_t i = 0; i < in.size(); ++i) {
    if (reduced[i])
      plan.reduced_count *= in[i];
    else
      plan.out_shape.push_back(in[i]);
  }
  // out strides per input axis (0 when reduced)
  std::vector<int64_t> out_strides(plan.out_shape.size(), 1);
  for (int i = static_cast<int>(plan.out_shape.size()) - 2; i >= 0; --i)
    out_strides[static_cast<size_t>(i)] =
        out_strides[static_cast<size_t>(i + 1)] * plan.out_shape[static_cast<size_t>(i + 1)];
  plan.out_stride_for_axis.assign(in.size(), 0);
  size_t k = 0;
  for (size_t i = 0; i < in.size(); ++i)
    if (!reduced[i]) plan.out_stride_for_axis[i] = out_strides[k++];
  return plan;
}

// Maps flat input index -> flat output index under the plan.
inline int64_t reduce_out_index(const ReducePlan& plan, const Shape& in, int64_t flat) {
  int64_t out = 0;
  for (size_t i = 0; i < in.size(); ++i) {
    const int64_t coord = (flat / plan.in_strides[i]) % in[i];
    out += coord * plan.out_stride_for_axis[i];
  }
  return out;
}

}  // namespace detail

inline Tensor sum_axes(const Tensor& a, const std::vector<int>& axes) {
  auto plan = detail::make_reduce_plan(a.shape(), axes);
  Tensor out = detail::make_op("sum_axes", plan.out_shape, {a.node()});
  auto* n = out.node().get();
  const auto& av = a.values();
  const Shape in_shape = a.shape();
  for (int64_t i = 0; i < static_cast<int64_t>(av.size()); ++i)
    n->value[static_cast<size_t>(detail::reduce_out_index(plan, in_shape, i))] += av[static_cast<size_t>(i)];
  detail::check_finite(*n);
  n->backward_fn = [plan, in_shape](detail::Node& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (int64_t i = 0; i < static_cast<int64_t>(pa.grad.size()); ++i)
      pa.grad[static_cast<size_t>(i)] +=
          self.grad[static_cast<size_t>(detail::reduce_out_index(plan, in_shape, i))];
  };
  return out;
}

inline Tensor mean_axes(const Tensor& a, const std::vector<int>& axes) {
  auto plan = detail::make_reduce_plan(a.shape(), axes);
  Tensor s = sum_axes(a, axes);
  return scale(s, 1.0 / static_cast<double>(plan.reduced_count));
}

// mean over all elements -> scalar
inline Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

inline Tensor mean_pool(const Tensor& a, const std::vector<int>& axes) { return mean_axes(a, axes); }

// ------------------------------------------------------------ shape movement

inline Tensor reshape(const Tensor& a, Shape new_shape) {
  require(shape_numel(new_shape) == a.numel(), errc::shape_mismatch,
          "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(new_shape));
  Tensor out = detail::make_op("reshape", std::move(new_shape), {a.node()});
  auto* n = out.node().get();
  n->value = a.values();
  n->backward_fn = [](detail::Node& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
  };
  return out;
}

inline Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const int r = a.rank();
  require(static_cast<int>(perm.size()) == r, errc::invalid_argument,
          "permute: axis list length mismatch");
  std::vector<bool> seen(static_cast<size_t>(r), false);
  Shape out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int p = perm[static_cast<size_t>(i)];
    require(p >= 0 && p < r && !seen[static_cast<size_t>(p)], errc::invalid_argument,
            "permute: invalid axis permutation");
    seen[static_cast<size_t>(p)] = true;
    out_shape[static_cast<size_t>(i)] = a.dim(p);
  }
  const Shape in_shape = a.shape();
  std::vector<int64_t> in_strides(static_cast<size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i)
    in_strides[static_cast<size_t>(i)] =
        in_strides[static_cast<size_t>(i + 1)] * in_shape[static_cast<size_t>(i + 1)];
  std::vector<int64_t> out_strides(static_cast<size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i)
    out_strides[static_cast<size_t>(i)] =
        out_strides[static_cast<size_t>(i + 1)] * out_shape[static_cast<size_t>(i + 1)];
  // gather map: out flat index -> in flat index
  std::vector<int64_t> src(static_cast<size_t>(a.numel()));
  for (int64_t o = 0; o < a.numel(); ++o) {
    int64_t in_flat = 0;
    for (int i = 0; i < r; ++i) {
      const int64_t coord = (o / out_strides[static_cast<size_t>(i)]) % out_shape[static_cast<size_t>(i)];
      in_flat += coord * in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    }
    src[static_cast<size_t>(o)] = in_flat;
  }
  Tensor out = detail::make_op("permute", out_shape, {a.node()});
  auto* n = out.node().get();
  const auto& av = a.values();
  for (size_t o = 0; o < src.size(); ++o) n->value[o] = av[static_cast<size_t>(src[o])];
  n->backward_fn = [src = std::move(src)](detail::Node& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (size_t o = 0; o < src.size(); ++o) pa.grad[static_cast<size_t>(src[o])] += self.grad[o];
  };
  return out;
}

inline Tensor transpose2d(const Tensor& a) { return permute(a, {1, 0}); }

// Index-select along an axis. Gradients scatter back only to selected rows.
inline Tensor gather(const Tensor& a, int axis, const std::vector<int64_t>& indices) {
  const int r = a.rank();
  require(axis >= 0 && axis < r, errc::invalid_argument, "gather: axis out of range");
  const Shape in_shape = a.shape();
  for (int64_t idx : indices)
    require(idx >= 0 && idx < in_shape[static_cast<size_t>(axis)], errc::invalid_argument,
            "gather: index out of range");
  Shape out_shape = in_shape;
  out_shape[static_cast<size_t>(axis)] = static_cast<int64_t>(indices.size());
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= in_shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= in_shape[static_cast<size_t>(i)];
  const int64_t in_axis = in_shape[static_cast<size_t>(axis)];
  const int64_t out_axis = static_cast<int64_t>(indices.size());
  Tensor out = detail::make_op("gather", out_shape, {a.node()});
  auto* n = out.node().get();
  const double* A = a.values().data();
  double* Y = n->value.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < out_axis; ++j) {
      const double* srow = A + (o * in_axis + indices[static_cast<size_t>(j)]) * inner;
      double* drow = Y + (o * out_axis + j) * inner;
      std::copy(srow, srow + inner, drow);
    }
  n->backward_fn = [indices, outer, inner, in_axis, out_axis](detail::Node& self) {
    auto& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t j = 0; j < out_axis; ++j) {
        const double* grow = self.grad.data() + (o * out_axis + j) * inner;
        double* drow = pa.grad.data() + (o * in_axis + indices[static_cast<size_t>(j)]) * inner;
        for (int64_t i = 0; i < inner; ++i) drow[i] += grow[i];
      }
  };
  return out;
}

// ------------------------------------------------------- row/col broadcasts

namespace detail {
inline void require_mat_vec(const Tensor& m, const Tensor& v, bool along_rows, const char* op) {
  require(m.rank() == 2 && v.rank() == 1, errc::shape_mismatch,
          std::string(op) + ": expected matrix and vector, got " + shape_str(m.shape()) + " and " +
              shape_str(v.shape()));
  const int64_t want = along_rows ? m.dim(0) : m.dim(1);
  require(v.dim(0) == want, errc::shape_mismatch,
          std::string(op) + ": vector length " + shape_str(v.shape()) +
              " incompatible with matrix " + shape_str(m.shape()));
}
}  // namespace detail

// y[r,c] = m[r,c] + v[c]
inline Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  detail::require_mat_vec(m, v, false, "add_rowvec");
  const int64_t R = m.dim(0), C = m.dim(1);
  Tensor out = detail::make_op("add_rowvec", {R, C}, {m.node(), v.node()});
  auto* n = out.node().get();
  const double* M = m.values().data();
  const double* V = v.values().data();
  for (int64_t r = 0; r < R; ++r)
    for (int64_t c = 0; c < C; ++c) n->value[static_cast<size_t>(r * C + c)] = M[r * C + c] + V[c];
  detail::check_finite(*n);
  n->backward_fn = [R, C](detail::Node& self) {
    auto& pm = *self.parents[0];
    auto& pv = *self.parents[1];
    if (pm.requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) pm.grad[i] += self.grad[i];
    if (pv.requires_grad)
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) pv.grad[static_cast<size_t>(c)] += self.grad[static_cast<size_t>(r * C + c)];
  };
  return out;
}

// y[r,c] = m[r,c] * v[c]
inline Tensor mul_rowvec(const Tensor& m, const Tensor& v) {
  detail::require_mat_vec(m, v, false, "mul_rowvec");
  const int64_t R = m.dim(0), C = m.dim(1);
  Tensor out = detail::make_op("mul_rowvec", {R, C}, {m.node(), v.node()});
  auto* n = out.node().get();
  const double* M = m.values().data();
  const double* V = v.values().data();
  for (int64_t r = 0; r < R; ++r)
    for (int64_t c = 0; c < C; ++c) n->value[static_cast<size_t>(r * C + c)] = M[r * C + c] * V[c];
  detail::check_finite(*n);
  n->backward_fn = [R, C](detail::Node& self) {
    auto& pm = *self.parents[0];
    auto& pv = *self.parents[1];
    if (pm.requires_grad)
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c)
          pm.grad[static_cast<size_t>(r * C + c)] +=
              self.grad[static_cast<size_t>(r * C + c)] * pv.value[static_cast<size_t>(c)];
    if (pv.requires_grad)
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c)
          pv.grad[static_cast<size_t>(c)] +=
              self.grad[static_cast<size_t>(r * C + c)] * pm.value[static_cast<size_t>(r * C + c)];
  };
  return out;
}

// y[r,c] = m[r,c] / v[c]
inline Tensor div_rowvec(const Tensor& m, const Tensor& v) {
  detail::require_mat_vec(m, v, false, "div_rowvec");
  const int64_t R = m.dim(0), C = m.dim(1);
  Tensor out = detail::make_op("div_rowvec", {R, C}, {m.node(), v.node()});
  auto* n = out.node().get();
  const double* M = m.values().data();
  const double* V = v.values().data();
  for (int64_t r = 0; r < R; ++r)
    for (int64_t c = 0; c < C; ++c) n->value[static_cast<size_t>(r * C + c)] = M[r * C + c] / V[c];
  detail::check_finite(*n);
  n->backward_fn = [R, C](detail::Node& self) {
    auto& pm = *self.parents[0];
    auto& pv = *self.parents[1];
    if (pm.requires_grad)
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c)
          pm.grad[static_cast<size_t>(r * C + c)] +=
              self.grad[static_cast<size_t>(r * C + c)] / pv.value[static_cast<size_t>(c)];
    if (pv.requires_grad)
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c)
          pv.grad[static_cast<size_t>(c)] -= self.grad[static_cast<size_t>(r * C + c)] *
                                             self.value[static_cast<size_t>(r * C + c)] /
                                             pv.value[static_cast<size_t>(c)];
  };
  return out;
}

// y[r,c] = m[r,c] / v[r]
inline Tensor div_colvec(const Tensor& m, const Tensor& v) {
  detail::require_mat_vec(m, v, true, "div_colvec");
  const int64_t R = m.dim(0), C = m.dim(1);
  Tensor out = detail::make_op("div_colvec", {R, C}, {m.node(), v.node()});
  auto* n = out.node().get();
  const double* M = m.values().data();
  const double* V = v.values().data();
  for (int64_t r = 0; r < R; ++r)
    for (int64_t c = 0; c < C; ++c) n->value[static_cast<size_t>(r * C + c)] = M[r * C + c] / V[r];
  detail::check_finite(*n);
  n->backward_fn = [R, C](detail::Node& self) {
    auto& pm = *self.parents[0];
    auto& pv = *self.parents[1];
    if (pm.requires_grad)
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c)
          pm.grad[static_cast<size_t>(r * C + c)] +=
              self.grad[static_cast<size_t>(r * C + c)] / pv.value[static_cast<size_t>(r)];
    if (pv.requires_grad)
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c)
          pv.grad[static_cast<size_t>(r)] -= self.grad[static_cast<size_t>(r * C + c)] *
                                             self.value[static_cast<size_t>(r * C + c)] /
                                             pv.value[static_cast<size_t>(r)];
  };
  return out;
}

// --------------------------------------------------------------- temporal conv

// x: [B, Cin, T, V], w: [Cout, Cin, K] (K odd), bias: [Cout].
// Convolution along the frame axis, independently per joint, with symmetric
// zero padding so T is preserved at stride 1.
inline Tensor temporal_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require(x.rank() == 4, errc::shape_mismatch,
          "temporal_conv1d: input must be [B,C,T,V], got " + shape_str(x.shape()));
  require(w.rank() == 3, errc::shape_mismatch,
          "temporal_conv1d: weight must be [Cout,Cin,K], got " + shape_str(w.shape()));
  require(w.dim(2) % 2 == 1, errc::invalid_argument, "temporal_conv1d: kernel size must be odd");
  require(w.dim(1) == x.dim(1), errc::shape_mismatch,
          "temporal_conv1d: channel mismatch, input " + shape_str(x.shape()) + " weight " +
              shape_str(w.shape()));
  require(bias.rank() == 1 && bias.dim(0) == w.dim(0), errc::shape_mismatch,
          "temporal_conv1d: bias shape " + shape_str(bias.shape()) + " incompatible with weight " +
              shape_str(w.shape()));
  const int64_t B = x.dim(0), Cin = x.dim(1), T = x.dim(2), V = x.dim(3);
  const int64_t Cout = w.dim(0), K = w.dim(2), pad = (K - 1) / 2;
  Tensor out = detail::make_op("temporal_conv1d", {B, Cout, T, V}, {x.node(), w.node(), bias.node()});
  auto* n = out.node().get();
  const double* X = x.values().data();
  const double* W = w.values().data();
  const double* Bv = bias.values().data();
  double* Y = n->value.data();
  const int64_t plane = T * V;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co) {
      double* yp = Y + (b * Cout + co) * plane;
      const double bv = Bv[co];
      for (int64_t i = 0; i < plane; ++i) yp[i] = bv;
      for (int64_t ci = 0; ci < Cin; ++ci) {
        const double* xp = X + (b * Cin + ci) * plane;
        for (int64_t dk = 0; dk < K; ++dk) {
          const double wv = W[(co * Cin + ci) * K + dk];
          const int64_t shift = dk - pad;  // y[t] += w * x[t + shift]
          const int64_t t0 = std::max<int64_t>(0, -shift);
          const int64_t t1 = std::min<int64_t>(T, T - shift);
          if (t0 >= t1) continue;
          const double* xs = xp + (t0 + shift) * V;
          double* yd = yp + t0 * V;
          const int64_t len = (t1 - t0) * V;
          for (int64_t i = 0; i < len; ++i) yd[i] += wv * xs[i];
        }
      }
    }
  detail::check_finite(*n);
  n->backward_fn = [B, Cin, Cout, T, V, K, pad](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    const double* G = self.grad.data();
    const int64_t plane = T * V;
    if (pb.requires_grad) {
      for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Cout; ++co) {
          const double* gp = G + (b * Cout + co) * plane;
          double acc = 0.0;
          for (int64_t i = 0; i < plane; ++i) acc += gp[i];
          pb.grad[static_cast<size_t>(co)] += acc;
        }
    }
    if (px.requires_grad) {
      const double* W = pw.value.data();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Cout; ++co) {
          const double* gp = G + (b * Cout + co) * plane;
          for (int64_t ci = 0; ci < Cin; ++ci) {
            double* dxp = px.grad.data() + (b * Cin + ci) * plane;
            for (int64_t dk = 0; dk < K; ++dk) {
              const double wv = W[(co * Cin + ci) * K + dk];
              const int64_t shift = dk - pad;
              const int64_t t0 = std::max<int64_t>(0, -shift);
              const int64_t t1 = std::min<int64_t>(T, T - shift);
              if (t0 >= t1) continue;
              double* xd = dxp + (t0 + shift) * V;
              const double* gs = gp + t0 * V;
              const int64_t len = (t1 - t0) * V;
              for (int64_t i = 0; i < len; ++i) xd[i] += wv * gs[i];
            }
          }
        }
    }
    if (pw.requires_grad) {
      const double* X = px.value.data();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Cout; ++co) {
          const double* gp = G + (b * Cout + co) * plane;
          for (int64_t ci = 0; ci < Cin; ++ci) {
            const double* xp = X + (b * Cin + ci) * plane;
            for (int64_t dk = 0; dk < K; ++dk) {
              const int64_t shift = dk - pad;
              const int64_t t0 = std::max<int64_t>(0, -shift);
              const int64_t t1 = std::min<int64_t>(T, T - shift);
              if (t0 >= t1) continue;
              const double* xs = xp + (t0 + shift) * V;
              const double* gs = gp + t0 * V;
              const int64_t len = (t1 - t0) * V;
              double acc = 0.0;
              for (int64_t i = 0; i < len; ++i) acc += xs[i] * gs[i];
              pw.grad[static_cast<size_t>((co * Cin + ci) * K + dk)] += acc;
            }
          }
        }
    }
  };
  return out;
}

// --------------------------------------------------------------- batch norm

struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;
};

// Normalizes per channel (axis 1) over all remaining axes. Training mode uses
// biased batch statistics and folds them into the running stats with the given
// momentum; eval mode applies the running stats. Training requires batch >= 2.
inline Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         BatchNormStats& stats, bool training, double momentum = 0.1,
                         double eps = 1e-5) {
  require(x.rank() >= 2, errc::shape_mismatch,
          "batch_norm: input rank must be >= 2, got " + shape_str(x.shape()));
  const int64_t C = x.dim(1);
  require(gamma.rank() == 1 && gamma.dim(0) == C && beta.rank() == 1 && beta.dim(0) == C,
          errc::shape_mismatch, "batch_norm: gamma/beta must be length-" + std::to_string(C));
  require(static_cast<int64_t>(stats.mean.size()) == C &&
              static_cast<int64_t>(stats.var.size()) == C,
          errc::shape_mismatch, "batch_norm: running stats size mismatch");
  if (training)
    require(x.dim(0) >= 2, errc::invalid_argument,
            "batch_norm: training mode requires batch >= 2, got batch " + std::to_string(x.dim(0)));

  const int64_t B = x.dim(0);
  int64_t inner = 1;
  for (int i = 2; i < x.rank(); ++i) inner *= x.dim(i);
  const int64_t m = B * inner;  // elements per channel

  Tensor out = detail::make_op("batch_norm", x.shape(), {x.node(), gamma.node(), beta.node()});
  auto* n = out.node().get();
  const double* X = x.values().data();
  const double* Gm = gamma.values().data();
  const double* Bt = beta.values().data();
  double* Y = n->value.data();

  std::vector<double> mu(static_cast<size_t>(C), 0.0), var(static_cast<size_t>(C), 0.0);
  if (training) {
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c) {
        const double* xp = X + (b * C + c) * inner;
        double acc = 0.0;
        for (int64_t i = 0; i < inner; ++i) acc += xp[i];
        mu[static_cast<size_t>(c)] += acc;
      }
    for (int64_t c = 0; c < C; ++c) mu[static_cast<size_t>(c)] /= static_cast<double>(m);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c) {
        const double* xp = X + (b * C + c) * inner;
        const double mc = mu[static_cast<size_t>(c)];
        double acc = 0.0;
        for (int64_t i = 0; i < inner; ++i) {
          const double d = xp[i] - mc;
          acc += d * d;
        }
        var[static_cast<size_t>(c)] += acc;
      }
    for (int64_t c = 0; c < C; ++c) var[static_cast<size_t>(c)] /= static_cast<double>(m);
    for (int64_t c = 0; c < C; ++c) {
      stats.mean[static_cast<size_t>(c)] =
          (1.0 - momentum) * stats.mean[static_cast<size_t>(c)] + momentum * mu[static_cast<size_t>(c)];
      stats.var[static_cast<size_t>(c)] =
          (1.0 - momentum) * stats.var[static_cast<size_t>(c)] + momentum * var[static_cast<size_t>(c)];
    }
  } else {
    mu = stats.mean;
    var = stats.var;
  }

  std::vector<double> inv_std(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c)
    inv_std[static_cast<size_t>(c)] = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);

  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const double* xp = X + (b * C + c) * inner;
      double* yp = Y + (b * C + c) * inner;
      const double mc = mu[static_cast<size_t>(c)], is = inv_std[static_cast<size_t>(c)];
      const double g = Gm[c], bt = Bt[c];
      for (int64_t i = 0; i < inner; ++i) yp[i] = g * (xp[i] - mc) * is + bt;
    }
  detail::check_finite(*n);

  n->backward_fn = [B, C, inner, m, training, mu = std::move(mu),
                    inv_std = std::move(inv_std)](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    const double* X = px.value.data();
    const double* G = self.grad.data();
    const double* Gm = pg.value.data();

    for (int64_t c = 0; c < C; ++c) {
      const double mc = mu[static_cast<size_t>(c)], is = inv_std[static_cast<size_t>(c)];
      double sum_g = 0.0, sum_gx = 0.0;  // sums of dy and dy*xhat over the channel
      for (int64_t b = 0; b < B; ++b) {
        const double* xp = X + (b * C + c) * inner;
        const double* gp = G + (b * C + c) * inner;
        for (int64_t i = 0; i < inner; ++i) {
          sum_g += gp[i];
          sum_gx += gp[i] * (xp[i] - mc) * is;
        }
      }
      if (pg.requires_grad) pg.grad[static_cast<size_t>(c)] += sum_gx;
      if (pb.requires_grad) pb.grad[static_cast<size_t>(c)] += sum_g;
      if (px.requires_grad) {
        const double g = Gm[c];
        if (training) {
          const double inv_m = 1.0 / static_cast<double>(m);
          for (int64_t b = 0; b < B; ++b) {
            const double* xp = X + (b * C + c) * inner;
            const double* gp = G + (b * C + c) * inner;
            double* dxp = px.grad.data() + (b * C + c) * inner;
            for (int64_t i = 0; i < inner; ++i) {
              const double xhat = (xp[i] - mc) * is;
              dxp[i] += g * is * (gp[i] - inv_m * sum_g - inv_m * xhat * sum_gx);
            }
          }
        } else {
          for (int64_t b = 0; b < B; ++b) {
            const double* gp = G + (b * C + c) * inner;
            double* dxp = px.grad.data() + (b * C + c) * inner;
            for (int64_t i = 0; i < inner; ++i) dxp[i] += g * is * gp[i];
          }
        }
      }
    }
  };
  return out;
}

// ------------------------------------------------------ classification loss

// Mean cross-entropy over the batch with a numerically stable log-softmax.
inline Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require(logits.rank() == 2, errc::shape_mismatch,
          "softmax_cross_entropy: logits must be [B,K], got " + shape_str(logits.shape()));
  const int64_t B = logits.dim(0), K = logits.dim(1);
  require(static_cast<int64_t>(labels.size()) == B, errc::shape_mismatch,
          "softmax_cross_entropy: label count mismatch");
  for (int y : labels)
    require(y >= 0 && y < K, errc::invalid_argument, "softmax_cross_entropy: label out of range");
  Tensor out = detail::make_op("softmax_cross_entropy", {}, {logits.node()});
  auto* n = out.node().get();
  const double* L = logits.values().data();
  std::vector<double> probs(static_cast<size_t>(B * K));
  double total = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    const double* row = L + b * K;
    double mx = row[0];
    for (int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    double z = 0.0;
    for (int64_t k = 0; k < K; ++k) z += std::exp(row[k] - mx);
    const double logz = std::log(z) + mx;
    for (int64_t k = 0; k < K; ++k) probs[static_cast<size_t>(b * K + k)] = std::exp(row[k] - logz);
    total += logz - row[labels[static_cast<size_t>(b)]];
  }
  n->value[0] = total / static_cast<double>(B);
  detail::check_finite(*n);
  n->backward_fn = [B, K, labels, probs = std::move(probs)](detail::Node& self) {
    auto& pl = *self.parents[0];
    if (!pl.requires_grad) return;
    const double g = self.grad[0] / static_cast<double>(B);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t k = 0; k < K; ++k) {
        double d = probs[static_cast<size_t>(b * K + k)];
        if (k == labels[static_cast<size_t>(b)]) d -= 1.0;
        pl.grad[static_cast<size_t>(b * K + k)] += g * d;
      }
  };
  return out;
}

// ------------------------------------------------------------------ backward

// Reverse-mode sweep from a scalar root. Visits each reachable node exactly
// once, in reverse topological order.
inline void backward(const Tensor& root) {
  require(root.numel() == 1, errc::invalid_argument,
          "backward: root must be scalar, got shape " + shape_str(root.shape()));
  using detail::Node;
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  // iterative post-order DFS
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* node : topo) node->grad.assign(node->value.size(), 0.0);
  root.node()->grad[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

}  // namespace pstl
