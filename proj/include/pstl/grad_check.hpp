#pragma once

// Central finite-difference verification of reverse-mode gradients.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pstl/tensor.hpp"

namespace pstl {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_param;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_err <= tolerance; }
};

// fn must rebuild the scalar loss from the *current* values of the given leaf
// parameter tensors; it is re-evaluated with perturbed entries. The relative
// error denominator is floored: entries whose gradient magnitude sits below
// the floor are held to an absolute criterion of floor*tolerance, which is
// what central differences can actually resolve at the default epsilon.
inline GradCheckReport grad_check(const std::function<Tensor()>& fn,
                                  const std::vector<std::pair<std::string, Tensor>>& params,
                                  double epsilon = 1e-5, double tolerance = 1e-4,
                                  double denom_floor = 1e-4) {
  Tensor loss = fn();
  require(loss.numel() == 1, errc::invalid_argument,
          "grad_check: function output must be scalar, got shape " + shape_str(loss.shape()));
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, p] : params) {
    require(p.requires_grad(), errc::invalid_argument,
            "grad_check: parameter '" + name + "' does not require grad");
    require(!p.grad().empty(), errc::invalid_argument,
            "grad_check: parameter '" + name + "' received no gradient");
    analytic.push_back(p.grad());
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    GradCheckEntry entry;
    entry.name = params[pi].first;
    auto& vals = p.values_mut();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + epsilon;
      const double fp = fn().item();
      vals[i] = saved - epsilon;
      const double fm = fn().item();
      vals[i] = saved;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double an = analytic[pi][i];
      const double denom = std::max({std::abs(an), std::abs(numeric), denom_floor});
      const double rel = std::abs(an - numeric) / denom;
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_index = static_cast<int64_t>(i);
        entry.analytic = an;
        entry.numeric = numeric;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.per_param.push_back(std::move(entry));
  }
  return report;
}

}  // namespace pstl
