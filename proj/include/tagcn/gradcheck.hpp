#pragma once

#include <cmath>
#include <vector>

#include "tagcn/tensor.hpp"

namespace tagcn {

// Compares reverse-mode gradients against central finite differences for
// every coordinate of every listed leaf. `f` must be a pure function of the
// leaves' current values returning a scalar tensor; it is re-evaluated with
// perturbed coordinates, so it must not mutate shared state (batch norm goes
// through its no-update mode).
//
// Returns max over coordinates of |analytic - numeric| / max(|analytic|,
// |numeric|, floor); the floor keeps the ratio meaningful where both sides
// are near zero.
//
// Piecewise-smooth networks (relu, hard frame selection) can land the
// evaluation point within one step of a kink, where central differences
// measure the wrong slope no matter how correct the gradient is. With
// refine_threshold > 0, a coordinate whose error exceeds the threshold is
// re-estimated at step/8: the kink leaves the shrunken window and the
// artifact vanishes, while a genuinely wrong gradient stays wrong at any
// step size.
template <typename F>
double grad_check(F&& f, const std::vector<Tensor>& leaves, double step = 1e-5,
                  double denom_floor = 1e-3, double refine_threshold = 0.0) {
  for (const auto& l : leaves) {
    l.node()->requires_grad = true;
    l.node()->grad.resize(0);
  }
  Tensor loss = f();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& l : leaves) {
    const auto& g = l.grad();
    analytic.emplace_back(g.data(), g.data() + g.size());
  }

  double max_rel = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].node()->value;
    auto numeric_at = [&](Index i, double h) {
      const double orig = vals(i);
      vals(i) = orig + h;
      const double f_plus = f().item();
      vals(i) = orig - h;
      const double f_minus = f().item();
      vals(i) = orig;
      return (f_plus - f_minus) / (2.0 * h);
    };
    for (Index i = 0; i < vals.size(); ++i) {
      const double a = analytic[li][static_cast<std::size_t>(i)];
      auto rel_err = [&](double numeric) {
        const double denom = std::max({std::abs(a), std::abs(numeric), denom_floor});
        return std::abs(a - numeric) / denom;
      };
      double rel = rel_err(numeric_at(i, step));
      if (refine_threshold > 0.0 && rel > refine_threshold)
        rel = rel_err(numeric_at(i, step / 8.0));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace tagcn
