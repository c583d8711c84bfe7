#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/netcore/params.hpp"

namespace deepsdf::netcore {

struct AdamState {
  std::size_t step = 0;
  Vector m;
  Vector v;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double learning_rate) : m(Vector::Zero(static_cast<Eigen::Index>(n))), v(m), lr(learning_rate) {}
};

/// Bias-corrected Adam step. Throws before touching params if grad has a non-finite entry.
inline void adam_update(AdamState& state, NetworkParams& params, const Vector& grad) {
  const Eigen::Index n = static_cast<Eigen::Index>(params.size());
  if (state.m.size() != n || state.v.size() != n || grad.size() != n) {
    throw DimensionError("adam state/gradient sized " + std::to_string(grad.size()) + " for " + std::to_string(n) +
                         " parameters");
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!std::isfinite(grad[k])) {
      throw NumericalError("adam: non-finite gradient at " + params.locate(static_cast<std::size_t>(k)));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
  auto& theta = params.values();
  theta.array() -= state.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

}  // namespace deepsdf::netcore
