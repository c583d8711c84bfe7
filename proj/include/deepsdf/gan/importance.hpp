#pragma once

#include <string>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/data/panel.hpp"
#include "deepsdf/gan/model.hpp"
#include "deepsdf/gan/panel_network.hpp"

namespace deepsdf::gan {

/// d omega_{t,i} / d input for every observation of a view.
struct InputGradients {
  Matrix chars;  // observations x characteristics
  Matrix macro;  // observations x macro series; empty without a recurrent encoder
};

/**
 * Per-observation derivatives of omega = out / N_t. Macro derivatives go
 * through the LSTM to the same month's macro inputs, holding earlier states
 * fixed.
 */
inline InputGradients input_gradients(const PanelNetwork& net, const data::PanelDataset& view) {
  PanelNetworkTape tape;
  net.forward(view, Mode::eval, nullptr, &tape);
  const auto n = static_cast<Eigen::Index>(view.num_obs());
  Matrix d_out = scale_by_breadth(view, Vector::Ones(n));
  Vector scratch;
  Matrix dx = net.ffn().backward(net.ffn_params(), tape.ffn, d_out, scratch);
  const auto p = static_cast<Eigen::Index>(net.spec().num_chars);
  InputGradients g;
  g.chars = dx.leftCols(p);
  if (net.spec().recurrent()) {
    const auto H = static_cast<Eigen::Index>(net.spec().states);
    const auto q = static_cast<Eigen::Index>(net.spec().num_macro);
    g.macro.resize(n, q);
    const std::size_t base = view.first_obs();
    for (std::size_t t = 0; t < view.num_months(); ++t) {
      Matrix jac = net.lstm().input_jacobian(net.lstm_params(), tape.lstm,
                                             static_cast<Eigen::Index>(tape.view_begin + t));
      const auto lo = static_cast<Eigen::Index>(view.obs_begin(t) - base);
      const auto len = static_cast<Eigen::Index>(view.assets_in_month(t));
      g.macro.middleRows(lo, len).noalias() = dx.block(lo, p, len, H) * jac;
    }
  }
  return g;
}

struct Importance {
  std::vector<std::string> names;
  Vector chars;  // sums to one
  Vector macro;  // sums to one when any macro gradient is non-zero; empty without macro
};

inline Vector normalize_sum(const Vector& v, const std::string& what) {
  const double s = v.sum();
  if (!(s > 0.0)) throw NumericalError("variable importance: all-zero " + what + " gradients");
  return v / s;
}

inline Importance importance_from_gradients(const InputGradients& g, const data::PanelDataset& view) {
  Importance imp;
  imp.chars = normalize_sum(g.chars.cwiseAbs().colwise().sum().transpose(), "characteristic");
  if (g.macro.size() > 0) {
    Vector m = g.macro.cwiseAbs().colwise().sum().transpose();
    imp.macro = m.sum() > 0.0 ? Vector(m / m.sum()) : m;
  }
  imp.names = view.storage().char_names;
  return imp;
}

/// Average absolute derivative of the weight with respect to each input.
inline Importance variable_importance(const SdfModel& model, const data::PanelDataset& view) {
  return importance_from_gradients(input_gradients(model.network(), view), view);
}

/// The ensemble weight is the member mean, so its derivative is the mean of member derivatives.
inline Importance variable_importance(const EnsembleModel& model, const data::PanelDataset& view) {
  InputGradients sum = input_gradients(model.members().front().network(), view);
  for (std::size_t k = 1; k < model.members().size(); ++k) {
    InputGradients g = input_gradients(model.members()[k].network(), view);
    sum.chars += g.chars;
    if (sum.macro.size() > 0) sum.macro += g.macro;
  }
  return importance_from_gradients(sum, view);
}

}  // namespace deepsdf::gan
