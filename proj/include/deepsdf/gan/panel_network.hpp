#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/seed.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/data/panel.hpp"
#include "deepsdf/netcore/adam.hpp"
#include "deepsdf/netcore/feedforward.hpp"
#include "deepsdf/netcore/lstm.hpp"

namespace deepsdf::gan {

struct PanelNetworkSpec {
  std::size_t num_chars = 1;
  std::size_t num_macro = 0;  // 0 disables the recurrent encoder
  std::vector<std::size_t> hidden;
  std::size_t states = 4;
  std::size_t outputs = 1;
  double keep_prob = 1.0;

  bool recurrent() const { return num_macro > 0 && states > 0; }
  std::size_t ffn_inputs() const { return num_chars + (recurrent() ? states : 0); }
  bool operator==(const PanelNetworkSpec&) const = default;
};

struct PanelNetworkTape {
  netcore::FeedforwardTape ffn;
  netcore::LstmTape lstm;
  std::size_t view_begin = 0;  // global month index of the view's first month
};

struct PanelGradient {
  Vector ffn;
  Vector lstm;
};

/**
 * Feedforward map of [I_{t,i}; h_t] for every observation of a panel view,
 * where h_t are LSTM states encoded from the macro history up to month t.
 * Without macro inputs the network sees characteristics only.
 */
class PanelNetwork {
 public:
  PanelNetwork() = default;
  PanelNetwork(PanelNetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    ffn_ = netcore::Feedforward({spec_.ffn_inputs(), spec_.hidden, spec_.outputs, spec_.keep_prob});
    ffn_params_ = ffn_.init_params(mix_seed(seed, 11));
    if (spec_.recurrent()) {
      lstm_ = netcore::Lstm({spec_.num_macro, spec_.states});
      lstm_params_ = lstm_.init_params(mix_seed(seed, 12));
    }
  }

  const PanelNetworkSpec& spec() const { return spec_; }
  const netcore::Feedforward& ffn() const { return ffn_; }
  const netcore::Lstm& lstm() const { return lstm_; }
  netcore::NetworkParams& ffn_params() { return ffn_params_; }
  const netcore::NetworkParams& ffn_params() const { return ffn_params_; }
  netcore::NetworkParams& lstm_params() { return lstm_params_; }
  const netcore::NetworkParams& lstm_params() const { return lstm_params_; }

  void check_panel(const data::PanelDataset& view) const {
    if (view.num_chars() != spec_.num_chars) {
      throw DimensionError("network expects " + std::to_string(spec_.num_chars) + " characteristics, panel has " +
                           std::to_string(view.num_chars()));
    }
    if (spec_.recurrent() && view.num_macro() != spec_.num_macro) {
      throw DimensionError("network expects " + std::to_string(spec_.num_macro) + " macro series, panel has " +
                           std::to_string(view.num_macro()));
    }
  }

  /// Macro states for every month of the view (months x states); empty without macro.
  Matrix states(const data::PanelDataset& view, netcore::LstmTape* tape = nullptr) const {
    if (!spec_.recurrent()) return Matrix(static_cast<Eigen::Index>(view.num_months()), 0);
    Matrix all = lstm_.encode(lstm_params_, view.macro_history(), tape);
    return all.bottomRows(static_cast<Eigen::Index>(view.num_months()));
  }

  Matrix inputs(const data::PanelDataset& view, const Matrix& states) const {
    const auto n = static_cast<Eigen::Index>(view.num_obs());
    const auto p = static_cast<Eigen::Index>(spec_.num_chars);
    Matrix x(n, static_cast<Eigen::Index>(spec_.ffn_inputs()));
    x.leftCols(p) = view.chars();
    if (spec_.recurrent()) {
      const std::size_t base = view.first_obs();
      for (std::size_t t = 0; t < view.num_months(); ++t) {
        const auto lo = static_cast<Eigen::Index>(view.obs_begin(t) - base);
        const auto len = static_cast<Eigen::Index>(view.assets_in_month(t));
        x.block(lo, p, len, states.cols()).rowwise() = states.row(static_cast<Eigen::Index>(t));
      }
    }
    return x;
  }

  Matrix forward(const data::PanelDataset& view, Mode mode = Mode::eval, Rng* rng = nullptr,
                 PanelNetworkTape* tape = nullptr) const {
    check_panel(view);
    Matrix h = states(view, tape ? &tape->lstm : nullptr);
    if (tape) tape->view_begin = view.first_month_index();
    if (tape) {
      tape->ffn.input = inputs(view, h);
      return ffn_.forward(ffn_params_, tape->ffn.input, mode, rng, &tape->ffn);
    }
    return ffn_.forward(ffn_params_, inputs(view, h), mode, rng);
  }

  /**
   * Accumulates parameter gradients for d(loss)/d(outputs) and returns
   * d(loss)/d(FFN inputs) per observation (n x ffn_inputs).
   */
  Matrix backward(const data::PanelDataset& view, const PanelNetworkTape& tape, const Matrix& d_out,
                  PanelGradient& grad) const {
    Matrix dx = ffn_.backward(ffn_params_, tape.ffn, d_out, grad.ffn);
    if (spec_.recurrent()) {
      const auto p = static_cast<Eigen::Index>(spec_.num_chars);
      const auto H = static_cast<Eigen::Index>(spec_.states);
      Matrix d_states = Matrix::Zero(tape.lstm.state.rows(), H);
      const std::size_t base = view.first_obs();
      const auto offset = static_cast<Eigen::Index>(tape.view_begin);
      for (std::size_t t = 0; t < view.num_months(); ++t) {
        const auto lo = static_cast<Eigen::Index>(view.obs_begin(t) - base);
        const auto len = static_cast<Eigen::Index>(view.assets_in_month(t));
        d_states.row(offset + static_cast<Eigen::Index>(t)) = dx.block(lo, p, len, H).colwise().sum();
      }
      lstm_.backward(lstm_params_, tape.lstm, d_states, grad.lstm);
    }
    return dx;
  }

  PanelGradient zero_gradient() const {
    PanelGradient g;
    g.ffn = Vector::Zero(static_cast<Eigen::Index>(ffn_params_.size()));
    g.lstm = Vector::Zero(static_cast<Eigen::Index>(lstm_params_.size()));
    return g;
  }

 private:
  PanelNetworkSpec spec_;
  netcore::Feedforward ffn_;
  netcore::Lstm lstm_;
  netcore::NetworkParams ffn_params_;
  netcore::NetworkParams lstm_params_;
};

/// Adam state for both parameter groups of one network.
struct PanelOptimizer {
  netcore::AdamState ffn;
  netcore::AdamState lstm;

  PanelOptimizer() = default;
  PanelOptimizer(const PanelNetwork& net, double lr)
      : ffn(net.ffn_params().size(), lr), lstm(net.lstm_params().size(), lr) {}

  void step(PanelNetwork& net, const PanelGradient& grad, double sign = 1.0) {
    netcore::adam_update(ffn, net.ffn_params(), sign * grad.ffn);
    if (net.spec().recurrent()) netcore::adam_update(lstm, net.lstm_params(), sign * grad.lstm);
  }
};

}  // namespace deepsdf::gan
