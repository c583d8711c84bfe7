#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/seed.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/data/panel.hpp"
#include "deepsdf/gan/panel_network.hpp"

namespace deepsdf::baselines {

/// (1/T) sum_t (1/N_t) sum_i (y - yhat)^2 over the months of a view.
inline double panel_mse(const data::PanelDataset& view, const Vector& pred, const Vector& target,
                        Vector* d_pred = nullptr) {
  if (pred.size() != target.size() || static_cast<std::size_t>(pred.size()) != view.num_obs()) {
    throw DimensionError("panel_mse: prediction, target and panel are misaligned");
  }
  const double T = static_cast<double>(view.num_months());
  const std::size_t base = view.first_obs();
  if (d_pred) d_pred->resize(pred.size());
  double loss = 0.0;
  for (std::size_t t = 0; t < view.num_months(); ++t) {
    const auto lo = static_cast<Eigen::Index>(view.obs_begin(t) - base);
    const auto len = static_cast<Eigen::Index>(view.assets_in_month(t));
    const auto nt = static_cast<double>(len);
    auto err = pred.segment(lo, len) - target.segment(lo, len);
    loss += err.squaredNorm() / nt;
    if (d_pred) d_pred->segment(lo, len) = 2.0 * err / (T * nt);
  }
  return loss / T;
}

struct RegressionSchedule {
  double lr = 1e-3;
  std::size_t max_epochs = 256;
  std::size_t patience = 0;  // epochs without validation improvement before stopping; 0 disables

  void validate() const {
    if (!(lr > 0.0)) throw UsageError("learning rate must be positive");
    if (max_epochs < 1) throw UsageError("regression needs at least one epoch");
  }
};

struct RegressionFit {
  gan::PanelNetwork net;
  std::vector<double> train_loss;  // train-mode loss per epoch
  std::vector<double> valid_loss;  // eval-mode validation loss per epoch (when a validation target is given)
  std::size_t best_epoch = 0;
};

/**
 * Full-batch Adam on the panel MSE. With a validation target the parameters
 * from the epoch with the lowest validation loss are returned.
 */
inline RegressionFit fit_panel_regression(const data::PanelDataset& train, const Vector& y_train,
                                          const data::PanelDataset* valid, const Vector* y_valid,
                                          const gan::PanelNetworkSpec& spec, const RegressionSchedule& schedule,
                                          std::uint64_t seed) {
  schedule.validate();
  if (spec.outputs != 1) throw DimensionError("panel regression has a single output");
  if (static_cast<std::size_t>(y_train.size()) != train.num_obs()) throw DimensionError("regression target length");
  const bool use_valid = valid && y_valid && !valid->empty();
  RegressionFit fit;
  fit.net = gan::PanelNetwork(spec, mix_seed(seed, 301));
  gan::PanelOptimizer opt(fit.net, schedule.lr);
  Rng rng(mix_seed(seed, 302));
  gan::PanelNetworkTape tape;
  Vector d_pred;
  double best = std::numeric_limits<double>::infinity();
  gan::PanelNetwork best_net = fit.net;
  std::size_t since_best = 0;
  for (std::size_t e = 0; e < schedule.max_epochs; ++e) {
    Matrix out = fit.net.forward(train, Mode::train, &rng, &tape);
    const double loss = panel_mse(train, out.col(0), y_train, &d_pred);
    if (!std::isfinite(loss)) throw NumericalError("regression diverged: non-finite loss at epoch " + std::to_string(e));
    fit.train_loss.push_back(loss);
    gan::PanelGradient grad = fit.net.zero_gradient();
    fit.net.backward(train, tape, Matrix(d_pred), grad);
    opt.step(fit.net, grad);
    if (use_valid) {
      const double vl = panel_mse(*valid, fit.net.forward(*valid, Mode::eval).col(0), *y_valid);
      fit.valid_loss.push_back(vl);
      if (vl < best) {
        best = vl;
        best_net = fit.net;
        fit.best_epoch = e;
        since_best = 0;
      } else if (schedule.patience > 0 && ++since_best >= schedule.patience) {
        break;
      }
    } else {
      fit.best_epoch = e;
    }
  }
  if (use_valid) fit.net = std::move(best_net);
  return fit;
}

}  // namespace deepsdf::baselines
