#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/seed.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/data/panel.hpp"
#include "deepsdf/gan/loss.hpp"
#include "deepsdf/gan/model.hpp"
#include "deepsdf/gan/panel_network.hpp"

namespace deepsdf::gan {

struct PhaseLog {
  std::string name;
  std::vector<double> loss;  // train-mode loss per epoch
  double start_eval = 0.0;   // eval-mode loss before the phase
  double end_eval = 0.0;     // eval-mode loss after the phase
};

struct GanTrainResult {
  SdfModel sdf;
  SdfModel after_unconditional;  // snapshot at the end of phase A
  ConditionalModel cond;
  std::vector<PhaseLog> phases;
};

/// Optional per-epoch callback (phase name, epoch, loss).
using EpochCallback = std::function<void(const std::string&, std::size_t, double)>;

namespace detail {

inline void check_loss(double loss, const std::string& phase, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw NumericalError("training diverged: non-finite loss in " + phase + " at epoch " + std::to_string(epoch));
  }
}

inline Matrix unconditional_moments(const data::PanelDataset& view) {
  return Matrix::Ones(static_cast<Eigen::Index>(view.num_obs()), 1);
}

/// Minimizes the pricing loss over the SDF network for a fixed instrument matrix.
inline void fit_sdf(PanelNetwork& net, const data::PanelDataset& train, const Matrix& g, std::size_t epochs, double lr,
                    Rng& rng, PhaseLog& log, const EpochCallback& cb) {
  PanelOptimizer opt(net, lr);
  PanelNetworkTape tape;
  LossGradient lg;
  for (std::size_t e = 0; e < epochs; ++e) {
    Matrix out = net.forward(train, Mode::train, &rng, &tape);
    Vector omega = scale_by_breadth(train, out.col(0));
    const double loss = gan_loss(train, omega, g, &lg);
    check_loss(loss, log.name, e);
    log.loss.push_back(loss);
    if (cb) cb(log.name, e, loss);
    Matrix d_out = scale_by_breadth(train, lg.d_omega);
    PanelGradient grad = net.zero_gradient();
    net.backward(train, tape, d_out, grad);
    opt.step(net, grad);
  }
}

inline double eval_loss(const PanelNetwork& sdf, const PanelNetwork* cond, const data::PanelDataset& view) {
  Vector omega = scale_by_breadth(view, sdf.forward(view, Mode::eval).col(0));
  Matrix g = cond ? cond->forward(view, Mode::eval) : unconditional_moments(view);
  return gan_loss(view, omega, g);
}

}  // namespace detail

/**
 * Three-phase adversarial estimation on the training split:
 *   A. minimize the loss with g = 1 over the SDF network;
 *   B. SDF fixed, maximize the loss over the conditional network;
 *   C. conditional network fixed, minimize the loss over the SDF network.
 * `unconditional_only` stops after phase A.
 */
inline GanTrainResult train_gan(const data::Splits& splits, const GanHyperParams& hp, bool unconditional_only = false,
                                const EpochCallback& cb = {}) {
  const data::PanelDataset& train = splits.train;
  if (train.empty()) throw UsageError("train_gan: empty training split");
  GanTrainResult res;
  PanelNetwork sdf(hp.sdf_spec(train), mix_seed(hp.seed, 101));

  Rng rng_a(mix_seed(hp.seed, 201));
  PhaseLog a{"unconditional", {}, 0.0, 0.0};
  a.start_eval = detail::eval_loss(sdf, nullptr, train);
  detail::fit_sdf(sdf, train, detail::unconditional_moments(train), hp.epochs_unconditional, hp.lr, rng_a, a, cb);
  a.end_eval = detail::eval_loss(sdf, nullptr, train);
  res.phases.push_back(a);
  res.after_unconditional = SdfModel(hp, sdf);
  if (unconditional_only) {
    res.sdf = res.after_unconditional;
    return res;
  }

  PanelNetwork cond(hp.cond_spec(train), mix_seed(hp.seed, 102));
  Rng rng_b(mix_seed(hp.seed, 202));
  PhaseLog b{"moment", {}, 0.0, 0.0};
  {
    const Vector omega = scale_by_breadth(train, sdf.forward(train, Mode::eval).col(0));
    b.start_eval = gan_loss(train, omega, cond.forward(train, Mode::eval));
    PanelOptimizer opt(cond, hp.lr);
    PanelNetworkTape tape;
    LossGradient lg;
    for (std::size_t e = 0; e < hp.epochs_moment; ++e) {
      Matrix g = cond.forward(train, Mode::train, &rng_b, &tape);
      const double loss = gan_loss(train, omega, g, &lg);
      detail::check_loss(loss, b.name, e);
      b.loss.push_back(loss);
      if (cb) cb(b.name, e, loss);
      PanelGradient grad = cond.zero_gradient();
      cond.backward(train, tape, lg.d_g, grad);
      opt.step(cond, grad, -1.0);  // ascent
    }
    b.end_eval = gan_loss(train, omega, cond.forward(train, Mode::eval));
  }
  res.phases.push_back(b);

  Rng rng_c(mix_seed(hp.seed, 203));
  PhaseLog c{"conditional", {}, 0.0, 0.0};
  const Matrix g = cond.forward(train, Mode::eval);
  c.start_eval = detail::eval_loss(sdf, &cond, train);
  detail::fit_sdf(sdf, train, g, hp.epochs_conditional, hp.lr, rng_c, c, cb);
  c.end_eval = detail::eval_loss(sdf, &cond, train);
  res.phases.push_back(c);

  res.sdf = SdfModel(hp, std::move(sdf));
  res.cond = ConditionalModel(std::move(cond));
  return res;
}

/// Unconditional variant: phase A only, macro states still feed the weight network.
inline SdfModel train_unc(const data::Splits& splits, const GanHyperParams& hp, const EpochCallback& cb = {}) {
  return train_gan(splits, hp, true, cb).sdf;
}

}  // namespace deepsdf::gan
