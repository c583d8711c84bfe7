#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "deepsdf/baselines/regression.hpp"
#include "deepsdf/core/error.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/data/panel.hpp"
#include "deepsdf/gan/panel_network.hpp"

namespace deepsdf::eval {

/// Estimated loadings aligned to the observations of one view.
struct BetaPanel {
  Vector beta;
  std::string provenance;  // "gan-beta-net", "ffn-mu" or "linear-regression"
};

/// y_{t,i} = R_{t+1,i} F_{t+1}: the conditional mean of y is proportional to beta.
inline Vector beta_target(const data::PanelDataset& view, const Vector& factor) {
  if (static_cast<std::size_t>(factor.size()) != view.num_months()) throw DimensionError("beta target: factor length");
  Vector y = view.returns();
  const std::size_t base = view.first_obs();
  for (std::size_t t = 0; t < view.num_months(); ++t) {
    const auto lo = static_cast<Eigen::Index>(view.obs_begin(t) - base);
    const auto len = static_cast<Eigen::Index>(view.assets_in_month(t));
    y.segment(lo, len) *= factor[static_cast<Eigen::Index>(t)];
  }
  return y;
}

/// Loading network: inputs [I_{t,i}; h_t] with its own macro encoder, fitted to R*F by least squares.
class BetaNetwork {
 public:
  BetaNetwork() = default;
  explicit BetaNetwork(gan::PanelNetwork net) : net_(std::move(net)) {}

  const gan::PanelNetwork& network() const { return net_; }
  BetaPanel predict(const data::PanelDataset& view) const {
    BetaPanel b{net_.forward(view).col(0), "gan-beta-net"};
    if (!b.beta.allFinite()) throw NumericalError("beta network produced non-finite loadings");
    return b;
  }

 private:
  gan::PanelNetwork net_;
};

/**
 * Fits the loading network on the training split against R*F_train, using
 * R*F_valid for early stopping when the schedule has patience.
 */
inline BetaNetwork fit_beta_network(const data::Splits& splits, const Vector& f_train, const Vector& f_valid,
                                    const gan::PanelNetworkSpec& spec, const baselines::RegressionSchedule& schedule,
                                    std::uint64_t seed) {
  if (f_train.size() == 0) throw UsageError("estimate_beta: untrained model (empty factor series)");
  const Vector y_train = beta_target(splits.train, f_train);
  const bool has_valid = !splits.valid.empty() && f_valid.size() > 0;
  const Vector y_valid = has_valid ? beta_target(splits.valid, f_valid) : Vector();
  auto fit = baselines::fit_panel_regression(splits.train, y_train, has_valid ? &splits.valid : nullptr,
                                             has_valid ? &y_valid : nullptr, spec, schedule, seed);
  return BetaNetwork(std::move(fit.net));
}

/// Linear loading model beta = I_{t,i}' b, b from least squares of R*F on I without intercept.
struct LinearBeta {
  Vector coef;

  BetaPanel predict(const data::PanelDataset& view) const {
    if (view.num_chars() != static_cast<std::size_t>(coef.size())) throw DimensionError("linear beta: characteristic count");
    return {view.chars() * coef, "linear-regression"};
  }
};

inline LinearBeta fit_linear_beta(const data::PanelDataset& train, const Vector& f_train) {
  if (f_train.size() == 0) throw UsageError("estimate_beta: untrained model (empty factor series)");
  const Vector y = beta_target(train, f_train);
  const Matrix x = train.chars();
  const Matrix xtx = x.transpose() * x;
  Eigen::FullPivLU<Matrix> lu(xtx);
  if (!lu.isInvertible()) throw NumericalError("linear beta: singular characteristic design matrix");
  return {lu.solve(x.transpose() * y)};
}

inline BetaPanel forecast_beta(const Vector& mu) { return {mu, "ffn-mu"}; }

}  // namespace deepsdf::eval
