#pragma once

#include <cstddef>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/data/panel.hpp"

namespace deepsdf::gan {

/// Gradients of the pricing loss with respect to its two inputs.
struct LossGradient {
  Vector d_omega;  // per observation
  Matrix d_g;      // observations x d
};

/// F_t = sum_i omega_{t,i} R_{t+1,i} for every month of the view.
inline Vector sdf_factor_series(const data::PanelDataset& view, const Vector& omega) {
  if (static_cast<std::size_t>(omega.size()) != view.num_obs()) throw DimensionError("sdf factor: weight length");
  Vector r = view.returns();
  Vector f(static_cast<Eigen::Index>(view.num_months()));
  const std::size_t base = view.first_obs();
  for (std::size_t t = 0; t < view.num_months(); ++t) {
    const auto lo = static_cast<Eigen::Index>(view.obs_begin(t) - base);
    const auto len = static_cast<Eigen::Index>(view.assets_in_month(t));
    f[static_cast<Eigen::Index>(t)] = omega.segment(lo, len).dot(r.segment(lo, len));
  }
  return f;
}

/**
 * Weighted pricing-error loss
 *
 *   L = (1/N) sum_i (T_i/T) || (1/T_i) sum_{t in T_i} M_{t+1} R_{t+1,i} g_{t,i} ||^2
 *
 * with M_{t+1} = 1 - sum_j omega_{t,j} R_{t+1,j}. `omega` holds one weight per
 * observation (already including any 1/N_t scaling), `g` one row of d moment
 * instruments per observation. N counts assets present in the view.
 */
inline double gan_loss(const data::PanelDataset& view, const Vector& omega, const Matrix& g,
                       LossGradient* grad = nullptr) {
  const std::size_t n_obs = view.num_obs();
  if (static_cast<std::size_t>(omega.size()) != n_obs || static_cast<std::size_t>(g.rows()) != n_obs) {
    throw DimensionError("gan_loss: weights, instruments and panel are misaligned");
  }
  if (g.cols() < 1) throw DimensionError("gan_loss: need at least one moment column");
  data::AssetIndex idx(view);
  Vector r = view.returns();
  Vector m = Vector::Ones(static_cast<Eigen::Index>(view.num_months())) - sdf_factor_series(view, omega);
  const auto d = g.cols();
  Matrix err = Matrix::Zero(static_cast<Eigen::Index>(idx.num_assets()), d);
  for (std::size_t n = 0; n < n_obs; ++n) {
    const double mr = m[static_cast<Eigen::Index>(idx.month_of_obs[n])] * r[static_cast<Eigen::Index>(n)];
    err.row(static_cast<Eigen::Index>(idx.local[n])) += mr * g.row(static_cast<Eigen::Index>(n));
  }
  const double T = static_cast<double>(view.num_months());
  const double N = static_cast<double>(idx.num_assets());
  double loss = 0.0;
  Vector weight(static_cast<Eigen::Index>(idx.num_assets()));
  for (std::size_t i = 0; i < idx.num_assets(); ++i) {
    const double ti = static_cast<double>(idx.count[i]);
    err.row(static_cast<Eigen::Index>(i)) /= ti;
    weight[static_cast<Eigen::Index>(i)] = ti / T / N;
    loss += weight[static_cast<Eigen::Index>(i)] * err.row(static_cast<Eigen::Index>(i)).squaredNorm();
  }
  if (grad) {
    // d L / d e_i = 2 w_i e_i; e_i carries a 1/T_i factor per observation
    Matrix de = err;
    for (std::size_t i = 0; i < idx.num_assets(); ++i) {
      de.row(static_cast<Eigen::Index>(i)) *= 2.0 * weight[static_cast<Eigen::Index>(i)] / static_cast<double>(idx.count[i]);
    }
    grad->d_g.resize(static_cast<Eigen::Index>(n_obs), d);
    Vector dm = Vector::Zero(m.size());
    for (std::size_t n = 0; n < n_obs; ++n) {
      const auto t = static_cast<Eigen::Index>(idx.month_of_obs[n]);
      const auto row = de.row(static_cast<Eigen::Index>(idx.local[n]));
      const double rn = r[static_cast<Eigen::Index>(n)];
      grad->d_g.row(static_cast<Eigen::Index>(n)) = (m[t] * rn) * row;
      dm[t] += rn * row.dot(g.row(static_cast<Eigen::Index>(n)));
    }
    grad->d_omega.resize(static_cast<Eigen::Index>(n_obs));
    for (std::size_t n = 0; n < n_obs; ++n) {
      grad->d_omega[static_cast<Eigen::Index>(n)] = -dm[static_cast<Eigen::Index>(idx.month_of_obs[n])] * r[static_cast<Eigen::Index>(n)];
    }
  }
  return loss;
}

}  // namespace deepsdf::gan
