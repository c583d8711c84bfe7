#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/data/panel.hpp"

namespace deepsdf::eval {

// All variances use the 1/T moment form.

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double stddev(std::span<const double> x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size()));
}

inline std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

/// Zero variance up to summation rounding: a constant series can leave sd ~ 1e-17 behind.
inline bool flat_series(std::span<const double> x, double sd) {
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  return !(sd > 1e-12 * scale);
}

/// Monthly Sharpe ratio mean / sd. Throws on fewer than two points or zero variance.
inline double sharpe(std::span<const double> f) {
  if (f.size() < 2) throw NumericalError("sharpe: need at least 2 observations");
  const double sd = stddev(f);
  if (flat_series(f, sd)) throw NumericalError("sharpe: zero variance (degenerate factor)");
  return mean(f) / sd;
}
inline double sharpe(const Vector& f) { return sharpe(as_span(f)); }
inline double annualize_sharpe(double monthly) { return monthly * std::sqrt(12.0); }

/**
 * Per-month projection of returns off the loadings:
 * eps_t = R_t - beta_t (beta_t' R_t) / (beta_t' beta_t). Months with
 * beta_t' beta_t == 0 keep eps = R and are counted in `skipped`.
 */
inline Vector residual_projection(const data::PanelDataset& view, const Vector& beta, std::size_t* skipped = nullptr) {
  if (static_cast<std::size_t>(beta.size()) != view.num_obs()) throw DimensionError("residual_projection: beta length");
  Vector r = view.returns();
  Vector eps = r;
  std::size_t zero_months = 0;
  const std::size_t base = view.first_obs();
  for (std::size_t t = 0; t < view.num_months(); ++t) {
    const auto lo = static_cast<Eigen::Index>(view.obs_begin(t) - base);
    const auto len = static_cast<Eigen::Index>(view.assets_in_month(t));
    auto b = beta.segment(lo, len);
    const double bb = b.squaredNorm();
    if (bb == 0.0) {
      ++zero_months;
      continue;
    }
    eps.segment(lo, len) = r.segment(lo, len) - b * (b.dot(r.segment(lo, len)) / bb);
  }
  if (skipped) *skipped = zero_months;
  return eps;
}

/// 1 - mean_t[(1/N_t) sum eps^2] / mean_t[(1/N_t) sum R^2]; returns are not demeaned.
inline double explained_variation(const data::PanelDataset& view, const Vector& residuals) {
  if (static_cast<std::size_t>(residuals.size()) != view.num_obs()) throw DimensionError("explained_variation: residual length");
  Vector r = view.returns();
  const std::size_t base = view.first_obs();
  double num = 0.0;
  double den = 0.0;
  for (std::size_t t = 0; t < view.num_months(); ++t) {
    const auto lo = static_cast<Eigen::Index>(view.obs_begin(t) - base);
    const auto len = static_cast<Eigen::Index>(view.assets_in_month(t));
    num += residuals.segment(lo, len).squaredNorm() / static_cast<double>(len);
    den += r.segment(lo, len).squaredNorm() / static_cast<double>(len);
  }
  if (!(den > 0.0)) throw NumericalError("explained_variation: zero denominator");
  return 1.0 - num / den;
}

/// 1 - sum_i (T_i/T) mean(eps_i)^2 / sum_i (T_i/T) mean(R_i)^2.
inline double xs_r2(const data::PanelDataset& view, const Vector& residuals) {
  if (static_cast<std::size_t>(residuals.size()) != view.num_obs()) throw DimensionError("xs_r2: residual length");
  data::AssetIndex idx(view);
  Vector r = view.returns();
  std::vector<double> se(idx.num_assets(), 0.0);
  std::vector<double> sr(idx.num_assets(), 0.0);
  for (std::size_t n = 0; n < view.num_obs(); ++n) {
    se[idx.local[n]] += residuals[static_cast<Eigen::Index>(n)];
    sr[idx.local[n]] += r[static_cast<Eigen::Index>(n)];
  }
  const double T = static_cast<double>(view.num_months());
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < idx.num_assets(); ++i) {
    const double ti = static_cast<double>(idx.count[i]);
    num += (ti / T) * (se[i] / ti) * (se[i] / ti);
    den += (ti / T) * (sr[i] / ti) * (sr[i] / ti);
  }
  if (!(den > 0.0)) throw NumericalError("xs_r2: zero denominator");
  return 1.0 - num / den;
}

struct RiskStats {
  double max_loss = 0.0;          // min(F) / sd(F)
  std::size_t max_drawdown = 0;   // longest run of strictly negative months
};

inline RiskStats risk_stats(std::span<const double> f) {
  const double sd = stddev(f);
  if (flat_series(f, sd)) throw NumericalError("risk_stats: zero variance");
  RiskStats s;
  s.max_loss = *std::min_element(f.begin(), f.end()) / sd;
  std::size_t run = 0;
  for (double v : f) {
    run = v < 0.0 ? run + 1 : 0;
    s.max_drawdown = std::max(s.max_drawdown, run);
  }
  return s;
}
inline RiskStats risk_stats(const Vector& f) { return risk_stats(as_span(f)); }

struct Turnover {
  double long_side = 0.0;
  double short_side = 0.0;
};

/**
 * Turnover of the l1-normalized weights w_t (per observation of `view`):
 * mean over transitions of sum_i |(1 + R_P) w_{i,t+1} - (1 + R_{i,t+1}) w_{i,t}|,
 * evaluated on the positive and negative parts of the weights separately.
 */
inline Turnover turnover(const data::PanelDataset& view, const Vector& weights) {
  if (static_cast<std::size_t>(weights.size()) != view.num_obs()) throw DimensionError("turnover: weight length");
  if (view.num_months() < 2) throw NumericalError("turnover: need at least two consecutive months");
  const auto& st = view.storage();
  const std::size_t base = view.first_obs();
  Vector w = weights;
  for (std::size_t t = 0; t < view.num_months(); ++t) {
    const auto lo = static_cast<Eigen::Index>(view.obs_begin(t) - base);
    const auto len = static_cast<Eigen::Index>(view.assets_in_month(t));
    const double norm = w.segment(lo, len).lpNorm<1>();
    if (!(norm > 0.0)) throw NumericalError("turnover: zero-norm weights in " + view.month(t).str());
    w.segment(lo, len) /= norm;
  }
  Turnover out;
  std::vector<double> next_w(view.num_assets_total(), 0.0);
  for (std::size_t t = 0; t + 1 < view.num_months(); ++t) {
    double rp = 0.0;
    for (std::size_t n = view.obs_begin(t); n < view.obs_end(t); ++n) rp += w[static_cast<Eigen::Index>(n - base)] * st.returns[static_cast<Eigen::Index>(n)];
    std::fill(next_w.begin(), next_w.end(), 0.0);
    std::vector<char> seen(view.num_assets_total(), 0);
    for (std::size_t n = view.obs_begin(t + 1); n < view.obs_end(t + 1); ++n) next_w[st.asset[n]] = w[static_cast<Eigen::Index>(n - base)];
    double lsum = 0.0;
    double ssum = 0.0;
    for (std::size_t n = view.obs_begin(t); n < view.obs_end(t); ++n) {
      const std::size_t a = st.asset[n];
      seen[a] = 1;
      const double wt = w[static_cast<Eigen::Index>(n - base)];
      const double wn = next_w[a];
      const double grow = 1.0 + st.returns[static_cast<Eigen::Index>(n)];
      lsum += std::abs((1.0 + rp) * std::max(wn, 0.0) - grow * std::max(wt, 0.0));
      ssum += std::abs((1.0 + rp) * std::min(wn, 0.0) - grow * std::min(wt, 0.0));
    }
    for (std::size_t n = view.obs_begin(t + 1); n < view.obs_end(t + 1); ++n) {
      const std::size_t a = st.asset[n];
      if (seen[a]) continue;  // new entrants: previous weight zero
      lsum += std::abs((1.0 + rp) * std::max(next_w[a], 0.0));
      ssum += std::abs((1.0 + rp) * std::min(next_w[a], 0.0));
    }
    out.long_side += lsum;
    out.short_side += ssum;
  }
  const double transitions = static_cast<double>(view.num_months() - 1);
  out.long_side /= transitions;
  out.short_side /= transitions;
  return out;
}

/// Pearson correlation with 1/T moments.
inline double correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw NumericalError("correlation: need >= 2 aligned observations");
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  const auto n = static_cast<double>(a.size());
  if (flat_series(a, std::sqrt(saa / n)) || flat_series(b, std::sqrt(sbb / n))) throw NumericalError("correlation: zero variance");
  return sab / std::sqrt(saa * sbb);
}

/// The three headline metrics of one factor + loading pair on one split.
struct SplitMetrics {
  double sr = 0.0;
  double ev = 0.0;
  double xs_r2 = 0.0;
  bool degenerate = false;  // SR undefined (zero-variance factor)
};

inline SplitMetrics split_metrics(const data::PanelDataset& view, const Vector& factor, const Vector& beta) {
  SplitMetrics m;
  try {
    m.sr = sharpe(factor);
  } catch (const NumericalError&) {
    m.sr = 0.0;
    m.degenerate = true;
  }
  Vector eps = residual_projection(view, beta);
  m.ev = explained_variation(view, eps);
  m.xs_r2 = xs_r2(view, eps);
  return m;
}

}  // namespace deepsdf::eval
