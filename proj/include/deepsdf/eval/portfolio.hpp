#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/fisher_f.hpp>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/month.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/data/panel.hpp"
#include "deepsdf/eval/metrics.hpp"

namespace deepsdf::eval {

enum class Weighting { equal, value };

inline Weighting parse_weighting(const std::string& s) {
  if (s == "equal") return Weighting::equal;
  if (s == "value") return Weighting::value;
  throw UsageError("weighting must be 'equal' or 'value', got '" + s + "'");
}
inline const char* weighting_name(Weighting w) { return w == Weighting::equal ? "equal" : "value"; }

/**
 * Quantile bucket (0..buckets-1) of every observation, per month. Assets are
 * ordered by key, ties by ascending asset id, and position k of n lands in
 * bucket floor(k * buckets / n).
 */
inline std::vector<std::size_t> quantile_buckets(const data::PanelDataset& view, const Vector& key, std::size_t buckets) {
  if (static_cast<std::size_t>(key.size()) != view.num_obs()) throw DimensionError("sort key length");
  if (buckets < 1) throw UsageError("need at least one bucket");
  const auto& st = view.storage();
  const std::size_t base = view.first_obs();
  std::vector<std::size_t> out(view.num_obs());
  std::vector<std::size_t> order;
  for (std::size_t t = 0; t < view.num_months(); ++t) {
    const std::size_t lo = view.obs_begin(t) - base;
    const std::size_t n = view.assets_in_month(t);
    if (n < buckets) {
      throw DataError("month " + view.month(t).str() + " has " + std::to_string(n) + " assets, fewer than " +
                      std::to_string(buckets) + " buckets");
    }
    order.resize(n);
    std::iota(order.begin(), order.end(), lo);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double ka = key[static_cast<Eigen::Index>(a)], kb = key[static_cast<Eigen::Index>(b)];
      if (ka != kb) return ka < kb;
      return st.asset_ids[st.asset[base + a]] < st.asset_ids[st.asset[base + b]];
    });
    for (std::size_t k = 0; k < n; ++k) out[order[k]] = k * buckets / n;
  }
  return out;
}

/// Portfolio returns and aggregated loadings per month (months x buckets).
struct SortedPortfolios {
  std::vector<Month> months;
  std::vector<std::string> names;
  Matrix returns;
  Matrix betas;
  Weighting weighting = Weighting::equal;
};

inline SortedPortfolios form_portfolios(const data::PanelDataset& view, const std::vector<std::size_t>& bucket,
                                        std::size_t buckets, const Vector& beta, Weighting weighting,
                                        std::vector<std::string> names) {
  if (bucket.size() != view.num_obs() || static_cast<std::size_t>(beta.size()) != view.num_obs()) {
    throw DimensionError("portfolio formation: inputs misaligned with the panel");
  }
  const auto& st = view.storage();
  if (weighting == Weighting::value && !st.market_cap) throw DataError("value weighting requires market caps (weights.csv)");
  const std::size_t base = view.first_obs();
  const auto T = static_cast<Eigen::Index>(view.num_months());
  const auto K = static_cast<Eigen::Index>(buckets);
  SortedPortfolios p;
  p.names = std::move(names);
  p.weighting = weighting;
  p.returns = Matrix::Zero(T, K);
  p.betas = Matrix::Zero(T, K);
  Vector wsum(K);
  for (std::size_t t = 0; t < view.num_months(); ++t) {
    p.months.push_back(view.month(t));
    wsum.setZero();
    for (std::size_t n = view.obs_begin(t); n < view.obs_end(t); ++n) {
      const auto b = static_cast<Eigen::Index>(bucket[n - base]);
      const double w = weighting == Weighting::equal ? 1.0 : (*st.market_cap)[static_cast<Eigen::Index>(n)];
      wsum[b] += w;
      p.returns(static_cast<Eigen::Index>(t), b) += w * st.returns[static_cast<Eigen::Index>(n)];
      p.betas(static_cast<Eigen::Index>(t), b) += w * beta[static_cast<Eigen::Index>(n - base)];
    }
    for (Eigen::Index b = 0; b < K; ++b) {
      if (!(wsum[b] > 0.0)) throw DataError("empty portfolio '" + p.names[static_cast<std::size_t>(b)] + "' in " + view.month(t).str());
      p.returns(static_cast<Eigen::Index>(t), b) /= wsum[b];
      p.betas(static_cast<Eigen::Index>(t), b) /= wsum[b];
    }
  }
  return p;
}

/// Ten portfolios sorted on estimated loadings.
inline SortedPortfolios beta_decile_sort(const data::PanelDataset& view, const Vector& beta, Weighting weighting) {
  std::vector<std::string> names;
  for (int d = 1; d <= 10; ++d) names.push_back("D" + std::to_string(d));
  return form_portfolios(view, quantile_buckets(view, beta, 10), 10, beta, weighting, std::move(names));
}

/// Top-minus-bottom bucket return series.
inline Vector spread_returns(const SortedPortfolios& p) { return p.returns.rightCols(1) - p.returns.leftCols(1); }

/// Compounded growth of one unit, minus one, per column.
inline Matrix cumulative_returns(const Matrix& r) {
  Matrix out(r.rows(), r.cols());
  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    double level = 1.0;
    for (Eigen::Index t = 0; t < r.rows(); ++t) {
      level *= 1.0 + r(t, j);
      out(t, j) = level - 1.0;
    }
  }
  return out;
}

struct AlphaResult {
  Vector alpha;   // per portfolio
  Vector t_stat;  // per portfolio
  Matrix loadings;   // portfolios x factors
  Matrix residuals;  // months x portfolios
};

/// OLS of each portfolio on an intercept plus K factors; t-stats from s^2 (X'X)^-1 with s^2 = e'e/(T-K-1).
inline AlphaResult alpha_regression(const Matrix& portfolios, const Matrix& factors) {
  const Eigen::Index T = portfolios.rows();
  const Eigen::Index K = factors.cols();
  if (factors.rows() != T) throw DimensionError("alpha regression: portfolio and factor months differ");
  if (T <= K + 1) throw DataError("alpha regression: need more months than factors + 1");
  Matrix X(T, K + 1);
  X.col(0).setOnes();
  X.rightCols(K) = factors;
  const Matrix xtx = X.transpose() * X;
  Eigen::FullPivLU<Matrix> lu(xtx);
  if (!lu.isInvertible()) throw NumericalError("alpha regression: rank-deficient factor matrix");
  const Matrix coef = lu.solve(X.transpose() * portfolios);
  const Matrix xtx_inv = lu.inverse();
  AlphaResult r;
  r.residuals = portfolios - X * coef;
  r.alpha = coef.row(0).transpose();
  r.loadings = coef.bottomRows(K).transpose();
  r.t_stat.resize(portfolios.cols());
  for (Eigen::Index j = 0; j < portfolios.cols(); ++j) {
    const double s2 = r.residuals.col(j).squaredNorm() / static_cast<double>(T - K - 1);
    const double se = std::sqrt(s2 * xtx_inv(0, 0));
    r.t_stat[j] = se > 0.0 ? r.alpha[j] / se : (r.alpha[j] == 0.0 ? 0.0 : std::copysign(INFINITY, r.alpha[j]));
  }
  return r;
}

struct GrsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/**
 * GRS = (T-N-K)/N * (1 + mu' Omega^-1 mu)^-1 * alpha' Sigma^-1 alpha with the
 * 1/T moment estimators of the residual and factor covariances; exactly
 * F(N, T-N-K) under normal errors and the null alpha = 0.
 */
inline GrsResult grs_test(const Vector& alpha, const Matrix& residuals, const Matrix& factors) {
  const Eigen::Index T = residuals.rows();
  const Eigen::Index N = residuals.cols();
  const Eigen::Index K = factors.cols();
  if (alpha.size() != N || factors.rows() != T) throw DimensionError("grs test: inputs misaligned");
  if (T <= N + K + 1) throw DataError("grs test: need T > N + K + 1");
  const Matrix sigma = residuals.transpose() * residuals / static_cast<double>(T);
  const Vector mu = factors.colwise().mean().transpose();
  const Matrix fc = factors.rowwise() - mu.transpose();
  const Matrix omega = fc.transpose() * fc / static_cast<double>(T);
  Eigen::FullPivLU<Matrix> ls(sigma);
  if (!ls.isInvertible()) throw NumericalError("grs test: singular residual covariance");
  Eigen::FullPivLU<Matrix> lo(omega);
  if (!lo.isInvertible()) throw NumericalError("grs test: singular factor covariance");
  const double quad_a = alpha.dot(ls.solve(alpha));
  const double quad_f = mu.dot(lo.solve(mu));
  const double d1 = static_cast<double>(N), d2 = static_cast<double>(T - N - K);
  GrsResult g;
  g.statistic = std::max(0.0, d2 / d1 * quad_a / (1.0 + quad_f));
  boost::math::fisher_f_distribution<double> dist(d1, d2);
  g.p_value = std::clamp(boost::math::cdf(boost::math::complement(dist, g.statistic)), 0.0, 1.0);
  return g;
}

/// Pricing diagnostics of a set of portfolios against their aggregated loadings.
struct PortfolioReport {
  std::string sort;
  Weighting weighting = Weighting::equal;
  std::vector<std::string> names;
  Vector mean_return;
  Vector ev;     // per portfolio
  Vector alpha;  // per portfolio, normalized
  double total_ev = 0.0;
  double xs_r2 = 0.0;
};

/**
 * Monthly cross-sectional regression through the origin of portfolio returns
 * on portfolio loadings. alpha_i = mean residual_i / sqrt(sum_j mean(R_j)^2),
 * so XS-R^2 = 1 - sum alpha_i^2 holds exactly.
 */
inline PortfolioReport portfolio_report(const SortedPortfolios& p, std::string sort) {
  const Eigen::Index T = p.returns.rows(), K = p.returns.cols();
  Matrix resid = p.returns;
  for (Eigen::Index t = 0; t < T; ++t) {
    const double bb = p.betas.row(t).squaredNorm();
    if (bb > 0.0) resid.row(t) -= (p.betas.row(t).dot(p.returns.row(t)) / bb) * p.betas.row(t);
  }
  PortfolioReport r;
  r.sort = std::move(sort);
  r.weighting = p.weighting;
  r.names = p.names;
  r.mean_return = p.returns.colwise().mean().transpose();
  const Vector mean_resid = resid.colwise().mean().transpose();
  r.ev.resize(K);
  for (Eigen::Index j = 0; j < K; ++j) {
    const double denom = p.returns.col(j).squaredNorm();
    if (!(denom > 0.0)) throw NumericalError("portfolio '" + p.names[static_cast<std::size_t>(j)] + "' has zero returns");
    r.ev[j] = 1.0 - resid.col(j).squaredNorm() / denom;
  }
  const double total = p.returns.squaredNorm();
  const double scale = std::sqrt(r.mean_return.squaredNorm());
  if (!(total > 0.0) || !(scale > 0.0)) throw NumericalError("portfolio report: zero returns");
  r.total_ev = 1.0 - resid.squaredNorm() / total;
  r.alpha = mean_resid / scale;
  r.xs_r2 = 1.0 - r.alpha.squaredNorm();
  return r;
}

enum class SortDepth { decile, double5x5 };

/// Decile sort on one characteristic or independent 5x5 quintile sort on two.
inline PortfolioReport characteristic_sort_report(const data::PanelDataset& view, const Vector& beta,
                                                  const std::vector<std::size_t>& characteristics, SortDepth depth,
                                                  Weighting weighting) {
  const auto& names = view.storage().char_names;
  for (std::size_t c : characteristics) {
    if (c >= view.num_chars()) throw UsageError("characteristic index " + std::to_string(c) + " out of range");
  }
  auto column = [&](std::size_t c) { return Vector(view.chars().col(static_cast<Eigen::Index>(c))); };
  if (depth == SortDepth::decile) {
    if (characteristics.size() != 1) throw UsageError("decile sort takes one characteristic");
    const std::size_t c = characteristics[0];
    std::vector<std::string> labels;
    for (int d = 1; d <= 10; ++d) labels.push_back(names[c] + "_D" + std::to_string(d));
    auto p = form_portfolios(view, quantile_buckets(view, column(c), 10), 10, beta, weighting, std::move(labels));
    return portfolio_report(p, names[c]);
  }
  if (characteristics.size() != 2) throw UsageError("double sort takes two characteristics");
  const std::size_t a = characteristics[0], b = characteristics[1];
  auto qa = quantile_buckets(view, column(a), 5);
  auto qb = quantile_buckets(view, column(b), 5);
  std::vector<std::size_t> bucket(qa.size());
  for (std::size_t n = 0; n < qa.size(); ++n) bucket[n] = qa[n] * 5 + qb[n];
  std::vector<std::string> labels;
  for (int i = 1; i <= 5; ++i)
    for (int j = 1; j <= 5; ++j) labels.push_back(names[a] + "_Q" + std::to_string(i) + "_" + names[b] + "_Q" + std::to_string(j));
  auto p = form_portfolios(view, bucket, 25, beta, weighting, std::move(labels));
  return portfolio_report(p, names[a] + "x" + names[b]);
}

struct NamedSeries {
  std::string name;
  std::vector<Month> months;
  Vector values;
};

struct CorrelationMatrix {
  std::vector<std::string> names;
  std::vector<Month> months;  // common sample
  Matrix rho;
};

/// Pearson correlations over the months every series has in common.
inline CorrelationMatrix factor_correlations(const std::vector<NamedSeries>& series) {
  if (series.empty()) throw UsageError("factor correlations: no series");
  for (const auto& s : series) {
    if (s.months.size() != static_cast<std::size_t>(s.values.size())) throw DimensionError("series '" + s.name + "' months/values");
  }
  std::vector<Month> common = series.front().months;
  std::sort(common.begin(), common.end());
  for (std::size_t k = 1; k < series.size(); ++k) {
    std::vector<Month> m = series[k].months;
    std::sort(m.begin(), m.end());
    std::vector<Month> both;
    std::set_intersection(common.begin(), common.end(), m.begin(), m.end(), std::back_inserter(both));
    common = std::move(both);
  }
  if (common.size() < 2) throw DataError("factor correlations: fewer than 2 overlapping months");
  const auto n = static_cast<Eigen::Index>(common.size());
  Matrix aligned(n, static_cast<Eigen::Index>(series.size()));
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    for (Eigen::Index t = 0; t < n; ++t) {
      auto it = std::find(s.months.begin(), s.months.end(), common[static_cast<std::size_t>(t)]);
      aligned(t, static_cast<Eigen::Index>(k)) = s.values[static_cast<Eigen::Index>(it - s.months.begin())];
    }
  }
  CorrelationMatrix c;
  c.months = common;
  for (const auto& s : series) c.names.push_back(s.name);
  const auto K = aligned.cols();
  c.rho.resize(K, K);
  for (Eigen::Index i = 0; i < K; ++i) {
    for (Eigen::Index j = 0; j < K; ++j) {
      if (i == j) {
        const std::span<const double> col(aligned.col(i).data(), common.size());
        if (flat_series(col, stddev(col))) {
          throw NumericalError("factor correlations: series '" + c.names[static_cast<std::size_t>(i)] + "' has zero variance");
        }
        c.rho(i, j) = 1.0;
      } else {
        c.rho(i, j) = correlation(std::span<const double>(aligned.col(i).data(), common.size()),
                                  std::span<const double>(aligned.col(j).data(), common.size()));
      }
    }
  }
  return c;
}

}  // namespace deepsdf::eval
