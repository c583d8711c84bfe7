#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/data/csv.hpp"
#include "deepsdf/data/panel.hpp"
#include "deepsdf/data/transforms.hpp"
#include "deepsdf/eval/metrics.hpp"

namespace deepsdf::baselines {

/// Linear SDF: omega_{t,i} = theta' I_leg(t,i) / N_t over managed-factor columns.
struct LinearSdf {
  Vector theta;
  data::ManagedFactorSet layout;  // names, source characteristics and legs (values unused)
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

/// Sample moments of the managed factors: second moment A = F'F/T and mean b = F'1/T.
struct FactorMoments {
  Matrix second;
  Vector mean;

  explicit FactorMoments(const Matrix& f) {
    const double T = static_cast<double>(f.rows());
    second = f.transpose() * f / T;
    mean = f.colwise().sum().transpose() / T;
  }
};

inline data::ManagedFactorSet layout_only(const data::ManagedFactorSet& f) {
  data::ManagedFactorSet l = f;
  l.values.resize(0, 0);
  l.months.clear();
  return l;
}

/// theta = (F'F/T)^{-1} (F'1/T). Throws on a singular second-moment matrix.
inline LinearSdf fit_ls(const data::ManagedFactorSet& train_factors) {
  if (train_factors.values.rows() < 1) throw DataError("fit_ls: empty training factors");
  FactorMoments mom(train_factors.values);
  Eigen::FullPivLU<Matrix> lu(mom.second);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    throw NumericalError("fit_ls: singular factor second-moment matrix; use the elastic net estimator instead");
  }
  LinearSdf m;
  m.theta = lu.solve(mom.mean);
  m.layout = layout_only(train_factors);
  return m;
}

struct ElasticNetConfig {
  std::vector<double> lambda1 = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  std::vector<double> lambda2 = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  double tolerance = 1e-8;
  std::size_t max_iterations = 100000;
  bool standardize = false;

  void validate() const {
    if (lambda1.empty() || lambda2.empty()) throw UsageError("elastic net: empty penalty grid");
    for (double l : lambda1) if (l < 0.0) throw UsageError("elastic net: negative lambda1");
    for (double l : lambda2) if (l < 0.0) throw UsageError("elastic net: negative lambda2");
  }
};

/// ||b - A theta||^2 + lambda2 ||theta||^2 + lambda1 ||theta||_1.
inline double en_objective(const FactorMoments& mom, const Vector& theta, double lambda1, double lambda2) {
  return (mom.mean - mom.second * theta).squaredNorm() + lambda2 * theta.squaredNorm() + lambda1 * theta.lpNorm<1>();
}

inline double soft_threshold(double x, double k) {
  if (x > k) return x - k;
  if (x < -k) return x + k;
  return 0.0;
}

/**
 * Coordinate descent on theta' Q theta - 2 c' theta + lambda1 |theta|_1 with
 * Q = A'A + lambda2 I and c = A'b (the elastic net objective up to b'b).
 */
inline Vector elastic_net_solve(const FactorMoments& mom, double lambda1, double lambda2, double tolerance,
                                std::size_t max_iterations, const Vector* warm = nullptr) {
  const Eigen::Index d = mom.mean.size();
  Matrix Q = mom.second.transpose() * mom.second;
  Q.diagonal().array() += lambda2;
  Vector c = mom.second.transpose() * mom.mean;
  Vector theta = warm ? *warm : Vector::Zero(d);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (Q(j, j) <= 0.0) {
        theta[j] = 0.0;
        continue;
      }
      const double partial = c[j] - Q.row(j).dot(theta) + Q(j, j) * theta[j];
      const double next = soft_threshold(partial, 0.5 * lambda1) / Q(j, j);
      max_change = std::max(max_change, std::abs(next - theta[j]));
      theta[j] = next;
    }
    if (max_change < tolerance) return theta;
  }
  throw NumericalError("elastic net: no convergence within " + std::to_string(max_iterations) + " iterations");
}

inline Vector linear_factor(const LinearSdf& model, const data::ManagedFactorSet& factors) {
  if (static_cast<Eigen::Index>(factors.dim()) != model.theta.size()) throw DimensionError("linear factor: theta length");
  return factors.values * model.theta;
}

struct EnFit {
  LinearSdf model;
  double valid_sr = 0.0;
};

/// Elastic-net SDF with (lambda1, lambda2) chosen by validation Sharpe ratio.
inline EnFit fit_en(const data::ManagedFactorSet& train_factors, const data::ManagedFactorSet& valid_factors,
                    const ElasticNetConfig& config) {
  config.validate();
  Matrix f = train_factors.values;
  Vector scale = Vector::Ones(f.cols());
  if (config.standardize) {
    for (Eigen::Index j = 0; j < f.cols(); ++j) {
      scale[j] = eval::stddev(std::span<const double>(f.col(j).data(), static_cast<std::size_t>(f.rows())));
      if (!(scale[j] > 0.0)) scale[j] = 1.0;
      f.col(j) /= scale[j];
    }
  }
  FactorMoments mom(f);
  EnFit best;
  best.valid_sr = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (double l2 : config.lambda2) {
    Vector warm = Vector::Zero(f.cols());
    for (double l1 : config.lambda1) {
      Vector theta = elastic_net_solve(mom, l1, l2, config.tolerance, config.max_iterations, &warm);
      warm = theta;
      Vector raw_theta = theta.cwiseQuotient(scale);
      Vector fv = valid_factors.values * raw_theta;
      double sr = -std::numeric_limits<double>::infinity();
      try {
        sr = eval::sharpe(fv);
      } catch (const NumericalError&) {
      }
      if (!found || sr > best.valid_sr) {
        found = true;
        best.valid_sr = sr;
        best.model.theta = raw_theta;
        best.model.lambda1 = l1;
        best.model.lambda2 = l2;
      }
    }
  }
  best.model.layout = layout_only(train_factors);
  return best;
}

/// Per-observation weights and the factor series implied by a linear SDF on a view.
struct LinearSdfSeries {
  Vector omega;
  Vector f;
  Vector m;
};

inline LinearSdfSeries sdf_from_linear(const LinearSdf& model, const data::PanelDataset& view) {
  LinearSdfSeries s;
  const std::size_t base = view.first_obs();
  const auto& st = view.storage();
  s.omega.resize(static_cast<Eigen::Index>(view.num_obs()));
  s.f = Vector::Zero(static_cast<Eigen::Index>(view.num_months()));
  for (std::size_t t = 0; t < view.num_months(); ++t) {
    const double nt = static_cast<double>(view.assets_in_month(t));
    for (std::size_t n = view.obs_begin(t); n < view.obs_end(t); ++n) {
      Vector x = data::leg_features(model.layout, st.chars.row(static_cast<Eigen::Index>(n)));
      const double w = model.theta.dot(x) / nt;
      s.omega[static_cast<Eigen::Index>(n - base)] = w;
      s.f[static_cast<Eigen::Index>(t)] += w * st.returns[static_cast<Eigen::Index>(n)];
    }
  }
  s.m = Vector::Ones(s.f.size()) - s.f;
  return s;
}

/// Sum over observations of |d omega / d I_j|, normalized to sum to one.
inline Vector linear_importance(const LinearSdf& model, const data::PanelDataset& view) {
  const auto& st = view.storage();
  Vector s = Vector::Zero(static_cast<Eigen::Index>(view.num_chars()));
  for (std::size_t t = 0; t < view.num_months(); ++t) {
    const double nt = static_cast<double>(view.assets_in_month(t));
    for (std::size_t n = view.obs_begin(t); n < view.obs_end(t); ++n) {
      Vector d = Vector::Zero(s.size());
      for (std::size_t k = 0; k < model.layout.names.size(); ++k) {
        const auto j = static_cast<Eigen::Index>(model.layout.characteristic[k]);
        const double x = st.chars(static_cast<Eigen::Index>(n), j);
        const data::Leg leg = model.layout.legs[k];
        const double slope = leg == data::Leg::combined ? 1.0 : (leg == data::Leg::long_leg ? (x > 0.0) : (x < 0.0));
        d[j] += model.theta[static_cast<Eigen::Index>(k)] * slope / nt;
      }
      s += d.cwiseAbs();
    }
  }
  const double total = s.sum();
  if (!(total > 0.0)) throw NumericalError("variable importance: all-zero characteristic gradients");
  return s / total;
}

/// theta as CSV rows (leg name, coefficient).
inline void write_theta(const std::string& path, const LinearSdf& model) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "factor,coefficient\n";
  for (std::size_t k = 0; k < model.layout.names.size(); ++k) {
    out << model.layout.names[k] << ',' << data::fmt(model.theta[static_cast<Eigen::Index>(k)]) << '\n';
  }
}

inline LinearSdf read_theta(const std::string& path, const std::vector<std::string>& char_names) {
  data::CsvTable t = data::read_csv(path);
  const std::size_t fc = t.column("factor"), cc = t.column("coefficient");
  bool split = false;
  for (const auto& r : t.rows) split = split || r[fc].ends_with("_long") || r[fc].ends_with("_short");
  LinearSdf m;
  m.layout = data::managed_factor_layout(char_names, split);
  if (m.layout.names.size() != t.rows.size()) throw DataError(path + ": factor count does not match panel characteristics");
  m.theta.resize(static_cast<Eigen::Index>(t.rows.size()));
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    if (t.rows[k][fc] != m.layout.names[k]) throw DataError(path + ": unexpected factor '" + t.rows[k][fc] + "'");
    m.theta[static_cast<Eigen::Index>(k)] = data::parse_field(t, k, cc);
  }
  return m;
}

}  // namespace deepsdf::baselines
