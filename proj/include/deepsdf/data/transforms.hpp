#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/data/panel.hpp"

namespace deepsdf::data {

/**
 * Cross-sectional rank transform: the value with (average) rank r among N
 * maps to (r - 0.5) / N - 0.5. Output lies in (-0.5, 0.5) and sums to zero.
 */
inline std::vector<double> rank_quantile_transform(std::span<const double> raw) {
  const std::size_t n = raw.size();
  if (n == 0) throw DataError("rank_quantile_transform: no values");
  for (double x : raw) {
    if (!std::isfinite(x)) throw DataError("rank_quantile_transform: non-finite value");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return raw[a] < raw[b]; });
  std::vector<double> out(n);
  const double dn = static_cast<double>(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && raw[order[j + 1]] == raw[order[i]]) ++j;
    // positions i..j (0-based) share the average 1-based rank
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const double q = (rank - 0.5) / dn - 0.5;
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = q;
    i = j + 1;
  }
  return out;
}

enum class Leg { combined, long_leg, short_leg };

struct ManagedFactorSet {
  std::vector<Month> months;
  Matrix values;  // months x d
  std::vector<std::string> names;
  std::vector<std::size_t> characteristic;  // source characteristic column per factor
  std::vector<Leg> legs;

  std::size_t dim() const { return names.size(); }
};

/// Column value of characteristic `j` under a leg (max(I,0) / min(I,0)).
inline double leg_value(double x, Leg leg) {
  switch (leg) {
    case Leg::long_leg:
      return std::max(x, 0.0);
    case Leg::short_leg:
      return std::min(x, 0.0);
    default:
      return x;
  }
}

/// Per-observation regressor row matching the managed-factor columns.
inline Vector leg_features(const ManagedFactorSet& f, const Eigen::Ref<const Eigen::RowVectorXd>& chars) {
  Vector out(static_cast<Eigen::Index>(f.dim()));
  for (std::size_t k = 0; k < f.dim(); ++k) out[static_cast<Eigen::Index>(k)] = leg_value(chars[static_cast<Eigen::Index>(f.characteristic[k])], f.legs[k]);
  return out;
}

inline ManagedFactorSet managed_factor_layout(const std::vector<std::string>& char_names, bool split_legs) {
  ManagedFactorSet f;
  for (std::size_t j = 0; j < char_names.size(); ++j) {
    if (split_legs) {
      f.names.push_back(char_names[j] + "_long");
      f.characteristic.push_back(j);
      f.legs.push_back(Leg::long_leg);
      f.names.push_back(char_names[j] + "_short");
      f.characteristic.push_back(j);
      f.legs.push_back(Leg::short_leg);
    } else {
      f.names.push_back(char_names[j]);
      f.characteristic.push_back(j);
      f.legs.push_back(Leg::combined);
    }
  }
  return f;
}

/// F~_{t+1,j} = (1/N_t) sum_i I_{t,i,j} R_{t+1,i}, optionally split into long and short legs.
inline ManagedFactorSet build_managed_factors(const PanelDataset& panel, bool split_legs) {
  ManagedFactorSet f = managed_factor_layout(panel.storage().char_names, split_legs);
  const auto& st = panel.storage();
  f.values = Matrix::Zero(static_cast<Eigen::Index>(panel.num_months()), static_cast<Eigen::Index>(f.dim()));
  for (std::size_t t = 0; t < panel.num_months(); ++t) {
    f.months.push_back(panel.month(t));
    const std::size_t nt = panel.assets_in_month(t);
    if (nt == 0) throw DataError("build_managed_factors: empty month " + panel.month(t).str());
    for (std::size_t n = panel.obs_begin(t); n < panel.obs_end(t); ++n) {
      const double r = st.returns[static_cast<Eigen::Index>(n)];
      for (std::size_t k = 0; k < f.dim(); ++k) {
        f.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) +=
            leg_value(st.chars(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f.characteristic[k])), f.legs[k]) * r;
      }
    }
    f.values.row(static_cast<Eigen::Index>(t)) /= static_cast<double>(nt);
  }
  return f;
}

/// Number of leading observations a transformation code consumes.
inline std::size_t tcode_lag(int tcode) {
  switch (tcode) {
    case 1:
    case 4:
      return 0;
    case 2:
    case 5:
      return 1;
    case 3:
    case 6:
    case 7:
      return 2;
    default:
      throw DataError("macro tcode must be 1..7, got " + std::to_string(tcode));
  }
}

/**
 * Stationarity transformation by code: 1 x, 2 dx, 3 d^2x, 4 log x,
 * 5 d log x, 6 d^2 log x, 7 d(x_t / x_{t-1} - 1). Leading undefined
 * entries are dropped, so the output is tcode_lag() shorter.
 */
inline std::vector<double> macro_transform(std::span<const double> series, int tcode) {
  const std::size_t lag = tcode_lag(tcode);
  if (series.size() <= lag) {
    throw DataError("macro series of length " + std::to_string(series.size()) + " too short for tcode " + std::to_string(tcode));
  }
  std::vector<double> x(series.begin(), series.end());
  if (tcode >= 4 && tcode <= 6) {
    for (double& v : x) {
      if (!(v > 0.0)) throw DataError("macro tcode " + std::to_string(tcode) + " requires positive values");
      v = std::log(v);
    }
  }
  auto diff = [](const std::vector<double>& v) {
    std::vector<double> d;
    for (std::size_t i = 1; i < v.size(); ++i) d.push_back(v[i] - v[i - 1]);
    return d;
  };
  switch (tcode) {
    case 1:
    case 4:
      return x;
    case 2:
    case 5:
      return diff(x);
    case 3:
    case 6:
      return diff(diff(x));
    case 7: {
      std::vector<double> growth;
      for (std::size_t i = 1; i < x.size(); ++i) {
        if (x[i - 1] == 0.0) throw DataError("macro tcode 7: zero level");
        growth.push_back(x[i] / x[i - 1] - 1.0);
      }
      return diff(growth);
    }
  }
  return x;
}

/**
 * Applies per-column codes to a months x q raw matrix and aligns every
 * column to the deepest lag. Returns the transformed matrix (rows = raw rows
 * minus the maximal lag) and the number of leading rows dropped.
 */
inline std::pair<Matrix, std::size_t> macro_transform_aligned(const Matrix& raw, const std::vector<int>& tcodes) {
  if (static_cast<std::size_t>(raw.cols()) != tcodes.size()) throw DataError("macro: one tcode per column required");
  std::size_t max_lag = 0;
  for (int c : tcodes) max_lag = std::max(max_lag, tcode_lag(c));
  if (static_cast<std::size_t>(raw.rows()) <= max_lag) throw DataError("macro: not enough months for transformations");
  Matrix out(raw.rows() - static_cast<Eigen::Index>(max_lag), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    std::vector<double> col(raw.col(j).data(), raw.col(j).data() + raw.rows());
    auto tr = macro_transform(col, tcodes[static_cast<std::size_t>(j)]);
    const std::size_t skip = max_lag - tcode_lag(tcodes[static_cast<std::size_t>(j)]);
    for (Eigen::Index t = 0; t < out.rows(); ++t) out(t, j) = tr[skip + static_cast<std::size_t>(t)];
  }
  return {out, max_lag};
}

/**
 * Subtracts each macro column's mean over the training months (`train` must
 * be a view of `panel`'s storage) from every month. Characteristics are
 * centered by the rank transform and left unchanged.
 */
inline PanelDataset center_features(const PanelDataset& panel, const PanelDataset& train) {
  if (panel.storage_ptr() != train.storage_ptr()) throw UsageError("center_features: training view of a different panel");
  auto st = std::make_shared<PanelStorage>(panel.storage());
  if (st->macro.cols() > 0) {
    const auto rows = st->macro.middleRows(static_cast<Eigen::Index>(train.first_month_index()),
                                           static_cast<Eigen::Index>(train.num_months()));
    Eigen::RowVectorXd mean = rows.colwise().mean();
    st->macro.rowwise() -= mean;
  }
  return PanelDataset(std::shared_ptr<const PanelStorage>(std::move(st)), panel.first_month_index(), panel.end_month_index());
}

}  // namespace deepsdf::data
