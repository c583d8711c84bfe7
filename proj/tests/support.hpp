#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "deepsdf/core/month.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/data/panel.hpp"

namespace deepsdf::testing {

struct PanelShape {
  std::size_t months = 6;
  std::size_t assets = 5;
  std::size_t chars = 2;
  std::size_t macro = 0;
  bool unbalanced = false;  // drops a deterministic subset of (month, asset) pairs
  bool market_cap = false;
};

/// Random panel with N(0,1) characteristics, small returns and optional macro and caps.
inline std::shared_ptr<data::PanelStorage> random_storage(const PanelShape& s, std::uint64_t seed) {
  auto st = std::make_shared<data::PanelStorage>();
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(1.0, 100.0);
  for (std::size_t a = 0; a < s.assets; ++a) st->asset_ids.push_back("A" + std::to_string(100 + a));
  for (std::size_t j = 0; j < s.chars; ++j) st->char_names.push_back("c" + std::to_string(j));
  for (std::size_t j = 0; j < s.macro; ++j) st->macro_names.push_back("z" + std::to_string(j));
  std::vector<double> r, cap;
  std::vector<std::vector<double>> c;
  st->month_offset.push_back(0);
  for (std::size_t t = 0; t < s.months; ++t) {
    st->months.push_back(Month::from_ym(2000, 1) + static_cast<int>(t));
    for (std::size_t a = 0; a < s.assets; ++a) {
      if (s.unbalanced && a > 0 && (t * 7 + a * 3) % 5 == 0) continue;
      st->asset.push_back(a);
      r.push_back(0.1 * z(rng) + 0.01);
      std::vector<double> row(s.chars);
      for (auto& x : row) x = z(rng);
      c.push_back(row);
      cap.push_back(u(rng));
    }
    st->month_offset.push_back(st->asset.size());
  }
  const auto n = static_cast<Eigen::Index>(r.size());
  st->returns = Eigen::Map<Vector>(r.data(), n);
  st->chars.resize(n, static_cast<Eigen::Index>(s.chars));
  for (Eigen::Index k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < s.chars; ++j) st->chars(k, static_cast<Eigen::Index>(j)) = c[static_cast<std::size_t>(k)][j];
  }
  st->macro.resize(s.macro > 0 ? static_cast<Eigen::Index>(s.months) : 0, static_cast<Eigen::Index>(s.macro));
  for (Eigen::Index i = 0; i < st->macro.size(); ++i) st->macro.data()[i] = z(rng);
  if (s.market_cap) st->market_cap = Eigen::Map<Vector>(cap.data(), n);
  st->validate();
  return st;
}

inline data::PanelDataset random_panel(const PanelShape& s, std::uint64_t seed) {
  return data::PanelDataset(std::shared_ptr<const data::PanelStorage>(random_storage(s, seed)));
}

/// Panel from explicit per-month returns and a single characteristic column.
inline data::PanelDataset panel_from(const std::vector<std::vector<double>>& returns,
                                     const std::vector<std::vector<double>>& chars = {}) {
  auto st = std::make_shared<data::PanelStorage>();
  st->char_names = {"c0"};
  std::size_t width = 0;
  for (const auto& m : returns) width = std::max(width, m.size());
  for (std::size_t a = 0; a < width; ++a) st->asset_ids.push_back("A" + std::to_string(a));
  std::vector<double> r, c;
  st->month_offset.push_back(0);
  for (std::size_t t = 0; t < returns.size(); ++t) {
    st->months.push_back(Month::from_ym(2000, 1) + static_cast<int>(t));
    for (std::size_t a = 0; a < returns[t].size(); ++a) {
      st->asset.push_back(a);
      r.push_back(returns[t][a]);
      c.push_back(chars.empty() ? 0.0 : chars[t][a]);
    }
    st->month_offset.push_back(st->asset.size());
  }
  st->returns = Eigen::Map<Vector>(r.data(), static_cast<Eigen::Index>(r.size()));
  st->chars = Eigen::Map<Matrix>(c.data(), static_cast<Eigen::Index>(c.size()), 1);
  st->validate();
  return data::PanelDataset(std::shared_ptr<const data::PanelStorage>(std::move(st)));
}

struct GradCheck {
  std::size_t checked = 0;
  double worst = 0.0;  // largest relative error seen
  std::string where;
};

/**
 * Central differences on up to `max_coords` coordinates of `x` (evenly strided),
 * compared against `analytic`. Relative error uses max(|a|, |n|, floor).
 */
inline GradCheck finite_difference_check(Vector& x, const Vector& analytic, const std::function<double()>& f,
                                         std::size_t max_coords = 200, double step = 1e-5, double floor = 1e-6) {
  GradCheck out;
  const auto n = static_cast<std::size_t>(x.size());
  const std::size_t stride = std::max<std::size_t>(1, n / std::max<std::size_t>(1, max_coords));
  for (std::size_t k = 0; k < n && out.checked < max_coords; k += stride) {
    const auto i = static_cast<Eigen::Index>(k);
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f();
    x[i] = saved - step;
    const double down = f();
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double rel = std::abs(numeric - analytic[i]) / std::max({std::abs(numeric), std::abs(analytic[i]), floor});
    if (rel > out.worst) {
      out.worst = rel;
      out.where = "coordinate " + std::to_string(k);
    }
    ++out.checked;
  }
  return out;
}

/// Fixed random matrix used as a linear read-out so losses exercise every output.
inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
  return m;
}

}  // namespace deepsdf::testing
