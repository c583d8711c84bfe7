#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/month.hpp"
#include "deepsdf/core/seed.hpp"
#include "deepsdf/core/types.hpp"
#include "deepsdf/data/csv.hpp"
#include "deepsdf/data/io.hpp"
#include "deepsdf/data/panel.hpp"
#include "deepsdf/data/transforms.hpp"
#include "deepsdf/eval/metrics.hpp"

namespace deepsdf::sim {

/**
 * One-factor no-arbitrage panel R_{t+1,i} = beta_{t,i} F_{t+1} + e_{t+1,i}.
 *
 * setup 1: beta = C1 * C2 with C1, C2 iid N(0,1).
 * setup 2: beta = C * b(h_t), h_t = sin(pi t / 24) + e^h_t, b(h) = +1 if h > 0
 *          else -1; only Z_t = mu_M t + h_t is observed (t is 1-based).
 * F ~ N(mu_F, sigma_F^2) with mu_F = sigma_F * SR_F.
 */
struct SimConfig {
  int setup = 1;
  std::size_t num_assets = 500;
  std::size_t n_train = 250;
  std::size_t n_valid = 100;
  std::size_t n_test = 250;
  double sigma_f2 = 0.1;
  double sharpe_f = 1.0;
  double sigma_e2 = 1.0;
  double mu_m = 0.05;
  double state_noise_var = 0.25;
  std::uint64_t seed = 1;
  Month start = Month::from_ym(1970, 1);

  std::size_t num_months() const { return n_train + n_valid + n_test; }
  double mu_f() const { return std::sqrt(sigma_f2) * sharpe_f; }

  void validate() const {
    if (setup != 1 && setup != 2) throw UsageError("simulation setup must be 1 or 2, got " + std::to_string(setup));
    if (!(sigma_f2 > 0.0)) throw UsageError("sigma_F^2 must be positive");
    if (!(sigma_e2 >= 0.0)) throw UsageError("sigma_e^2 must be non-negative");
    if (!(state_noise_var >= 0.0)) throw UsageError("state noise variance must be non-negative");
    if (num_assets < 1 || n_train < 1 || n_valid < 1 || n_test < 1) throw UsageError("simulation sizes must be positive");
  }
};

struct PopulationTruth {
  Vector beta;                // per observation
  Vector idiosyncratic;       // per observation
  Vector factor;              // per month: F_{t+1} realized over the month after t
  Vector state;               // per month: h_t (setup 2), empty otherwise
  Vector observed_macro;      // per month: Z_t (setup 2)
};

struct SimulatedPanel {
  data::PanelDataset panel;  // raw characteristics; macro Z_t in levels for setup 2
  PopulationTruth truth;
  SimConfig config;

  data::SplitSpec split_spec() const {
    return data::SplitSpec::by_length(panel, config.n_train, config.n_valid, config.n_test);
  }
};

inline double state_sign(double h) { return h > 0.0 ? 1.0 : -1.0; }

inline SimulatedPanel simulate(const SimConfig& config) {
  config.validate();
  const std::size_t N = config.num_assets;
  const std::size_t T = config.num_months();
  Rng factor_rng(mix_seed(config.seed, 1));
  Rng char_rng(mix_seed(config.seed, 2));
  Rng noise_rng(mix_seed(config.seed, 3));
  Rng state_rng(mix_seed(config.seed, 4));
  std::normal_distribution<double> std_normal(0.0, 1.0);

  auto st = std::make_shared<data::PanelStorage>();
  const std::size_t p = config.setup == 1 ? 2 : 1;
  st->char_names = config.setup == 1 ? std::vector<std::string>{"C1", "C2"} : std::vector<std::string>{"C"};
  for (std::size_t i = 0; i < N; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "A%05zu", i + 1);
    st->asset_ids.emplace_back(buf);
  }
  st->returns.resize(static_cast<Eigen::Index>(N * T));
  st->chars.resize(static_cast<Eigen::Index>(N * T), static_cast<Eigen::Index>(p));
  st->asset.resize(N * T);

  SimulatedPanel out;
  out.config = config;
  PopulationTruth& truth = out.truth;
  truth.beta.resize(static_cast<Eigen::Index>(N * T));
  truth.idiosyncratic.resize(static_cast<Eigen::Index>(N * T));
  truth.factor.resize(static_cast<Eigen::Index>(T));
  if (config.setup == 2) {
    truth.state.resize(static_cast<Eigen::Index>(T));
    truth.observed_macro.resize(static_cast<Eigen::Index>(T));
    st->macro.resize(static_cast<Eigen::Index>(T), 1);
    st->macro_names = {"Z"};
  }

  const double sigma_f = std::sqrt(config.sigma_f2);
  const double sigma_e = std::sqrt(config.sigma_e2);
  const double sigma_h = std::sqrt(config.state_noise_var);
  st->month_offset.push_back(0);
  for (std::size_t t = 0; t < T; ++t) {
    st->months.push_back(config.start + static_cast<int>(t));
    const double f = config.mu_f() + sigma_f * std_normal(factor_rng);
    truth.factor[static_cast<Eigen::Index>(t)] = f;
    double sign = 1.0;
    if (config.setup == 2) {
      const double tt = static_cast<double>(t + 1);
      const double h = std::sin(std::numbers::pi * tt / 24.0) + sigma_h * std_normal(state_rng);
      truth.state[static_cast<Eigen::Index>(t)] = h;
      truth.observed_macro[static_cast<Eigen::Index>(t)] = config.mu_m * tt + h;
      st->macro(static_cast<Eigen::Index>(t), 0) = config.mu_m * tt + h;
      sign = state_sign(h);
    }
    for (std::size_t i = 0; i < N; ++i) {
      const auto n = static_cast<Eigen::Index>(t * N + i);
      double beta = 0.0;
      if (config.setup == 1) {
        const double c1 = std_normal(char_rng);
        const double c2 = std_normal(char_rng);
        st->chars(n, 0) = c1;
        st->chars(n, 1) = c2;
        beta = c1 * c2;
      } else {
        const double c = std_normal(char_rng);
        st->chars(n, 0) = c;
        beta = c * sign;
      }
      const double e = sigma_e * std_normal(noise_rng);
      truth.beta[n] = beta;
      truth.idiosyncratic[n] = e;
      st->returns[n] = beta * f + e;
      st->asset[static_cast<std::size_t>(n)] = i;
    }
    st->month_offset.push_back((t + 1) * N);
  }
  st->validate();
  out.panel = data::PanelDataset(std::shared_ptr<const data::PanelStorage>(std::move(st)));
  return out;
}

/// Estimator input: characteristics rank-transformed per month; returns and macro unchanged.
inline data::PanelDataset quantile_panel(const data::PanelDataset& raw) {
  auto st = std::make_shared<data::PanelStorage>(raw.storage());
  for (std::size_t t = 0; t < st->months.size(); ++t) {
    const auto lo = static_cast<Eigen::Index>(st->month_offset[t]);
    const auto len = static_cast<Eigen::Index>(st->month_offset[t + 1] - st->month_offset[t]);
    for (Eigen::Index j = 0; j < st->chars.cols(); ++j) {
      Vector col = st->chars.col(j).segment(lo, len);
      auto q = data::rank_quantile_transform(std::span<const double>(col.data(), static_cast<std::size_t>(len)));
      for (Eigen::Index k = 0; k < len; ++k) st->chars(lo + k, j) = q[static_cast<std::size_t>(k)];
    }
  }
  return data::PanelDataset(std::shared_ptr<const data::PanelStorage>(std::move(st)), raw.first_month_index(),
                            raw.end_month_index());
}

/// Population SDF weights: proportional to beta, l1-normalized per month.
inline Vector population_sdf_direction(const SimulatedPanel& sim, const data::PanelDataset& view) {
  if (view.storage_ptr() != sim.panel.storage_ptr()) throw UsageError("population_sdf_direction: view of another panel");
  Vector w(static_cast<Eigen::Index>(view.num_obs()));
  const std::size_t base = view.first_obs();
  for (std::size_t t = 0; t < view.num_months(); ++t) {
    const auto lo = static_cast<Eigen::Index>(view.obs_begin(t));
    const auto len = static_cast<Eigen::Index>(view.assets_in_month(t));
    auto b = sim.truth.beta.segment(lo, len);
    const double norm = b.lpNorm<1>();
    if (!(norm > 0.0)) throw NumericalError("population_sdf_direction: all-zero beta in " + view.month(t).str());
    w.segment(lo - static_cast<Eigen::Index>(base), len) = b / norm;
  }
  return w;
}

inline Vector truth_beta(const SimulatedPanel& sim, const data::PanelDataset& view) {
  return sim.truth.beta.segment(static_cast<Eigen::Index>(view.first_obs()), static_cast<Eigen::Index>(view.num_obs()));
}

inline Vector truth_factor(const SimulatedPanel& sim, const data::PanelDataset& view) {
  return sim.truth.factor.segment(static_cast<Eigen::Index>(view.first_month_index()), static_cast<Eigen::Index>(view.num_months()));
}

/// SR of the realized F and EV / XS-R^2 from projecting on the true loadings.
inline eval::SplitMetrics population_metrics(const SimulatedPanel& sim, const data::PanelDataset& view) {
  if (view.storage_ptr() != sim.panel.storage_ptr()) throw UsageError("population_metrics: view of another panel");
  return eval::split_metrics(view, truth_factor(sim, view), truth_beta(sim, view));
}

/**
 * Writes the data-module schemas plus truth.csv (month,asset_id,beta,F,h).
 * Setup 2 also gets macro_diff.csv: the same Z_t series tagged with tcode 2.
 */
inline void write_simulation(const std::filesystem::path& dir, const SimulatedPanel& sim) {
  data::write_panel(dir, sim.panel);
  const auto& st = sim.panel.storage();
  std::ofstream truth(dir / "truth.csv");
  if (!truth) throw DataError("cannot write truth.csv in " + dir.string());
  truth << "month,asset_id,beta,F,h\n";
  for (std::size_t t = 0; t < st.months.size(); ++t) {
    const std::string m = st.months[t].str();
    const std::string f = data::fmt(sim.truth.factor[static_cast<Eigen::Index>(t)]);
    const std::string h = sim.truth.state.size() ? data::fmt(sim.truth.state[static_cast<Eigen::Index>(t)]) : "";
    for (std::size_t n = st.month_offset[t]; n < st.month_offset[t + 1]; ++n) {
      truth << m << ',' << st.asset_ids[st.asset[n]] << ',' << data::fmt(sim.truth.beta[static_cast<Eigen::Index>(n)]) << ','
            << f << ',' << h << '\n';
    }
  }
  if (sim.config.setup == 2) {
    std::ofstream diff(dir / "macro_diff.csv");
    diff << "month,Z\ntcode,2\n";
    for (std::size_t t = 0; t < st.months.size(); ++t) {
      diff << st.months[t].str() << ',' << data::fmt(st.macro(static_cast<Eigen::Index>(t), 0)) << '\n';
    }
  }
}

}  // namespace deepsdf::sim
