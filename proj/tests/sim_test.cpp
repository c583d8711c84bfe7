#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include <Eigen/Dense>

#include "deepsdf/eval/metrics.hpp"
#include "deepsdf/sim/simulate.hpp"
#include "support.hpp"

using namespace deepsdf;
using namespace deepsdf::sim;

namespace {

SimConfig small(int setup, std::uint64_t seed = 1) {
  SimConfig c;
  c.setup = setup;
  c.num_assets = 40;
  c.n_train = 30;
  c.n_valid = 10;
  c.n_test = 20;
  c.seed = seed;
  return c;
}

/// Simulated panel whose storage carries the given per-month loadings in place of the drawn ones.
SimulatedPanel with_betas(const std::vector<std::vector<double>>& betas) {
  SimConfig c = small(1);
  c.num_assets = betas.front().size();
  c.n_train = 1;
  c.n_valid = 1;
  c.n_test = betas.size() - 2;
  SimulatedPanel s = simulate(c);
  for (std::size_t t = 0; t < betas.size(); ++t) {
    for (std::size_t i = 0; i < betas[t].size(); ++i) s.truth.beta[static_cast<Eigen::Index>(t * c.num_assets + i)] = betas[t][i];
  }
  return s;
}

}  // namespace

TEST(Simulate, DeterministicGivenSeed) {
  for (int setup : {1, 2}) {
    auto a = simulate(small(setup, 5));
    auto b = simulate(small(setup, 5));
    EXPECT_EQ(a.panel.storage().returns, b.panel.storage().returns);
    EXPECT_EQ(a.panel.storage().chars, b.panel.storage().chars);
    EXPECT_EQ(a.panel.storage().macro, b.panel.storage().macro);
    auto c = simulate(small(setup, 6));
    EXPECT_NE(a.panel.storage().returns, c.panel.storage().returns);
  }
}

TEST(Simulate, DefaultShape) {
  SimConfig c;
  c.setup = 2;
  auto s = simulate(c);
  EXPECT_EQ(s.panel.num_months(), 600u);
  EXPECT_EQ(s.panel.num_obs(), 300000u);
  EXPECT_EQ(s.panel.num_assets_total(), 500u);
  EXPECT_EQ(s.panel.num_chars(), 1u);
  EXPECT_EQ(s.panel.num_macro(), 1u);
  auto sp = data::split(s.panel, s.split_spec());
  EXPECT_EQ(sp.train.num_months(), 250u);
  EXPECT_EQ(sp.valid.num_months(), 100u);
  EXPECT_EQ(sp.test.num_months(), 250u);
}

TEST(Simulate, ReturnsReconstructExactly) {
  for (int setup : {1, 2}) {
    auto s = simulate(small(setup, 2));
    const auto& st = s.panel.storage();
    for (std::size_t t = 0; t < st.months.size(); ++t) {
      const double f = s.truth.factor[static_cast<Eigen::Index>(t)];
      for (std::size_t n = st.month_offset[t]; n < st.month_offset[t + 1]; ++n) {
        const auto k = static_cast<Eigen::Index>(n);
        ASSERT_EQ(st.returns[k], s.truth.beta[k] * f + s.truth.idiosyncratic[k]);
      }
    }
  }
}

TEST(Simulate, BetaFunctionalForm) {
  auto s1 = simulate(small(1, 3));
  const auto& c1 = s1.panel.storage().chars;
  EXPECT_EQ(Vector(c1.col(0).cwiseProduct(c1.col(1))), s1.truth.beta);

  auto s2 = simulate(small(2, 3));
  const auto& st = s2.panel.storage();
  for (std::size_t t = 0; t < st.months.size(); ++t) {
    const double b = state_sign(s2.truth.state[static_cast<Eigen::Index>(t)]);
    EXPECT_TRUE(b == 1.0 || b == -1.0);
    EXPECT_DOUBLE_EQ(st.macro(static_cast<Eigen::Index>(t), 0), 0.05 * static_cast<double>(t + 1) + s2.truth.state[static_cast<Eigen::Index>(t)]);
    for (std::size_t n = st.month_offset[t]; n < st.month_offset[t + 1]; ++n) {
      ASSERT_EQ(s2.truth.beta[static_cast<Eigen::Index>(n)], st.chars(static_cast<Eigen::Index>(n), 0) * b);
    }
  }
  EXPECT_EQ(state_sign(0.0), -1.0);
}

TEST(Simulate, NoiselessReturnsEqualBetaTimesFactor) {
  SimConfig c = small(1, 4);
  c.sigma_e2 = 0.0;
  auto s = simulate(c);
  const auto& st = s.panel.storage();
  for (std::size_t t = 0; t < st.months.size(); ++t) {
    for (std::size_t n = st.month_offset[t]; n < st.month_offset[t + 1]; ++n) {
      const auto k = static_cast<Eigen::Index>(n);
      ASSERT_EQ(st.returns[k], s.truth.beta[k] * s.truth.factor[static_cast<Eigen::Index>(t)]);
    }
  }
  auto m = population_metrics(s, data::split(s.panel, s.split_spec()).test);
  EXPECT_NEAR(m.ev, 1.0, 1e-12);
  EXPECT_NEAR(m.xs_r2, 1.0, 1e-12);
}

TEST(Simulate, InvalidConfigurationsThrow) {
  SimConfig c;
  c.setup = 3;
  EXPECT_THROW(simulate(c), UsageError);
  c.setup = 1;
  c.sigma_f2 = 0.0;
  EXPECT_THROW(simulate(c), UsageError);
  c.sigma_f2 = 0.1;
  c.sigma_e2 = -1.0;
  EXPECT_THROW(simulate(c), UsageError);
}

TEST(Simulate, DriftOfObservedMacro) {
  SimConfig c;
  c.setup = 2;
  c.num_assets = 2;
  for (std::uint64_t seed : {1, 2, 3}) {
    c.seed = seed;
    auto s = simulate(c);
    const Vector& z = s.truth.observed_macro;
    const Eigen::Index T = z.size();
    // telescoping: the mean difference is (Z_T - Z_1)/(T-1); each Z carries N(0, 0.25) noise
    const double mean_diff = (z[T - 1] - z[0]) / static_cast<double>(T - 1);
    const double se = std::sqrt(2.0 * 0.25) / static_cast<double>(T - 1);
    EXPECT_LT(std::abs(mean_diff - 0.05), 3.0 * se + std::abs(std::sin(std::numbers::pi * 600.0 / 24.0)) / 599.0) << seed;
  }
}

TEST(Simulate, FactorSharpeNearOne) {
  SimConfig c;
  c.num_assets = 2;
  int inside = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    c.seed = seed;
    const double sr = eval::sharpe(simulate(c).truth.factor);
    if (sr >= 0.85 && sr <= 1.15) ++inside;
  }
  // SE of a sample SR of 1 at T = 600 is about 0.05, so three SEs cover [0.85, 1.15]
  EXPECT_GE(inside, 9);
}

TEST(Simulate, StateSignFollowsSeasonalCycle) {
  SimConfig c;
  c.setup = 2;
  c.num_assets = 2;
  // agreement with sign(sin) at month t has probability Phi(|sin| / sigma_h); sum it for the oracle
  double expected = 0.0, var = 0.0;
  for (int t = 1; t <= 600; ++t) {
    const double p = 0.5 * std::erfc(-std::abs(std::sin(std::numbers::pi * t / 24.0)) / 0.5 / std::numbers::sqrt2);
    expected += p / 600.0;
    var += p * (1.0 - p) / (600.0 * 600.0);
  }
  EXPECT_NEAR(expected, 0.857, 0.001);
  for (std::uint64_t seed : {1, 2, 3}) {
    c.seed = seed;
    auto s = simulate(c);
    int agree = 0;
    for (Eigen::Index t = 0; t < 600; ++t) {
      const double season = std::sin(std::numbers::pi * static_cast<double>(t + 1) / 24.0);
      if (state_sign(s.truth.state[t]) == state_sign(season)) ++agree;
    }
    EXPECT_NEAR(agree / 600.0, expected, 4.0 * std::sqrt(var)) << seed;
  }
}

TEST(Simulate, RawCharacteristicsCenteredPerMonth) {
  auto s = simulate(small(1, 7));
  const auto& st = s.panel.storage();
  const double se = 1.0 / std::sqrt(40.0);
  int outside = 0;
  for (std::size_t t = 0; t < st.months.size(); ++t) {
    const auto lo = static_cast<Eigen::Index>(st.month_offset[t]);
    for (Eigen::Index j = 0; j < 2; ++j) {
      if (std::abs(st.chars.col(j).segment(lo, 40).mean()) > 4.0 * se) ++outside;
    }
  }
  EXPECT_EQ(outside, 0);
}

TEST(QuantilePanel, ReplacesOnlyCharacteristics) {
  auto s = simulate(small(2, 8));
  auto q = quantile_panel(s.panel);
  EXPECT_EQ(q.storage().returns, s.panel.storage().returns);
  EXPECT_EQ(q.storage().macro, s.panel.storage().macro);
  EXPECT_LE(q.storage().chars.cwiseAbs().maxCoeff(), 0.5);
  // raw truth is untouched
  EXPECT_EQ(Vector(s.panel.storage().chars.col(0)).cwiseAbs(), s.truth.beta.cwiseAbs());
}

TEST(PopulationDirection, ProportionalAndNormalized) {
  auto s = with_betas({{1.0, 2.0}, {1.0, -1.0}, {0.5, 0.5}});
  Vector w = population_sdf_direction(s, s.panel);
  EXPECT_DOUBLE_EQ(w[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(w[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(w[2], 0.5);
  EXPECT_DOUBLE_EQ(w[3], -0.5);
}

TEST(PopulationDirection, AllZeroBetaIsAnError) {
  auto s = with_betas({{1.0, 2.0}, {0.0, 0.0}, {1.0, 1.0}});
  EXPECT_THROW(population_sdf_direction(s, s.panel), NumericalError);
}

TEST(PopulationDirection, MatchesInverseCovarianceOracle) {
  SimConfig c = small(1, 9);
  c.num_assets = 3;
  auto s = simulate(c);
  Vector w = population_sdf_direction(s, s.panel);
  const double mu_f = c.mu_f();
  for (std::size_t t = 0; t < 5; ++t) {
    const auto lo = static_cast<Eigen::Index>(3 * t);
    Vector beta = s.truth.beta.segment(lo, 3);
    // second moment E_t[RR'] and mean E_t[R] of the one-factor model
    Matrix second = beta * beta.transpose() * (c.sigma_f2 + mu_f * mu_f) + c.sigma_e2 * Matrix::Identity(3, 3);
    Vector mean = beta * mu_f;
    Vector omega = second.fullPivLu().solve(mean);
    const double cosine = omega.dot(w.segment(lo, 3)) / (omega.norm() * w.segment(lo, 3).norm());
    EXPECT_NEAR(cosine, 1.0, 1e-10) << t;

    Matrix cov = beta * beta.transpose() * c.sigma_f2 + c.sigma_e2 * Matrix::Identity(3, 3);
    Vector mv = cov.fullPivLu().solve(mean);
    EXPECT_NEAR(mv.dot(beta) / (mv.norm() * beta.norm()), 1.0, 1e-10) << t;
  }
}

TEST(PopulationMetrics, RejectsForeignView) {
  auto a = simulate(small(1, 1));
  auto b = simulate(small(1, 2));
  EXPECT_THROW(population_metrics(a, b.panel), UsageError);
}

TEST(WriteSimulation, EmitsSchemasAndTruth) {
  auto s = simulate(small(2, 10));
  auto dir = std::filesystem::temp_directory_path() / "deepsdf_sim_write";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  write_simulation(dir, s);
  for (const char* f : {"returns.csv", "characteristics.csv", "macro.csv", "truth.csv", "macro_diff.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  auto loaded = data::load_panel(data::default_paths(dir), {false});
  EXPECT_EQ(loaded.storage().returns, s.panel.storage().returns);
  auto truth = data::read_csv((dir / "truth.csv").string());
  EXPECT_EQ(truth.rows.size(), s.panel.num_obs());
  EXPECT_EQ(data::parse_field(truth, 0, truth.column("beta")), s.truth.beta[0]);
  std::filesystem::remove_all(dir);
}
