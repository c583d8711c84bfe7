#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "deepsdf/gan/checkpoint.hpp"
#include "deepsdf/gan/importance.hpp"
#include "deepsdf/gan/loss.hpp"
#include "deepsdf/gan/model.hpp"
#include "deepsdf/gan/search.hpp"
#include "deepsdf/gan/train.hpp"
#include "support.hpp"

using namespace deepsdf;
using namespace deepsdf::gan;
namespace dt = deepsdf::testing;

namespace {

Matrix ones(std::size_t n) { return Matrix::Ones(static_cast<Eigen::Index>(n), 1); }

GanHyperParams tiny_hp(std::uint64_t seed = 1) {
  GanHyperParams hp;
  hp.hidden_layers = 2;
  hp.hidden_units = 8;
  hp.sdf_states = 3;
  hp.cond_states = 4;
  hp.cond_layers = 1;
  hp.cond_moments = 3;
  hp.epochs_unconditional = 24;
  hp.epochs_moment = 24;
  hp.epochs_conditional = 24;
  hp.ensemble_size = 2;
  hp.seed = seed;
  return hp;
}

data::Splits tiny_splits(std::uint64_t seed = 11, std::size_t months = 30) {
  auto panel = dt::random_panel({months, 8, 2, 2, true}, seed);
  const std::size_t train = months / 2, valid = months / 5;
  return data::split(panel, data::SplitSpec::by_length(panel, train, valid, months - train - valid));
}

/// Same panel with every month's observations listed in reverse asset order.
data::PanelDataset reversed(const data::PanelDataset& p) {
  const auto& src = p.storage();
  auto st = std::make_shared<data::PanelStorage>(src);
  for (std::size_t t = 0; t < src.months.size(); ++t) {
    const std::size_t lo = src.month_offset[t], hi = src.month_offset[t + 1];
    for (std::size_t k = 0; k < hi - lo; ++k) {
      const std::size_t from = hi - 1 - k, to = lo + k;
      st->asset[to] = src.asset[from];
      st->returns[static_cast<Eigen::Index>(to)] = src.returns[static_cast<Eigen::Index>(from)];
      st->chars.row(static_cast<Eigen::Index>(to)) = src.chars.row(static_cast<Eigen::Index>(from));
    }
  }
  st->validate();
  return data::PanelDataset(std::shared_ptr<const data::PanelStorage>(std::move(st)));
}

}  // namespace

TEST(GanLoss, SpecExamples) {
  auto one = dt::panel_from({{0.1}});
  EXPECT_NEAR(gan_loss(one, Vector::Zero(1), ones(1)), 0.01, 1e-17);

  auto flat = dt::panel_from({{0.1}, {-0.1}});
  EXPECT_EQ(gan_loss(flat, Vector::Zero(2), ones(2)), 0.0);

  // asset 0 present in all four months, asset 1 only in the first; identical per-asset mean error e
  const double e = 0.2;
  auto uneven = dt::panel_from({{e, e}, {e}, {e}, {e}});
  EXPECT_NEAR(gan_loss(uneven, Vector::Zero(5), ones(5)), 0.5 * (e * e + e * e / 4.0), 1e-15);
}

TEST(GanLoss, MisalignedInputsThrow) {
  auto p = dt::panel_from({{0.1, 0.2}});
  EXPECT_THROW(gan_loss(p, Vector::Zero(3), ones(2)), DimensionError);
  EXPECT_THROW(gan_loss(p, Vector::Zero(2), Matrix(2, 0)), DimensionError);
}

TEST(GanLoss, DecomposesOverMomentColumns) {
  auto p = dt::random_panel({10, 6, 1, 0, true}, 2);
  const auto n = static_cast<Eigen::Index>(p.num_obs());
  Vector omega = dt::random_matrix(n, 1, 3).col(0) * 0.1;
  Matrix g = dt::random_matrix(n, 4, 4);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < 4; ++j) sum += gan_loss(p, omega, g.col(j));
  EXPECT_NEAR(gan_loss(p, omega, g), sum, 1e-15 * std::abs(sum) + 1e-18);
}

TEST(GanLoss, AssetOrderWithinMonthIsIrrelevant) {
  auto p = dt::random_panel({8, 7, 2, 0, true}, 5);
  auto q = reversed(p);
  PanelNetwork net({2, 0, {8}, 0, 1, 1.0}, 6);
  PanelNetwork cond({2, 0, {}, 0, 3, 1.0}, 7);
  SdfModel m(tiny_hp(), net);
  Vector fp = m.factor(p).f, fq = m.factor(q).f;
  EXPECT_LT((fp - fq).cwiseAbs().maxCoeff(), 1e-15);
  const double lp = gan_loss(p, m.weights(p), cond.forward(p));
  const double lq = gan_loss(q, m.weights(q), cond.forward(q));
  EXPECT_NEAR(lp, lq, 1e-14 * lp);
}

TEST(GanLoss, ComposedGradientsMatchFiniteDifferences) {
  auto p = dt::random_panel({12, 6, 3, 2, true}, 8);
  PanelNetwork sdf({3, 2, {8, 8}, 3, 1, 1.0}, 9);
  PanelNetwork cond({3, 2, {3}, 4, 3, 1.0}, 10);
  const Matrix g_fixed = cond.forward(p);
  auto sdf_loss = [&] { return gan_loss(p, scale_by_breadth(p, sdf.forward(p).col(0)), g_fixed); };

  PanelNetworkTape tape;
  LossGradient lg;
  gan_loss(p, scale_by_breadth(p, sdf.forward(p, Mode::eval, nullptr, &tape).col(0)), g_fixed, &lg);
  PanelGradient grad = sdf.zero_gradient();
  sdf.backward(p, tape, scale_by_breadth(p, lg.d_omega), grad);
  auto a = dt::finite_difference_check(sdf.ffn_params().values(), grad.ffn, sdf_loss, 1000);
  auto b = dt::finite_difference_check(sdf.lstm_params().values(), grad.lstm, sdf_loss, 1000);
  EXPECT_GE(a.checked + b.checked, 100u);
  EXPECT_LT(a.worst, 1e-4) << "sdf ffn " << a.where;
  EXPECT_LT(b.worst, 1e-4) << "sdf lstm " << b.where;

  const Vector omega_fixed = scale_by_breadth(p, sdf.forward(p).col(0));
  auto cond_loss = [&] { return gan_loss(p, omega_fixed, cond.forward(p)); };
  PanelNetworkTape ctape;
  gan_loss(p, omega_fixed, cond.forward(p, Mode::eval, nullptr, &ctape), &lg);
  PanelGradient cgrad = cond.zero_gradient();
  cond.backward(p, ctape, lg.d_g, cgrad);
  auto c = dt::finite_difference_check(cond.ffn_params().values(), cgrad.ffn, cond_loss, 1000);
  auto d = dt::finite_difference_check(cond.lstm_params().values(), cgrad.lstm, cond_loss, 1000);
  EXPECT_GE(c.checked + d.checked, 100u);
  EXPECT_LT(c.worst, 1e-4) << "cond ffn " << c.where;
  EXPECT_LT(d.worst, 1e-4) << "cond lstm " << d.where;
}

TEST(SdfWeights, ZeroNetworkGivesUnitSdf) {
  auto p = dt::random_panel({5, 4, 2, 1}, 12);
  PanelNetwork net({2, 1, {4}, 2, 1, 1.0}, 0);
  net.ffn_params().values().setZero();
  SdfModel m(tiny_hp(), net);
  EXPECT_TRUE(m.weights(p).isZero(0.0));
  auto s = m.factor(p);
  EXPECT_TRUE(s.f.isZero(0.0));
  EXPECT_TRUE(s.m.isOnes(0.0));
}

TEST(SdfWeights, DuplicatingAssetsHalvesWeightsNotFactor) {
  auto p = dt::panel_from({{0.1, -0.2}, {0.05, 0.3}}, {{0.5, -0.5}, {0.2, 0.1}});
  auto pp = dt::panel_from({{0.1, -0.2, 0.1, -0.2}, {0.05, 0.3, 0.05, 0.3}}, {{0.5, -0.5, 0.5, -0.5}, {0.2, 0.1, 0.2, 0.1}});
  SdfModel m(tiny_hp(), PanelNetwork({1, 0, {8}, 0, 1, 1.0}, 13));
  Vector w = m.weights(p), ww = m.weights(pp);
  EXPECT_DOUBLE_EQ(ww[0], w[0] / 2.0);
  EXPECT_DOUBLE_EQ(ww[5], w[3] / 2.0);
  EXPECT_LT((m.factor(p).f - m.factor(pp).f).cwiseAbs().maxCoeff(), 1e-16);
}

TEST(SdfFactor, SpecExamples) {
  auto one = dt::panel_from({{0.1}});
  auto s = factor_from_weights(one, Vector::Constant(1, 10.0), false);
  EXPECT_NEAR(s.f[0], 1.0, 1e-15);
  EXPECT_NEAR(s.m[0], 0.0, 1e-15);

  auto p = dt::random_panel({9, 5, 1}, 14);
  Vector omega = dt::random_matrix(static_cast<Eigen::Index>(p.num_obs()), 1, 15).col(0);
  Vector raw = factor_from_weights(p, omega, false).f;
  Vector l1 = factor_from_weights(p, omega, true).f;
  for (Eigen::Index t = 0; t < raw.size(); ++t) EXPECT_EQ(raw[t] > 0, l1[t] > 0);
  EXPECT_THROW(factor_from_weights(p, Vector::Zero(omega.size()), true), NumericalError);
}

TEST(Ensemble, MeanOfMembers) {
  auto p = dt::random_panel({10, 6, 2, 1, true}, 16);
  GanHyperParams hp = tiny_hp();
  std::vector<SdfModel> members;
  for (std::uint64_t s = 0; s < 3; ++s) members.emplace_back(hp, PanelNetwork(hp.sdf_spec(p), 20 + s));
  EnsembleModel ens(members);
  Vector mean = (members[2].weights(p) + members[1].weights(p) + members[0].weights(p)) / 3.0;
  EXPECT_LT((ens.weights(p) - mean).cwiseAbs().maxCoeff(), 1e-16);

  EXPECT_EQ(EnsembleModel({members[0]}).weights(p), members[0].weights(p));
  EnsembleModel copies({members[1], members[1], members[1], members[1]});
  EXPECT_EQ(copies.weights(p), members[1].weights(p));

  GanHyperParams other = hp;
  other.lr = 5e-4;
  EXPECT_THROW(EnsembleModel({members[0], SdfModel(other, members[1].network())}), UsageError);
  EXPECT_THROW(EnsembleModel(std::vector<SdfModel>{}), UsageError);
}

TEST(SdfWeights, NoLookAhead) {
  auto st = dt::random_storage({24, 5, 2, 2}, 17);
  data::PanelDataset p{std::shared_ptr<const data::PanelStorage>(st)};
  auto spec = data::SplitSpec::by_length(p, 10, 4, 10);
  GanHyperParams hp = tiny_hp();
  SdfModel m(hp, PanelNetwork(hp.sdf_spec(p), 18));
  const Vector before = m.weights(data::split(p, spec).test);

  const std::size_t cut = 18;  // global month; months after it get new macro values
  auto shocked = std::make_shared<data::PanelStorage>(*st);
  shocked->macro.bottomRows(static_cast<Eigen::Index>(24 - cut - 1)) = dt::random_matrix(24 - cut - 1, 2, 19) * 5.0;
  data::PanelDataset q{std::shared_ptr<const data::PanelStorage>(shocked)};
  auto test_q = data::split(q, spec).test;
  const Vector after = m.weights(test_q);
  const auto known = static_cast<Eigen::Index>(test_q.obs_end(cut - test_q.first_month_index()) - test_q.first_obs());
  EXPECT_EQ(before.head(known), after.head(known));
  EXPECT_NE(before.tail(before.size() - known), after.tail(after.size() - known));
}

TEST(TrainGan, PhasesMoveTheLossInTheirDirection) {
  auto splits = tiny_splits();
  auto res = train_gan(splits, tiny_hp(3));
  ASSERT_EQ(res.phases.size(), 3u);
  EXPECT_EQ(res.phases[0].name, "unconditional");
  EXPECT_LE(res.phases[0].end_eval, res.phases[0].start_eval);
  EXPECT_GE(res.phases[1].end_eval, res.phases[1].start_eval);
  EXPECT_LE(res.phases[2].end_eval, res.phases[2].start_eval);
  EXPECT_EQ(res.phases[1].loss.size(), 24u);
  EXPECT_TRUE(res.sdf.weights(splits.test).allFinite());
  EXPECT_EQ(res.cond.moments(splits.train).cols(), 3);
}

TEST(TrainGan, DeterministicAndUncIsPhaseA) {
  auto splits = tiny_splits();
  auto a = train_gan(splits, tiny_hp(4));
  auto b = train_gan(splits, tiny_hp(4));
  EXPECT_EQ(a.sdf.network().ffn_params().values(), b.sdf.network().ffn_params().values());
  EXPECT_EQ(a.cond.network().lstm_params().values(), b.cond.network().lstm_params().values());
  auto unc = train_unc(splits, tiny_hp(4));
  EXPECT_EQ(unc.network().ffn_params().values(), a.after_unconditional.network().ffn_params().values());
  EXPECT_EQ(unc.network().lstm_params().values(), a.after_unconditional.network().lstm_params().values());
  EXPECT_NE(unc.network().ffn_params().values(), a.sdf.network().ffn_params().values());
}

TEST(TrainGan, ConstantReturnReachesMomentSolution) {
  std::vector<std::vector<double>> r(40, std::vector<double>{0.1});
  auto p = dt::panel_from(r);
  auto splits = data::split(p, data::SplitSpec::by_length(p, 30, 5, 5));
  GanHyperParams hp = tiny_hp();
  hp.hidden_layers = 0;
  hp.keep_prob = 1.0;
  hp.lr = 0.05;
  hp.epochs_unconditional = 2000;
  auto m = train_unc(splits, hp);
  EXPECT_LT(std::abs(m.weights(splits.train)[0] - 10.0), 0.5);
}

TEST(TrainGan, SingleAssetMatchesClosedForm) {
  Rng rng(21);
  std::normal_distribution<double> z(0.05, 0.1);
  std::vector<std::vector<double>> r(200);
  for (auto& m : r) m = {z(rng)};
  auto p = dt::panel_from(r);
  auto splits = data::split(p, data::SplitSpec::by_length(p, 150, 25, 25));
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t t = 0; t < 150; ++t) {
    m1 += r[t][0] / 150.0;
    m2 += r[t][0] * r[t][0] / 150.0;
  }
  GanHyperParams hp = tiny_hp();
  hp.hidden_layers = 0;
  hp.keep_prob = 1.0;
  hp.lr = 0.02;
  hp.epochs_unconditional = 3000;
  auto m = train_unc(splits, hp);
  const double omega = m.weights(splits.train)[0];
  EXPECT_NEAR(omega / (m1 / m2), 1.0, 0.05) << omega << " vs " << m1 / m2;
}

TEST(Search, FullGridHas384Configurations) {
  GanGrid grid;
  EXPECT_EQ(grid.size(), 384u);
  auto all = grid.enumerate();
  ASSERT_EQ(all.size(), 384u);
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) ASSERT_FALSE(all[i].same_configuration(all[j])) << i << ' ' << j;
  }
}

namespace {

/// Trainer that skips training; scorer reads the validation SR off the learning rate.
SearchOptions stub_options(std::size_t* trainings) {
  SearchOptions o;
  o.trainer = [trainings](const data::Splits& s, const GanHyperParams& hp) {
    ++*trainings;
    return SdfModel(hp, PanelNetwork(hp.sdf_spec(s.train), hp.seed));
  };
  o.scorer = [](const EnsembleModel& m, const data::Splits&) {
    return SplitSharpe{0.0, std::sin(1e4 * m.hyper().lr)};
  };
  return o;
}

}  // namespace

TEST(Search, StubSelectsMaxValidationSharpe) {
  auto splits = tiny_splits();
  std::vector<GanHyperParams> grid;
  for (double lr : {1e-4, 2e-4, 3e-4, 4e-4, 5e-4, 6e-4}) {
    GanHyperParams hp = tiny_hp();
    hp.lr = lr;
    hp.ensemble_size = 9;
    grid.push_back(hp);
  }
  std::size_t trainings = 0;
  auto res = hyperparameter_search(splits, grid, stub_options(&trainings));
  std::size_t best = 0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (std::sin(1e4 * grid[k].lr) > std::sin(1e4 * grid[best].lr)) best = k;
  }
  EXPECT_EQ(res.config_id, best);
  EXPECT_EQ(res.model.members().size(), 9u);
  EXPECT_EQ(trainings, 6u + 4u * 9u);
  EXPECT_EQ(res.log.size(), 6u + 4u);
  EXPECT_EQ(res.log.front().stage, "grid");
  EXPECT_EQ(res.log.back().stage, "ensemble");
}

TEST(Search, GridOfOneAndBudget) {
  auto splits = tiny_splits();
  std::size_t trainings = 0;
  auto opts = stub_options(&trainings);
  auto res = hyperparameter_search(splits, {tiny_hp()}, opts);
  EXPECT_EQ(res.config_id, 0u);
  EXPECT_EQ(res.model.members().size(), 2u);

  opts.budget.max_trainings = 3;
  std::vector<GanHyperParams> grid(5, tiny_hp());
  try {
    hyperparameter_search(splits, grid, opts);
    FAIL() << "expected budget exhaustion";
  } catch (const SearchBudgetError& e) {
    EXPECT_EQ(e.log.size(), 3u);
  }
  EXPECT_THROW(hyperparameter_search(splits, {}, opts), UsageError);
}

TEST(Importance, LinearWeightsAndDisconnectedInput) {
  auto p = dt::random_panel({6, 5, 2, 0, true}, 22);
  PanelNetwork net({2, 0, {}, 0, 1, 1.0}, 0);
  net.ffn_params().values().setZero();
  net.ffn_params().matrix("l0.W") << 2.0, 3.0;
  auto imp = variable_importance(SdfModel(tiny_hp(), net), p);
  EXPECT_NEAR(imp.chars[0], 0.4, 1e-15);
  EXPECT_NEAR(imp.chars[1], 0.6, 1e-15);
  EXPECT_EQ(imp.names, (std::vector<std::string>{"c0", "c1"}));

  net.ffn_params().matrix("l0.W") << 2.0, 0.0;
  imp = variable_importance(SdfModel(tiny_hp(), net), p);
  EXPECT_EQ(imp.chars[1], 0.0);

  net.ffn_params().values().setZero();
  EXPECT_THROW(variable_importance(SdfModel(tiny_hp(), net), p), NumericalError);
}

TEST(Importance, MatchesFiniteDifferences) {
  auto st = dt::random_storage({8, 6, 3, 0, true}, 23);
  data::PanelDataset p{std::shared_ptr<const data::PanelStorage>(st)};
  SdfModel m(tiny_hp(), PanelNetwork({3, 0, {8, 8}, 0, 1, 1.0}, 24));
  const double h = 1e-6;
  Vector fd(3);
  for (Eigen::Index j = 0; j < 3; ++j) {
    auto up = std::make_shared<data::PanelStorage>(*st), down = std::make_shared<data::PanelStorage>(*st);
    up->chars.col(j).array() += h;
    down->chars.col(j).array() -= h;
    Vector wu = m.weights(data::PanelDataset(std::shared_ptr<const data::PanelStorage>(up)));
    Vector wd = m.weights(data::PanelDataset(std::shared_ptr<const data::PanelStorage>(down)));
    fd[j] = ((wu - wd) / (2.0 * h)).cwiseAbs().sum();
  }
  fd /= fd.sum();
  auto imp = variable_importance(m, p);
  EXPECT_LT((imp.chars - fd).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Importance, EnsembleAndMacroThroughLstm) {
  auto splits = tiny_splits(25);
  GanHyperParams hp = tiny_hp();
  EnsembleModel ens({SdfModel(hp, PanelNetwork(hp.sdf_spec(splits.train), 26)),
                     SdfModel(hp, PanelNetwork(hp.sdf_spec(splits.train), 27))});
  auto imp = variable_importance(ens, splits.test);
  EXPECT_NEAR(imp.chars.sum(), 1.0, 1e-12);
  ASSERT_EQ(imp.macro.size(), 2);
  EXPECT_NEAR(imp.macro.sum(), 1.0, 1e-12);
}

TEST(Checkpoint, RoundTripIsExact) {
  auto splits = tiny_splits(28);
  GanHyperParams hp = tiny_hp(29);
  EnsembleModel ens({SdfModel(hp, PanelNetwork(hp.sdf_spec(splits.train), 30)),
                     SdfModel(hp, PanelNetwork(hp.sdf_spec(splits.train), 31))});
  auto dir = std::filesystem::temp_directory_path() / "deepsdf_gan_ckpt";
  std::filesystem::remove_all(dir);
  save_ensemble(dir, ens);
  auto back = load_ensemble(dir);
  EXPECT_TRUE(back.hyper().same_configuration(hp));
  EXPECT_EQ(back.hyper().seed, hp.seed);
  EXPECT_EQ(back.weights(splits.test), ens.weights(splits.test));

  std::filesystem::remove(dir / "member1.lstm.params");
  EXPECT_THROW(load_ensemble(dir), Error);
  std::filesystem::remove_all(dir);
}
