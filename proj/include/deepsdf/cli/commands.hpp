#pragma once

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepsdf/baselines/forecast.hpp"
#include "deepsdf/baselines/linear.hpp"
#include "deepsdf/cli/config.hpp"
#include "deepsdf/data/io.hpp"
#include "deepsdf/data/transforms.hpp"
#include "deepsdf/eval/beta.hpp"
#include "deepsdf/eval/portfolio.hpp"
#include "deepsdf/eval/report.hpp"
#include "deepsdf/gan/checkpoint.hpp"
#include "deepsdf/gan/importance.hpp"
#include "deepsdf/gan/search.hpp"
#include "deepsdf/sim/simulate.hpp"

namespace deepsdf::cli {

namespace fs = std::filesystem;

/// Estimator-ready panel: rank-transformed characteristics, macro centered on the training months.
struct Prepared {
  data::PanelDataset panel;
  data::Splits splits;
  std::optional<data::FactorSeries> external_factors;
};

inline Prepared prepare(const RunConfig& cfg) {
  data::PanelDataset panel;
  data::SplitSpec spec;
  Prepared p;
  if (!cfg.data_dir.empty()) {
    const fs::path dir(cfg.data_dir);
    panel = data::load_panel(data::default_paths(dir), {cfg.quantile_transform});
    spec = cfg.split.resolve(panel);
    if (fs::exists(dir / "factors.csv")) p.external_factors = data::load_factors((dir / "factors.csv").string());
  } else {
    if (!cfg.sim) throw UsageError("config needs either data.dir or a [sim] section");
    sim::SimulatedPanel s = sim::simulate(*cfg.sim);
    panel = cfg.quantile_transform ? sim::quantile_panel(s.panel) : s.panel;
    const bool explicit_split = cfg.split.ranges || (cfg.split.train && cfg.split.valid && cfg.split.test);
    spec = explicit_split ? cfg.split.resolve(panel) : s.split_spec();
  }
  const data::Splits raw = data::split(panel, spec);
  p.panel = data::center_features(panel, raw.train);
  p.splits = data::split(p.panel, spec);
  return p;
}

/// Keeps observations whose market cap is at least `fraction` of the month's total.
inline data::PanelDataset size_filter(const data::PanelDataset& view, double fraction) {
  const auto& src = view.storage();
  if (!src.market_cap) throw DataError("size filter requires market caps (weights.csv)");
  auto st = std::make_shared<data::PanelStorage>();
  st->asset_ids = src.asset_ids;
  st->char_names = src.char_names;
  st->macro_names = src.macro_names;
  st->macro = src.macro;
  st->months = src.months;
  std::vector<std::size_t> keep;
  st->month_offset.push_back(0);
  for (std::size_t t = 0; t < src.months.size(); ++t) {
    const auto lo = static_cast<Eigen::Index>(src.month_offset[t]);
    const auto len = static_cast<Eigen::Index>(src.month_offset[t + 1] - src.month_offset[t]);
    const double total = src.market_cap->segment(lo, len).sum();
    std::size_t kept = 0;
    for (Eigen::Index n = lo; n < lo + len; ++n) {
      if ((*src.market_cap)[n] >= fraction * total) {
        keep.push_back(static_cast<std::size_t>(n));
        ++kept;
      }
    }
    if (kept == 0) throw DataError("size filter leaves no assets in " + src.months[t].str());
    st->month_offset.push_back(keep.size());
  }
  const auto n = static_cast<Eigen::Index>(keep.size());
  st->returns.resize(n);
  st->chars.resize(n, src.chars.cols());
  st->market_cap = Vector(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto s = static_cast<Eigen::Index>(keep[static_cast<std::size_t>(k)]);
    st->returns[k] = src.returns[s];
    st->chars.row(k) = src.chars.row(s);
    (*st->market_cap)[k] = (*src.market_cap)[s];
    st->asset.push_back(src.asset[static_cast<std::size_t>(s)]);
  }
  st->validate();
  return data::PanelDataset(std::shared_ptr<const data::PanelStorage>(std::move(st)), view.first_month_index(),
                            view.end_month_index());
}

inline fs::path model_dir(const RunConfig& cfg, ModelKind k) { return fs::path(cfg.out_dir) / "models" / model_name(k); }

inline void print_metrics_line(std::ostream& log, const std::string& label, const eval::SplitMetrics& m) {
  log << std::fixed << std::setprecision(4) << label << "  SR " << m.sr << "  EV " << m.ev << "  XS-R2 " << m.xs_r2
      << (m.degenerate ? "  (degenerate factor)" : "") << '\n';
  log.unsetf(std::ios::floatfield);
}

/// Writes the simulated panel in the data-module schemas and prints population metrics.
inline void cmd_simulate(const RunConfig& cfg, std::ostream& log) {
  if (!cfg.sim) throw UsageError("simulate needs a [sim] section");
  sim::SimulatedPanel s = sim::simulate(*cfg.sim);
  fs::create_directories(cfg.out_dir);
  sim::write_simulation(cfg.out_dir, s);
  data::Splits sp = data::split(s.panel, s.split_spec());
  log << "simulated setup " << cfg.sim->setup << ": " << s.panel.num_assets_total() << " assets x "
      << s.panel.num_months() << " months -> " << cfg.out_dir << '\n';
  for (std::size_t k = 0; k < 3; ++k) {
    print_metrics_line(log, std::string("population ") + data::split_name(k), sim::population_metrics(s, sp.get(k)));
  }
}

/// Loading network for a GAN-type SDF: same hidden sizes and state count as the SDF network.
inline baselines::ForecastNet fit_gan_beta(const RunConfig& cfg, const Prepared& p, const gan::EnsembleModel& m) {
  const gan::GanHyperParams& hp = m.hyper();
  gan::PanelNetworkSpec spec = hp.sdf_spec(p.splits.train);
  auto net = eval::fit_beta_network(p.splits, m.factor(p.splits.train).f, m.factor(p.splits.valid).f, spec,
                                    cfg.beta_schedule, mix_seed(cfg.seed, 401));
  return baselines::ForecastNet({net.network()});
}

inline void write_linear_beta(const fs::path& path, const eval::LinearBeta& b, const std::vector<std::string>& names) {
  auto out = eval::open_out(path);
  out << "characteristic,coefficient\n";
  for (std::size_t k = 0; k < names.size(); ++k) out << names[k] << ',' << data::fmt(b.coef[static_cast<Eigen::Index>(k)]) << '\n';
}

inline eval::LinearBeta read_linear_beta(const fs::path& path, const std::vector<std::string>& names) {
  data::CsvTable t = data::read_csv(path.string());
  const std::size_t nc = t.column("characteristic"), cc = t.column("coefficient");
  if (t.rows.size() != names.size()) throw DataError(path.string() + ": characteristic count does not match the panel");
  eval::LinearBeta b{Vector(static_cast<Eigen::Index>(names.size()))};
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (t.rows[k][nc] != names[k]) throw DataError(path.string() + ": unexpected characteristic '" + t.rows[k][nc] + "'");
    b.coef[static_cast<Eigen::Index>(k)] = data::parse_field(t, k, cc);
  }
  return b;
}

inline void cmd_train(const RunConfig& cfg, std::ostream& log) {
  Prepared p = prepare(cfg);
  const auto& names = p.panel.storage().char_names;
  for (ModelKind kind : cfg.models) {
    const fs::path dir = model_dir(cfg, kind);
    fs::create_directories(dir);
    if (kind == ModelKind::gan || kind == ModelKind::unc) {
      gan::GanHyperParams hp = cfg.gan;
      hp.seed = cfg.seed;
      gan::SdfTrainer trainer = kind == ModelKind::gan ? gan::SdfTrainer(gan::default_trainer)
                                                        : gan::SdfTrainer([](const data::Splits& s, const gan::GanHyperParams& h) {
                                                            return gan::train_unc(s, h);
                                                          });
      gan::EnsembleModel model;
      if (cfg.gan_search) {
        gan::SearchOptions opt;
        opt.top_k = cfg.top_k;
        opt.workers = cfg.workers;
        opt.budget = {cfg.max_trainings, cfg.max_seconds};
        opt.trainer = trainer;
        try {
          auto res = gan::hyperparameter_search(p.splits, cfg.grid.enumerate(hp), opt);
          gan::write_search_log((dir / "search_log.csv").string(), res.log);
          model = std::move(res.model);
        } catch (const gan::SearchBudgetError& e) {
          gan::write_search_log((dir / "search_log.csv").string(), e.log);
          throw;
        }
      } else {
        model = gan::train_ensemble(p.splits, hp, cfg.workers, trainer);
      }
      gan::save_ensemble(dir, model);
      baselines::save_forecaster(dir / "beta", fit_gan_beta(cfg, p, model));
      log << model_name(kind) << ": " << model.hyper().describe() << ", " << model.members().size() << " members, valid SR "
          << gan::sharpe_or_lowest(model.factor(p.splits.valid).f) << '\n';
    } else if (kind == ModelKind::ls || kind == ModelKind::en) {
      auto train_f = data::build_managed_factors(p.splits.train, cfg.split_legs);
      baselines::LinearSdf m;
      if (kind == ModelKind::ls) {
        m = baselines::fit_ls(train_f);
      } else {
        auto fit = baselines::fit_en(train_f, data::build_managed_factors(p.splits.valid, cfg.split_legs), cfg.en);
        m = fit.model;
        log << "en: lambda1 " << m.lambda1 << ", lambda2 " << m.lambda2 << '\n';
      }
      baselines::write_theta((dir / "theta.csv").string(), m);
      const Vector f_train = baselines::sdf_from_linear(m, p.splits.train).f;
      write_linear_beta(dir / "beta.csv", eval::fit_linear_beta(p.splits.train, f_train), names);
      log << model_name(kind) << ": valid SR " << gan::sharpe_or_lowest(baselines::sdf_from_linear(m, p.splits.valid).f) << '\n';
    } else {
      baselines::ForecastConfig fc = cfg.ffn;
      fc.seed = cfg.seed;
      auto m = baselines::fit_ffn_forecaster(p.splits, fc, cfg.workers);
      baselines::save_forecaster(dir, m);
      log << "ffn: " << m.members().size() << " members, valid SR " << gan::sharpe_or_lowest(m.factor(p.splits.valid).f) << '\n';
    }
  }
}

/// A trained model reduced to per-observation weights and loadings on any view.
struct LoadedModel {
  ModelKind kind;
  std::function<Vector(const data::PanelDataset&)> weights;
  std::function<Vector(const data::PanelDataset&)> beta;
};

inline LoadedModel load_model(const RunConfig& cfg, ModelKind kind, const data::PanelDataset& panel) {
  const fs::path dir = model_dir(cfg, kind);
  if (!fs::exists(dir)) throw DataError("missing checkpoint for model '" + std::string(model_name(kind)) + "' in " + dir.string());
  LoadedModel m{kind, {}, {}};
  if (kind == ModelKind::gan || kind == ModelKind::unc) {
    auto sdf = std::make_shared<gan::EnsembleModel>(gan::load_ensemble(dir));
    auto beta = std::make_shared<baselines::ForecastNet>(baselines::load_forecaster(dir / "beta"));
    m.weights = [sdf](const data::PanelDataset& v) { return sdf->weights(v); };
    m.beta = [beta](const data::PanelDataset& v) { return beta->predict(v); };
  } else if (kind == ModelKind::ls || kind == ModelKind::en) {
    auto theta = std::make_shared<baselines::LinearSdf>(
        baselines::read_theta((dir / "theta.csv").string(), panel.storage().char_names));
    auto beta = std::make_shared<eval::LinearBeta>(read_linear_beta(dir / "beta.csv", panel.storage().char_names));
    m.weights = [theta](const data::PanelDataset& v) { return baselines::sdf_from_linear(*theta, v).omega; };
    m.beta = [beta](const data::PanelDataset& v) { return beta->predict(v).beta; };
  } else {
    auto ffn = std::make_shared<baselines::ForecastNet>(baselines::load_forecaster(dir));
    m.weights = [ffn](const data::PanelDataset& v) { return ffn->weights(v); };
    m.beta = [ffn](const data::PanelDataset& v) { return ffn->predict(v); };
  }
  return m;
}

inline Vector factor_of(const data::PanelDataset& view, const Vector& w) { return gan::sdf_factor_series(view, w); }

inline void cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  Prepared p = prepare(cfg);
  data::Splits views = p.splits;
  if (cfg.size_filter > 0.0) {
    data::PanelDataset filtered = size_filter(p.panel, cfg.size_filter);
    views = data::Splits{filtered.subview(p.splits.train.first_month_index(), p.splits.train.end_month_index()),
                         filtered.subview(p.splits.valid.first_month_index(), p.splits.valid.end_month_index()),
                         filtered.subview(p.splits.test.first_month_index(), p.splits.test.end_month_index())};
  }
  const fs::path out = fs::path(cfg.out_dir) / "eval";
  fs::create_directories(out);
  std::vector<eval::EvaluationReport> reports;
  std::vector<eval::NamedSeries> test_factors;
  std::vector<std::string> cum_names;
  Matrix cum;
  const data::PanelDataset& test = views.test;
  std::vector<Month> test_months;
  for (std::size_t t = 0; t < test.num_months(); ++t) test_months.push_back(test.month(t));

  for (ModelKind kind : cfg.models) {
    LoadedModel m = load_model(cfg, kind, p.panel);
    eval::EvaluationReport rep;
    rep.model = model_name(kind);
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& v = views.get(k);
      rep.splits.push_back(eval::evaluate_split(data::split_name(k), v, m.weights(v), m.beta(v), cfg.l1_normalize));
    }
    for (const auto& s : rep.splits) print_metrics_line(log, rep.model + " " + s.split, s.metrics);
    const Vector w = m.weights(test);
    const Vector beta = m.beta(test);
    const Vector f = factor_of(test, w);
    const bool degenerate = rep.at("test").metrics.degenerate;
    if (!degenerate) {
      test_factors.push_back({rep.model, test_months, f});
      cum.conservativeResize(static_cast<Eigen::Index>(test_months.size()), cum.cols() + 1);
      cum.rightCols(1) = eval::cumulative_returns(f / eval::stddev(eval::as_span(f)));
      cum_names.push_back(rep.model);
    }

    auto deciles = eval::beta_decile_sort(test, beta, cfg.weighting);
    eval::write_portfolio_csv(out / (rep.model + "_beta_deciles.csv"), eval::portfolio_report(deciles, "beta"));
    Matrix with_spread(deciles.returns.rows(), deciles.returns.cols() + 1);
    with_spread << deciles.returns, eval::spread_returns(deciles);
    std::vector<std::string> labels = deciles.names;
    labels.push_back("D10-D1");
    eval::write_series_csv(out / (rep.model + "_beta_deciles_cumulative.csv"), deciles.months, labels,
                           eval::cumulative_returns(with_spread));
    if (p.external_factors) {
      std::vector<std::size_t> rows;
      for (const auto& mo : deciles.months) {
        auto it = std::find(p.external_factors->months.begin(), p.external_factors->months.end(), mo);
        if (it == p.external_factors->months.end()) throw DataError("factors.csv lacks month " + mo.str());
        rows.push_back(static_cast<std::size_t>(it - p.external_factors->months.begin()));
      }
      Matrix fac(static_cast<Eigen::Index>(rows.size()), p.external_factors->values.cols());
      for (std::size_t r = 0; r < rows.size(); ++r) fac.row(static_cast<Eigen::Index>(r)) = p.external_factors->values.row(static_cast<Eigen::Index>(rows[r]));
      auto alpha = eval::alpha_regression(deciles.returns, fac);
      auto grs = eval::grs_test(alpha.alpha, alpha.residuals, fac);
      eval::write_alpha_csv(out / (rep.model + "_beta_deciles_alpha.csv"), deciles.names, alpha, grs);
    }
    {
      auto sorts = eval::open_out(out / (rep.model + "_characteristic_sorts.csv"));
      sorts << "sort,ev,xs_r2\n";
      for (std::size_t c = 0; c < test.num_chars(); ++c) {
        auto r = eval::characteristic_sort_report(test, beta, {c}, eval::SortDepth::decile, cfg.weighting);
        eval::write_portfolio_csv(out / (rep.model + "_sort_" + r.sort + ".csv"), r);
        sorts << r.sort << ',' << data::fmt(r.total_ev) << ',' << data::fmt(r.xs_r2) << '\n';
      }
      if (test.num_chars() >= 2) {
        // Thin cross-sections can leave a 5x5 cell empty; that sort is dropped, not the whole evaluation.
        try {
          auto r = eval::characteristic_sort_report(test, beta, {0, 1}, eval::SortDepth::double5x5, cfg.weighting);
          eval::write_portfolio_csv(out / (rep.model + "_sort_" + r.sort + ".csv"), r);
          sorts << r.sort << ',' << data::fmt(r.total_ev) << ',' << data::fmt(r.xs_r2) << '\n';
        } catch (const DataError& e) {
          log << rep.model << ": double sort skipped (" << e.what() << ")\n";
        }
      }
    }
    if (rep.degenerate()) log << rep.model << ": degenerate factor (zero variance); metrics flagged\n";
    reports.push_back(std::move(rep));
  }

  eval::write_metrics_csv(out / "metrics.csv", reports);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) j.push_back(eval::to_json(r));
  eval::open_out(out / "metrics.json") << j.dump(2) << '\n';
  if (!cum_names.empty()) eval::write_series_csv(out / "cumulative_returns.csv", test_months, cum_names, cum);
  if (p.external_factors) {
    for (Eigen::Index k = 0; k < p.external_factors->values.cols(); ++k) {
      test_factors.push_back({p.external_factors->names[static_cast<std::size_t>(k)], p.external_factors->months,
                              p.external_factors->values.col(k)});
    }
  }
  if (test_factors.size() >= 1) {
    eval::write_correlation_csv(out / "factor_correlations.csv", eval::factor_correlations(test_factors));
  }
}

inline void cmd_importance(const RunConfig& cfg, std::ostream& log) {
  Prepared p = prepare(cfg);
  const data::PanelDataset& test = p.splits.test;
  const fs::path out = fs::path(cfg.out_dir) / "importance";
  const auto& cnames = p.panel.storage().char_names;
  const auto& mnames = p.panel.storage().macro_names;
  for (ModelKind kind : cfg.models) {
    const fs::path dir = model_dir(cfg, kind);
    if (!fs::exists(dir)) throw DataError("missing checkpoint for model '" + std::string(model_name(kind)) + "' in " + dir.string());
    const std::string name = model_name(kind);
    gan::Importance imp;
    if (kind == ModelKind::gan || kind == ModelKind::unc) {
      imp = gan::variable_importance(gan::load_ensemble(dir), test);
    } else if (kind == ModelKind::ffn) {
      auto ffn = baselines::load_forecaster(dir);
      gan::InputGradients sum = gan::input_gradients(ffn.members().front(), test);
      for (std::size_t k = 1; k < ffn.members().size(); ++k) {
        auto g = gan::input_gradients(ffn.members()[k], test);
        sum.chars += g.chars;
        if (sum.macro.size() > 0) sum.macro += g.macro;
      }
      imp = gan::importance_from_gradients(sum, test);
    } else {
      imp.chars = baselines::linear_importance(baselines::read_theta((dir / "theta.csv").string(), cnames), test);
    }
    eval::write_importance_csv(out / (name + "_characteristics.csv"), cnames, imp.chars);
    if (imp.macro.size() > 0) eval::write_importance_csv(out / (name + "_macro.csv"), mnames, imp.macro);
    Eigen::Index top = 0;
    imp.chars.maxCoeff(&top);
    log << name << ": most important characteristic " << cnames[static_cast<std::size_t>(top)] << " ("
        << imp.chars[top] << ")\n";
  }
}

/// Comparison table from evaluation artifacts only: one row per model, 9 metric columns.
inline void cmd_report(const RunConfig& cfg, std::ostream& log) {
  const fs::path metrics = fs::path(cfg.out_dir) / "eval" / "metrics.csv";
  if (!fs::exists(metrics)) throw DataError("no evaluation artifacts at " + metrics.string() + "; run evaluate first");
  data::CsvTable t = data::read_csv(metrics.string());
  const std::size_t cm = t.column("model"), cs = t.column("split"), csr = t.column("sr"), cev = t.column("ev"),
                    cxs = t.column("xs_r2"), cdeg = t.column("degenerate_factor");
  std::vector<eval::EvaluationReport> reports;
  for (ModelKind kind : cfg.models) {
    eval::EvaluationReport r;
    r.model = model_name(kind);
    for (std::size_t row = 0; row < t.rows.size(); ++row) {
      if (t.rows[row][cm] != r.model) continue;
      eval::SplitEvaluation s;
      s.split = t.rows[row][cs];
      s.metrics.sr = data::parse_field(t, row, csr);
      s.metrics.ev = data::parse_field(t, row, cev);
      s.metrics.xs_r2 = data::parse_field(t, row, cxs);
      s.metrics.degenerate = t.rows[row][cdeg] == "1";
      r.splits.push_back(s);
    }
    if (r.splits.empty()) throw DataError("no evaluation rows for model '" + r.model + "' in " + metrics.string());
    reports.push_back(std::move(r));
  }
  const fs::path out = fs::path(cfg.out_dir) / "report" / "comparison.csv";
  eval::write_comparison_csv(out, reports);
  log << std::left << std::setw(6) << "model";
  for (const auto& c : eval::comparison_columns()) log << std::right << std::setw(12) << c;
  log << '\n';
  for (const auto& r : reports) {
    log << std::left << std::setw(6) << r.model << std::right << std::fixed << std::setprecision(3);
    for (const char* what : {"sr", "ev", "xs"}) {
      for (const char* s : {"train", "valid", "test"}) {
        const auto& m = r.at(s).metrics;
        log << std::setw(12) << (what[0] == 's' ? m.sr : (what[0] == 'e' ? m.ev : m.xs_r2));
      }
    }
    log << (r.degenerate() ? "  degenerate factor" : "") << '\n';
    log.unsetf(std::ios::floatfield);
  }
}

}  // namespace deepsdf::cli
