#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepsdf/core/error.hpp"
#include "deepsdf/data/csv.hpp"
#include "deepsdf/data/panel.hpp"
#include "deepsdf/eval/metrics.hpp"
#include "deepsdf/eval/portfolio.hpp"

namespace deepsdf::eval {

struct SplitEvaluation {
  std::string split;
  SplitMetrics metrics;
  std::optional<RiskStats> risk;      // absent for a degenerate factor
  std::optional<Turnover> turnover;   // absent for a degenerate factor or all-zero weights
  std::optional<double> sr_normalized;  // SR of the l1-normalized weight factor, when requested
};

struct EvaluationReport {
  std::string model;
  std::vector<SplitEvaluation> splits;

  bool degenerate() const {
    for (const auto& s : splits) if (s.metrics.degenerate) return true;
    return false;
  }
  const SplitEvaluation& at(const std::string& split) const {
    for (const auto& s : splits) if (s.split == split) return s;
    throw UsageError("report for model '" + model + "' has no split '" + split + "'");
  }
};

/// Factor, loadings and weights of one model on one view, reduced to the reported statistics.
inline SplitEvaluation evaluate_split(const std::string& name, const data::PanelDataset& view, const Vector& weights,
                                      const Vector& beta, bool l1_normalize) {
  Vector r = view.returns();
  Vector f(static_cast<Eigen::Index>(view.num_months()));
  const std::size_t base = view.first_obs();
  for (std::size_t t = 0; t < view.num_months(); ++t) {
    const auto lo = static_cast<Eigen::Index>(view.obs_begin(t) - base);
    const auto len = static_cast<Eigen::Index>(view.assets_in_month(t));
    f[static_cast<Eigen::Index>(t)] = weights.segment(lo, len).dot(r.segment(lo, len));
  }
  SplitEvaluation e;
  e.split = name;
  e.metrics = split_metrics(view, f, beta);
  if (!e.metrics.degenerate) {
    e.risk = risk_stats(f);
    try {
      e.turnover = turnover(view, weights);
    } catch (const NumericalError&) {
    }
    if (l1_normalize && e.turnover) {
      Vector fn(f.size());
      for (std::size_t t = 0; t < view.num_months(); ++t) {
        const auto lo = static_cast<Eigen::Index>(view.obs_begin(t) - base);
        const auto len = static_cast<Eigen::Index>(view.assets_in_month(t));
        fn[static_cast<Eigen::Index>(t)] = f[static_cast<Eigen::Index>(t)] / weights.segment(lo, len).lpNorm<1>();
      }
      e.sr_normalized = sharpe(fn);
    }
  }
  return e;
}

inline nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json j;
  j["model"] = r.model;
  j["degenerate_factor"] = r.degenerate();
  for (const auto& s : r.splits) {
    nlohmann::json x;
    x["sr"] = s.metrics.sr;
    x["sr_annualized"] = annualize_sharpe(s.metrics.sr);
    x["ev"] = s.metrics.ev;
    x["xs_r2"] = s.metrics.xs_r2;
    x["degenerate_factor"] = s.metrics.degenerate;
    if (s.risk) {
      x["max_loss"] = s.risk->max_loss;
      x["max_drawdown"] = s.risk->max_drawdown;
    }
    if (s.turnover) {
      x["turnover_long"] = s.turnover->long_side;
      x["turnover_short"] = s.turnover->short_side;
    }
    if (s.sr_normalized) x["sr_l1_normalized"] = *s.sr_normalized;
    j["splits"][s.split] = x;
  }
  return j;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

inline std::string opt_fmt(const std::optional<double>& v) { return v ? data::fmt(*v) : ""; }

/// Long format: one row per (model, split).
inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<EvaluationReport>& reports) {
  auto out = open_out(path);
  out << "model,split,sr,ev,xs_r2,max_loss,max_drawdown,turnover_long,turnover_short,sr_l1_normalized,degenerate_factor\n";
  for (const auto& r : reports) {
    for (const auto& s : r.splits) {
      out << r.model << ',' << s.split << ',' << data::fmt(s.metrics.sr) << ',' << data::fmt(s.metrics.ev) << ','
          << data::fmt(s.metrics.xs_r2) << ',' << (s.risk ? data::fmt(s.risk->max_loss) : "") << ','
          << (s.risk ? std::to_string(s.risk->max_drawdown) : "") << ','
          << (s.turnover ? data::fmt(s.turnover->long_side) : "") << ','
          << (s.turnover ? data::fmt(s.turnover->short_side) : "") << ',' << opt_fmt(s.sr_normalized) << ','
          << (s.metrics.degenerate ? 1 : 0) << '\n';
    }
  }
}

inline const std::vector<std::string>& comparison_columns() {
  static const std::vector<std::string> cols = {"sr_train", "sr_valid", "sr_test", "ev_train", "ev_valid",
                                                "ev_test",  "xs_r2_train", "xs_r2_valid", "xs_r2_test"};
  return cols;
}

/// Wide comparison table: one row per model, SR / EV / XS-R^2 for train, valid and test.
/// Degenerate-factor flags stay in the long-format metrics file.
inline void write_comparison_csv(const std::filesystem::path& path, const std::vector<EvaluationReport>& reports) {
  auto out = open_out(path);
  out << "model";
  for (const auto& c : comparison_columns()) out << ',' << c;
  out << '\n';
  const char* splits[] = {"train", "valid", "test"};
  for (const auto& r : reports) {
    out << r.model;
    for (const char* s : splits) out << ',' << data::fmt(r.at(s).metrics.sr);
    for (const char* s : splits) out << ',' << data::fmt(r.at(s).metrics.ev);
    for (const char* s : splits) out << ',' << data::fmt(r.at(s).metrics.xs_r2);
    out << '\n';
  }
}

inline void write_portfolio_csv(const std::filesystem::path& path, const PortfolioReport& r) {
  auto out = open_out(path);
  out << "portfolio,mean_return,ev,alpha\n";
  for (std::size_t k = 0; k < r.names.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    out << r.names[k] << ',' << data::fmt(r.mean_return[i]) << ',' << data::fmt(r.ev[i]) << ',' << data::fmt(r.alpha[i]) << '\n';
  }
  out << "all,," << data::fmt(r.total_ev) << ",\n";
  out << "xs_r2,,," << data::fmt(r.xs_r2) << '\n';
}

inline void write_alpha_csv(const std::filesystem::path& path, const std::vector<std::string>& names, const AlphaResult& a,
                            const GrsResult& grs) {
  auto out = open_out(path);
  out << "portfolio,alpha,t_stat\n";
  for (std::size_t k = 0; k < names.size(); ++k) {
    out << names[k] << ',' << data::fmt(a.alpha[static_cast<Eigen::Index>(k)]) << ','
        << data::fmt(a.t_stat[static_cast<Eigen::Index>(k)]) << '\n';
  }
  out << "GRS," << data::fmt(grs.statistic) << ',' << data::fmt(grs.p_value) << '\n';
}

/// Month column followed by one column per series.
inline void write_series_csv(const std::filesystem::path& path, const std::vector<Month>& months,
                             const std::vector<std::string>& names, const Matrix& values) {
  if (static_cast<std::size_t>(values.rows()) != months.size() || static_cast<std::size_t>(values.cols()) != names.size()) {
    throw DimensionError("series table shape");
  }
  auto out = open_out(path);
  out << "month";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t t = 0; t < months.size(); ++t) {
    out << months[t].str();
    for (Eigen::Index j = 0; j < values.cols(); ++j) out << ',' << data::fmt(values(static_cast<Eigen::Index>(t), j));
    out << '\n';
  }
}

inline void write_correlation_csv(const std::filesystem::path& path, const CorrelationMatrix& c) {
  auto out = open_out(path);
  out << "factor";
  for (const auto& n : c.names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    out << c.names[i];
    for (std::size_t j = 0; j < c.names.size(); ++j) out << ',' << data::fmt(c.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    out << '\n';
  }
}

inline void write_importance_csv(const std::filesystem::path& path, const std::vector<std::string>& names, const Vector& s) {
  auto out = open_out(path);
  out << "input,sensitivity\n";
  for (std::size_t k = 0; k < names.size(); ++k) out << names[k] << ',' << data::fmt(s[static_cast<Eigen::Index>(k)]) << '\n';
}

}  // namespace deepsdf::eval
