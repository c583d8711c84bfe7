#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "deepsdf/baselines/forecast.hpp"
#include "deepsdf/baselines/linear.hpp"
#include "deepsdf/core/error.hpp"
#include "deepsdf/data/csv.hpp"
#include "deepsdf/eval/portfolio.hpp"
#include "deepsdf/gan/model.hpp"
#include "deepsdf/gan/search.hpp"
#include "deepsdf/netcore/params.hpp"
#include "deepsdf/sim/simulate.hpp"

namespace deepsdf::cli {

/**
 * Flat key = value text grouped by [section] headers; '#' starts a comment.
 * Keys are addressed as "section.key". Every lookup marks the key as used so
 * unknown keys can be reported.
 */
class ConfigFile {
 public:
  ConfigFile() = default;

  static ConfigFile parse(std::istream& in, const std::string& origin) {
    ConfigFile c;
    std::string section;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::string_view s = data::trim(line);
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']' || s.size() < 3) throw UsageError(origin + ":" + std::to_string(lineno) + ": malformed section header");
        section = std::string(data::trim(s.substr(1, s.size() - 2)));
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string_view::npos) {
        throw UsageError(origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + std::string(s) + "'");
      }
      std::string key(data::trim(s.substr(0, eq)));
      if (key.empty()) throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
      if (!section.empty()) key = section + "." + key;
      if (c.values_.count(key)) throw UsageError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      c.values_[key] = {std::string(data::trim(s.substr(eq + 1))), lineno};
    }
    c.origin_ = origin;
    return c;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path);
    return parse(in, path);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = {value, 0}; }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    used_.insert(key);
    return it->second.text;
  }
  std::string get_or(const std::string& key, const std::string& fallback) const { return get(key).value_or(fallback); }

  double get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    try {
      return netcore::parse_double(*v);
    } catch (const std::exception&) {
      throw UsageError(where(key) + ": '" + key + "' expects a number, got '" + *v + "'");
    }
  }
  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::size_t pos = 0;
    try {
      const auto x = std::stoull(*v, &pos);
      if (pos == v->size() && v->front() != '-') return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
    }
    throw UsageError(where(key) + ": '" + key + "' expects a non-negative integer, got '" + *v + "'");
  }
  bool get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw UsageError(where(key) + ": '" + key + "' expects true or false, got '" + *v + "'");
  }
  template <class T>
  std::vector<T> get_list(const std::string& key, const std::vector<T>& fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::vector<T> out;
    for (const auto& f : data::split_fields(*v)) {
      if (f.empty()) continue;
      try {
        if constexpr (std::is_same_v<T, std::string>) {
          out.push_back(f);
        } else if constexpr (std::is_floating_point_v<T>) {
          out.push_back(netcore::parse_double(f));
        } else {
          std::size_t pos = 0;
          const auto x = std::stoull(f, &pos);
          if (pos != f.size()) throw std::invalid_argument(f);
          out.push_back(static_cast<T>(x));
        }
      } catch (const std::invalid_argument&) {
        throw UsageError(where(key) + ": bad list element '" + f + "' in '" + key + "'");
      } catch (const std::out_of_range&) {
        throw UsageError(where(key) + ": list element out of range in '" + key + "'");
      }
    }
    if (out.empty()) throw UsageError(where(key) + ": '" + key + "' is an empty list");
    return out;
  }

  /// Keys present in the file but never read.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) if (!used_.count(k)) out.push_back(k);
    return out;
  }

  std::string where(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.line == 0) return origin_.empty() ? std::string("config") : origin_;
    return origin_ + ":" + std::to_string(it->second.line);
  }

 private:
  struct Entry {
    std::string text;
    int line = 0;
  };
  std::map<std::string, Entry> values_;
  mutable std::set<std::string> used_;
  std::string origin_;
};

enum class ModelKind { gan, unc, ls, en, ffn };

inline const char* model_name(ModelKind k) {
  switch (k) {
    case ModelKind::gan: return "gan";
    case ModelKind::unc: return "unc";
    case ModelKind::ls: return "ls";
    case ModelKind::en: return "en";
    case ModelKind::ffn: return "ffn";
  }
  return "?";
}

inline std::vector<ModelKind> parse_models(const std::vector<std::string>& names) {
  std::vector<ModelKind> out;
  auto add = [&](ModelKind k) {
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  };
  for (const auto& n : names) {
    if (n == "all") {
      for (auto k : {ModelKind::gan, ModelKind::unc, ModelKind::ls, ModelKind::en, ModelKind::ffn}) add(k);
    } else if (n == "gan") add(ModelKind::gan);
    else if (n == "unc") add(ModelKind::unc);
    else if (n == "ls") add(ModelKind::ls);
    else if (n == "en") add(ModelKind::en);
    else if (n == "ffn") add(ModelKind::ffn);
    else throw UsageError("unknown model '" + n + "' (want gan, unc, ls, en, ffn or all)");
  }
  return out;
}

/// Either explicit month ranges or lengths; empty means the default 5/12, 1/6, 5/12 split.
struct SplitConfig {
  std::optional<data::SplitSpec> ranges;
  std::size_t train = 0, valid = 0, test = 0;

  data::SplitSpec resolve(const data::PanelDataset& panel) const {
    if (ranges) return *ranges;
    if (train && valid && test) return data::SplitSpec::by_length(panel, train, valid, test);
    const std::size_t T = panel.num_months();
    const std::size_t a = T * 5 / 12, b = T / 6;
    if (a == 0 || b == 0 || T - a - b == 0) throw UsageError("panel too short for the default split");
    return data::SplitSpec::by_length(panel, a, b, T - a - b);
  }
};

struct RunConfig {
  std::string data_dir;               // data-module files; empty with [sim] means simulate in memory
  bool quantile_transform = true;
  std::optional<sim::SimConfig> sim;
  SplitConfig split;
  std::vector<ModelKind> models = {ModelKind::gan, ModelKind::ffn, ModelKind::ls};
  gan::GanHyperParams gan;
  bool gan_search = false;
  gan::GanGrid grid;
  std::size_t top_k = 4;
  std::size_t max_trainings = std::numeric_limits<std::size_t>::max();
  double max_seconds = std::numeric_limits<double>::infinity();
  baselines::ForecastConfig ffn;
  baselines::ElasticNetConfig en;
  bool split_legs = false;
  baselines::RegressionSchedule beta_schedule{1e-3, 256, 16};
  eval::Weighting weighting = eval::Weighting::equal;
  double size_filter = 0.0;  // fraction of the month's total market cap; 0 disables
  bool l1_normalize = false;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

inline data::MonthRange parse_range(const ConfigFile& c, const std::string& key) {
  const std::string v = *c.get(key);
  const auto colon = v.find(':');
  if (colon == std::string::npos) throw UsageError(c.where(key) + ": '" + key + "' expects FIRST:LAST months, got '" + v + "'");
  try {
    return {Month::parse(data::trim(v.substr(0, colon))), Month::parse(data::trim(v.substr(colon + 1)))};
  } catch (const DataError& e) {
    throw UsageError(c.where(key) + ": " + e.what());
  }
}

inline RunConfig make_run_config(const ConfigFile& c) {
  RunConfig r;
  r.data_dir = c.get_or("data.dir", "");
  r.quantile_transform = c.get_bool("data.quantile_transform", true);
  if (c.has("sim.setup") || c.has("sim.seed") || c.has("sim.assets") || r.data_dir.empty()) {
    sim::SimConfig s;
    s.setup = static_cast<int>(c.get_size("sim.setup", 1));
    s.num_assets = c.get_size("sim.assets", s.num_assets);
    s.n_train = c.get_size("sim.train_months", s.n_train);
    s.n_valid = c.get_size("sim.valid_months", s.n_valid);
    s.n_test = c.get_size("sim.test_months", s.n_test);
    s.sigma_f2 = c.get_double("sim.sigma_f2", s.sigma_f2);
    s.sharpe_f = c.get_double("sim.sharpe_f", s.sharpe_f);
    s.sigma_e2 = c.get_double("sim.sigma_e2", s.sigma_e2);
    s.seed = c.get_size("sim.seed", s.seed);
    r.sim = s;
  }
  if (c.has("split.train_range")) {
    r.split.ranges = data::SplitSpec{parse_range(c, "split.train_range"), parse_range(c, "split.valid_range"),
                                     parse_range(c, "split.test_range")};
  } else {
    r.split.train = c.get_size("split.train", 0);
    r.split.valid = c.get_size("split.valid", 0);
    r.split.test = c.get_size("split.test", 0);
  }
  r.models = parse_models(c.get_list<std::string>("model.models", {"gan", "ffn", "ls"}));

  auto& g = r.gan;
  g.hidden_layers = c.get_size("gan.HL", g.hidden_layers);
  g.hidden_units = c.get_size("gan.HU", g.hidden_units);
  g.sdf_states = c.get_size("gan.SMV", g.sdf_states);
  g.cond_states = c.get_size("gan.CSMV", g.cond_states);
  g.cond_layers = c.get_size("gan.CHL", g.cond_layers);
  g.cond_moments = c.get_size("gan.CHU", g.cond_moments);
  g.lr = c.get_double("gan.LR", g.lr);
  g.keep_prob = c.get_double("gan.DR", g.keep_prob);
  const std::size_t epochs = c.get_size("gan.epochs", 256);
  g.epochs_unconditional = c.get_size("gan.epochs_unconditional", epochs);
  g.epochs_moment = c.get_size("gan.epochs_moment", epochs);
  g.epochs_conditional = c.get_size("gan.epochs_conditional", epochs);
  g.ensemble_size = c.get_size("gan.ensemble", g.ensemble_size);
  g.use_macro = c.get_bool("gan.use_macro", g.use_macro);
  r.gan_search = c.get_bool("gan.search", false);
  r.grid.hidden_layers = c.get_list<std::size_t>("grid.HL", r.grid.hidden_layers);
  r.grid.hidden_units = c.get_list<std::size_t>("grid.HU", r.grid.hidden_units);
  r.grid.sdf_states = c.get_list<std::size_t>("grid.SMV", r.grid.sdf_states);
  r.grid.cond_states = c.get_list<std::size_t>("grid.CSMV", r.grid.cond_states);
  r.grid.cond_layers = c.get_list<std::size_t>("grid.CHL", r.grid.cond_layers);
  r.grid.cond_moments = c.get_list<std::size_t>("grid.CHU", r.grid.cond_moments);
  r.grid.lr = c.get_list<double>("grid.LR", r.grid.lr);
  r.grid.keep_prob = c.get_list<double>("grid.DR", r.grid.keep_prob);
  r.top_k = c.get_size("grid.top_k", r.top_k);
  r.max_trainings = c.get_size("grid.max_trainings", r.max_trainings);
  r.max_seconds = c.get_double("grid.max_seconds", r.max_seconds);

  r.ffn.hidden = c.get_list<std::size_t>("ffn.hidden", r.ffn.hidden);
  r.ffn.keep_prob = c.get_double("ffn.DR", r.ffn.keep_prob);
  r.ffn.schedule.lr = c.get_double("ffn.LR", r.ffn.schedule.lr);
  r.ffn.schedule.max_epochs = c.get_size("ffn.epochs", r.ffn.schedule.max_epochs);
  r.ffn.schedule.patience = c.get_size("ffn.patience", r.ffn.schedule.patience);
  r.ffn.ensemble_size = c.get_size("ffn.ensemble", r.ffn.ensemble_size);
  r.ffn.use_macro = c.get_bool("ffn.use_macro", r.ffn.use_macro);

  r.en.lambda1 = c.get_list<double>("en.lambda1", r.en.lambda1);
  r.en.lambda2 = c.get_list<double>("en.lambda2", r.en.lambda2);
  r.en.tolerance = c.get_double("en.tolerance", r.en.tolerance);
  r.en.max_iterations = c.get_size("en.max_iterations", r.en.max_iterations);
  r.en.standardize = c.get_bool("en.standardize", r.en.standardize);
  r.split_legs = c.get_bool("linear.split_legs", r.split_legs);

  r.beta_schedule.lr = c.get_double("beta.LR", r.beta_schedule.lr);
  r.beta_schedule.max_epochs = c.get_size("beta.epochs", r.beta_schedule.max_epochs);
  r.beta_schedule.patience = c.get_size("beta.patience", r.beta_schedule.patience);

  r.weighting = eval::parse_weighting(c.get_or("eval.weighting", "equal"));
  r.size_filter = c.get_double("eval.size_filter", 0.0);
  r.l1_normalize = c.get_bool("eval.l1_normalize", false);
  r.out_dir = c.get_or("output.dir", r.out_dir);
  r.seed = c.get_size("run.seed", r.seed);
  r.workers = c.get_size("run.workers", r.workers);

  if (!(r.size_filter >= 0.0 && r.size_filter < 1.0)) throw UsageError("size filter must lie in [0, 1)");
  if (r.workers < 1) throw UsageError("workers must be >= 1");
  auto unknown = c.unused();
  if (!unknown.empty()) throw UsageError(c.where(unknown.front()) + ": unknown config key '" + unknown.front() + "'");
  return r;
}

}  // namespace deepsdf::cli
