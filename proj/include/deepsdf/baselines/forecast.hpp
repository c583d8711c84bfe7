#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "deepsdf/baselines/regression.hpp"
#include "deepsdf/core/error.hpp"
#include "deepsdf/core/seed.hpp"
#include "deepsdf/data/panel.hpp"
#include "deepsdf/gan/checkpoint.hpp"
#include "deepsdf/gan/model.hpp"
#include "deepsdf/gan/search.hpp"

namespace deepsdf::baselines {

struct ForecastConfig {
  std::vector<std::size_t> hidden = {32, 16, 8};
  double keep_prob = 0.95;
  RegressionSchedule schedule{1e-3, 256, 16};
  std::size_t ensemble_size = 9;
  std::uint64_t seed = 1;
  bool use_macro = false;
  std::size_t states = 4;  // LSTM states when use_macro is set

  gan::PanelNetworkSpec spec(const data::PanelDataset& panel) const {
    return {panel.num_chars(), use_macro ? panel.num_macro() : 0, hidden, states, 1, keep_prob};
  }
};

/// Return forecaster mu(I_t, I_{t,i}); the member average is used as weights and loadings.
class ForecastNet {
 public:
  ForecastNet() = default;
  explicit ForecastNet(std::vector<gan::PanelNetwork> members) : members_(std::move(members)) {
    if (members_.empty()) throw UsageError("forecast ensemble needs at least one member");
    for (const auto& m : members_) {
      if (!(m.spec() == members_.front().spec())) throw UsageError("forecast ensemble members differ in architecture");
    }
  }

  const std::vector<gan::PanelNetwork>& members() const { return members_; }

  Vector predict(const data::PanelDataset& view) const {
    Vector sum = members_.front().forward(view).col(0);
    for (std::size_t k = 1; k < members_.size(); ++k) sum += members_[k].forward(view).col(0);
    return sum / static_cast<double>(members_.size());
  }
  /// omega_FFN = mu / N_t.
  Vector weights(const data::PanelDataset& view) const { return gan::scale_by_breadth(view, predict(view)); }
  gan::SdfSeries factor(const data::PanelDataset& view, bool normalize = false) const {
    return gan::factor_from_weights(view, weights(view), normalize);
  }

 private:
  std::vector<gan::PanelNetwork> members_;
};

/// Minimizes the panel MSE of excess returns; members differ only in seed.
inline ForecastNet fit_ffn_forecaster(const data::Splits& splits, const ForecastConfig& config, std::size_t workers = 1) {
  if (splits.train.empty()) throw UsageError("fit_ffn_forecaster: empty training split");
  if (config.ensemble_size < 1) throw UsageError("forecast ensemble size must be >= 1");
  const Vector y_train = splits.train.returns();
  const Vector y_valid = splits.valid.empty() ? Vector() : Vector(splits.valid.returns());
  std::vector<gan::PanelNetwork> members(config.ensemble_size);
  gan::parallel_for(config.ensemble_size, workers, [&](std::size_t k) {
    RegressionFit fit = fit_panel_regression(splits.train, y_train, splits.valid.empty() ? nullptr : &splits.valid,
                                             &y_valid, config.spec(splits.train), config.schedule,
                                             gan::member_seed(config.seed, k));
    members[k] = std::move(fit.net);
  });
  return ForecastNet(std::move(members));
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::ostringstream s;
  for (std::size_t k = 0; k < v.size(); ++k) s << (k ? "," : "") << v[k];
  return s.str();
}

inline std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& f : data::split_fields(text)) {
    if (f.empty()) continue;
    try {
      out.push_back(static_cast<std::size_t>(std::stoull(f)));
    } catch (const std::exception&) {
      throw DataError("expected a list of sizes, got '" + text + "'");
    }
  }
  return out;
}

/// Same directory layout as the GAN checkpoint, with the architecture in the manifest.
inline void save_forecaster(const std::filesystem::path& dir, const ForecastNet& model) {
  std::filesystem::create_directories(dir);
  const auto& spec = model.members().front().spec();
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw DataError("cannot write manifest in " + dir.string());
  out << "format=deepsdf-ffn-1\n"
      << "members=" << model.members().size() << '\n'
      << "num_chars=" << spec.num_chars << '\n'
      << "num_macro=" << spec.num_macro << '\n'
      << "hidden=\"" << join_sizes(spec.hidden) << "\"\n"
      << "states=" << spec.states << '\n'
      << "DR=" << data::fmt(spec.keep_prob) << '\n';
  for (std::size_t k = 0; k < model.members().size(); ++k) {
    const auto& net = model.members()[k];
    netcore::save_params(gan::detail::member_file(dir, k, "ffn").string(), net.ffn_params());
    if (spec.recurrent()) netcore::save_params(gan::detail::member_file(dir, k, "lstm").string(), net.lstm_params());
  }
}

inline ForecastNet load_forecaster(const std::filesystem::path& dir) {
  auto kv = gan::read_key_values(dir / "manifest.txt");
  if (gan::detail::require(kv, "format") != "deepsdf-ffn-1") throw DataError(dir.string() + ": not a forecaster checkpoint");
  std::string hidden = gan::detail::require(kv, "hidden");
  if (hidden.size() >= 2 && hidden.front() == '"' && hidden.back() == '"') hidden = hidden.substr(1, hidden.size() - 2);
  gan::PanelNetworkSpec spec{gan::detail::require_size(kv, "num_chars"), gan::detail::require_size(kv, "num_macro"),
                             parse_sizes(hidden), gan::detail::require_size(kv, "states"), 1,
                             netcore::parse_double(gan::detail::require(kv, "DR"))};
  const std::size_t members = gan::detail::require_size(kv, "members");
  if (members < 1) throw DataError(dir.string() + ": checkpoint has no members");
  std::vector<gan::PanelNetwork> nets;
  for (std::size_t k = 0; k < members; ++k) {
    gan::PanelNetwork net(spec, 0);
    auto ffn = netcore::load_params(gan::detail::member_file(dir, k, "ffn").string());
    net.ffn().check_layout(ffn);
    net.ffn_params() = std::move(ffn);
    if (spec.recurrent()) {
      auto lstm = netcore::load_params(gan::detail::member_file(dir, k, "lstm").string());
      net.lstm().check_layout(lstm);
      net.lstm_params() = std::move(lstm);
    }
    nets.push_back(std::move(net));
  }
  return ForecastNet(std::move(nets));
}

}  // namespace deepsdf::baselines
