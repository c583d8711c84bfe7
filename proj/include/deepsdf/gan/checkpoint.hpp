#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/data/csv.hpp"
#include "deepsdf/gan/model.hpp"
#include "deepsdf/netcore/params.hpp"

namespace deepsdf::gan {

// A checkpoint directory holds manifest.txt (key=value lines) and, per member k,
// member<k>.ffn.params and, with macro states, member<k>.lstm.params.

inline std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view s = data::trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw DataError(path.string() + ": expected key=value, got '" + std::string(s) + "'");
    kv[std::string(data::trim(s.substr(0, eq)))] = std::string(data::trim(s.substr(eq + 1)));
  }
  return kv;
}

namespace detail {

inline const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("checkpoint manifest is missing '" + key + "'");
  return it->second;
}

inline std::size_t require_size(const std::map<std::string, std::string>& kv, const std::string& key) {
  const std::string& v = require(kv, key);
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw DataError("checkpoint manifest: '" + key + "' is not a non-negative integer: " + v);
  }
}

inline std::filesystem::path member_file(const std::filesystem::path& dir, std::size_t k, const char* part) {
  return dir / ("member" + std::to_string(k) + "." + part + ".params");
}

}  // namespace detail

inline void save_ensemble(const std::filesystem::path& dir, const EnsembleModel& model) {
  std::filesystem::create_directories(dir);
  const GanHyperParams& hp = model.hyper();
  const PanelNetworkSpec& spec = model.members().front().network().spec();
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw DataError("cannot write manifest in " + dir.string());
  out << "format=deepsdf-gan-1\n"
      << "members=" << model.members().size() << '\n'
      << "num_chars=" << spec.num_chars << '\n'
      << "num_macro=" << spec.num_macro << '\n'
      << "HL=" << hp.hidden_layers << '\n'
      << "HU=" << hp.hidden_units << '\n'
      << "SMV=" << hp.sdf_states << '\n'
      << "CSMV=" << hp.cond_states << '\n'
      << "CHL=" << hp.cond_layers << '\n'
      << "CHU=" << hp.cond_moments << '\n'
      << "LR=" << data::fmt(hp.lr) << '\n'
      << "DR=" << data::fmt(hp.keep_prob) << '\n'
      << "epochs_unconditional=" << hp.epochs_unconditional << '\n'
      << "epochs_moment=" << hp.epochs_moment << '\n'
      << "epochs_conditional=" << hp.epochs_conditional << '\n'
      << "use_macro=" << (hp.use_macro ? 1 : 0) << '\n'
      << "seed=" << hp.seed << '\n';
  for (std::size_t k = 0; k < model.members().size(); ++k) {
    const PanelNetwork& net = model.members()[k].network();
    netcore::save_params(detail::member_file(dir, k, "ffn").string(), net.ffn_params());
    if (net.spec().recurrent()) netcore::save_params(detail::member_file(dir, k, "lstm").string(), net.lstm_params());
  }
}

inline void save_model(const std::filesystem::path& dir, const SdfModel& model) { save_ensemble(dir, EnsembleModel({model})); }

inline EnsembleModel load_ensemble(const std::filesystem::path& dir) {
  auto kv = read_key_values(dir / "manifest.txt");
  if (detail::require(kv, "format") != "deepsdf-gan-1") throw DataError(dir.string() + ": unsupported checkpoint format");
  GanHyperParams hp;
  hp.hidden_layers = detail::require_size(kv, "HL");
  hp.hidden_units = detail::require_size(kv, "HU");
  hp.sdf_states = detail::require_size(kv, "SMV");
  hp.cond_states = detail::require_size(kv, "CSMV");
  hp.cond_layers = detail::require_size(kv, "CHL");
  hp.cond_moments = detail::require_size(kv, "CHU");
  hp.lr = netcore::parse_double(detail::require(kv, "LR"));
  hp.keep_prob = netcore::parse_double(detail::require(kv, "DR"));
  hp.epochs_unconditional = detail::require_size(kv, "epochs_unconditional");
  hp.epochs_moment = detail::require_size(kv, "epochs_moment");
  hp.epochs_conditional = detail::require_size(kv, "epochs_conditional");
  hp.use_macro = detail::require_size(kv, "use_macro") != 0;
  hp.seed = detail::require_size(kv, "seed");
  const std::size_t members = detail::require_size(kv, "members");
  if (members < 1) throw DataError(dir.string() + ": checkpoint has no members");
  hp.ensemble_size = members;

  PanelNetworkSpec spec{detail::require_size(kv, "num_chars"), detail::require_size(kv, "num_macro"),
                        std::vector<std::size_t>(hp.hidden_layers, hp.hidden_units), hp.sdf_states, 1, hp.keep_prob};
  std::vector<SdfModel> out;
  for (std::size_t k = 0; k < members; ++k) {
    PanelNetwork net(spec, 0);
    netcore::NetworkParams ffn = netcore::load_params(detail::member_file(dir, k, "ffn").string());
    net.ffn().check_layout(ffn);
    net.ffn_params() = std::move(ffn);
    if (spec.recurrent()) {
      netcore::NetworkParams lstm = netcore::load_params(detail::member_file(dir, k, "lstm").string());
      net.lstm().check_layout(lstm);
      net.lstm_params() = std::move(lstm);
    }
    out.emplace_back(hp, std::move(net));
  }
  return EnsembleModel(std::move(out));
}

}  // namespace deepsdf::gan
