#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/month.hpp"
#include "deepsdf/data/csv.hpp"
#include "deepsdf/data/panel.hpp"
#include "deepsdf/data/transforms.hpp"

namespace deepsdf::data {

/*
 * File schemas (UTF-8, comma separated, header row first):
 *
 *   returns.csv          month,asset_id,excess_return
 *   characteristics.csv  month,asset_id,<char_1>,...,<char_p>     raw values
 *   macro.csv            month,<macro_1>,...,<macro_q>
 *                        tcode,<code_1>,...,<code_q>              second row
 *                        then one row per month (raw levels)
 *   weights.csv          month,asset_id,market_cap                optional
 *   factors.csv          month,<factor_1>,...                     optional
 *
 * `month` is YYYY-MM and names the information date t: characteristics and
 * macro values are known at t, excess_return is the decimal return over the
 * month following t. Missing values are empty fields or NA.
 */
struct PanelPaths {
  std::string returns;
  std::string characteristics;
  std::string macro;    // optional
  std::string weights;  // optional
};

struct LoadOptions {
  bool quantile_transform = true;  // rank-transform characteristics per month
};

struct ExclusionReport {
  std::size_t missing_characteristic = 0;
  std::size_t missing_return = 0;
  std::size_t missing_macro_month = 0;
  std::size_t kept = 0;
};

struct FactorSeries {
  std::vector<Month> months;
  std::vector<std::string> names;
  Matrix values;  // months x K
};

namespace detail {

struct RawMacro {
  std::vector<Month> months;
  std::vector<std::string> names;
  Matrix values;  // transformed and aligned
};

inline RawMacro read_macro(const std::string& path) {
  CsvTable t = read_csv(path);
  if (t.header.empty() || t.header[0] != "month") throw DataError(path + ": first column must be 'month'");
  if (t.rows.empty() || t.rows[0][0] != "tcode") throw DataError(path + ": second row must be 'tcode,<codes...>'");
  const std::size_t q = t.header.size() - 1;
  std::vector<int> codes(q);
  for (std::size_t j = 0; j < q; ++j) {
    double c = parse_field(t, 0, j + 1);
    if (!(c >= 1 && c <= 7) || c != std::floor(c)) throw DataError(path + ": tcode for '" + t.header[j + 1] + "' must be 1..7");
    codes[j] = static_cast<int>(c);
  }
  RawMacro m;
  Matrix raw(static_cast<Eigen::Index>(t.rows.size() - 1), static_cast<Eigen::Index>(q));
  std::vector<Month> months;
  for (std::size_t r = 1; r < t.rows.size(); ++r) {
    months.push_back(Month::parse(t.rows[r][0]));
    if (r > 1 && !(months[r - 2] < months[r - 1])) throw DataError(path + ":" + std::to_string(t.line[r]) + ": months must increase");
    for (std::size_t j = 0; j < q; ++j) {
      double v = parse_field(t, r, j + 1);
      if (!std::isfinite(v)) throw DataError(path + ":" + std::to_string(t.line[r]) + ": missing macro value for '" + t.header[j + 1] + "'");
      raw(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(j)) = v;
    }
  }
  auto [values, lag] = macro_transform_aligned(raw, codes);
  m.months.assign(months.begin() + static_cast<std::ptrdiff_t>(lag), months.end());
  m.names.assign(t.header.begin() + 1, t.header.end());
  m.values = std::move(values);
  return m;
}

}  // namespace detail

/**
 * Loads and joins the panel files. Complete-case rule: an (month, asset)
 * enters only if the return and every characteristic are present, and (when
 * macro data is given) the month has a transformed macro row. Observations
 * are ordered by (month, asset id).
 */
inline PanelDataset load_panel(const PanelPaths& paths, const LoadOptions& options = {},
                               ExclusionReport* report = nullptr) {
  ExclusionReport rep;
  using Key = std::pair<int, std::string>;

  CsvTable ret = read_csv(paths.returns);
  const std::size_t rm = ret.column("month"), ra = ret.column("asset_id"), rr = ret.column("excess_return");
  std::map<Key, double> returns;
  for (std::size_t r = 0; r < ret.rows.size(); ++r) {
    Key k{Month::parse(ret.rows[r][rm]).index, ret.rows[r][ra]};
    double v = parse_field(ret, r, rr);
    if (!returns.emplace(k, v).second) {
      throw DataError(paths.returns + ":" + std::to_string(ret.line[r]) + ": duplicate (month, asset_id)");
    }
  }

  CsvTable ch = read_csv(paths.characteristics);
  const std::size_t cm = ch.column("month"), ca = ch.column("asset_id");
  std::vector<std::size_t> char_cols;
  std::vector<std::string> char_names;
  for (std::size_t j = 0; j < ch.header.size(); ++j) {
    if (j != cm && j != ca) {
      char_cols.push_back(j);
      char_names.push_back(ch.header[j]);
    }
  }
  if (char_names.empty()) throw DataError(paths.characteristics + ": no characteristic columns");

  std::optional<detail::RawMacro> macro;
  std::map<int, std::size_t> macro_row;
  if (!paths.macro.empty()) {
    macro = detail::read_macro(paths.macro);
    for (std::size_t t = 0; t < macro->months.size(); ++t) macro_row[macro->months[t].index] = t;
  }

  std::map<Key, double> caps;
  if (!paths.weights.empty()) {
    CsvTable w = read_csv(paths.weights);
    const std::size_t wm = w.column("month"), wa = w.column("asset_id"), wc = w.column("market_cap");
    for (std::size_t r = 0; r < w.rows.size(); ++r) {
      caps[{Month::parse(w.rows[r][wm]).index, w.rows[r][wa]}] = parse_field(w, r, wc);
    }
  }

  struct Row {
    Key key;
    double ret;
    std::vector<double> chars;
    double cap;
  };
  std::vector<Row> rows;
  for (std::size_t r = 0; r < ch.rows.size(); ++r) {
    Key k{Month::parse(ch.rows[r][cm]).index, ch.rows[r][ca]};
    auto it = returns.find(k);
    if (it == returns.end() || !std::isfinite(it->second)) {
      ++rep.missing_return;
      continue;
    }
    std::vector<double> x(char_cols.size());
    bool complete = true;
    for (std::size_t j = 0; j < char_cols.size(); ++j) {
      x[j] = parse_field(ch, r, char_cols[j]);
      complete = complete && std::isfinite(x[j]);
    }
    if (!complete) {
      ++rep.missing_characteristic;
      continue;
    }
    if (macro && !macro_row.count(k.first)) {
      ++rep.missing_macro_month;
      continue;
    }
    double cap = std::numeric_limits<double>::quiet_NaN();
    if (!caps.empty()) {
      auto c = caps.find(k);
      if (c == caps.end() || !std::isfinite(c->second)) {
        ++rep.missing_characteristic;
        continue;
      }
      cap = c->second;
    }
    rows.push_back({k, it->second, std::move(x), cap});
  }
  if (rows.empty()) throw DataError("load_panel: no complete observations");
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.key < b.key; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].key == rows[i - 1].key) throw DataError(paths.characteristics + ": duplicate (month, asset_id) " + rows[i].key.second);
  }

  auto st = std::make_shared<PanelStorage>();
  st->char_names = char_names;
  const std::size_t n = rows.size();
  const std::size_t p = char_names.size();
  st->returns.resize(static_cast<Eigen::Index>(n));
  st->chars.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  st->asset.resize(n);
  if (!caps.empty()) st->market_cap = Vector(static_cast<Eigen::Index>(n));

  std::map<std::string, std::size_t> asset_index;
  for (const auto& r : rows) asset_index.emplace(r.key.second, 0);
  for (auto& [id, idx] : asset_index) {
    idx = st->asset_ids.size();
    st->asset_ids.push_back(id);
  }

  st->month_offset.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0 || rows[i].key.first != rows[i - 1].key.first) {
      if (i > 0) st->month_offset.push_back(i);
      st->months.push_back(Month{rows[i].key.first});
    }
    st->returns[static_cast<Eigen::Index>(i)] = rows[i].ret;
    st->asset[i] = asset_index[rows[i].key.second];
    for (std::size_t j = 0; j < p; ++j) st->chars(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i].chars[j];
    if (st->market_cap) (*st->market_cap)[static_cast<Eigen::Index>(i)] = rows[i].cap;
  }
  st->month_offset.push_back(n);

  if (options.quantile_transform) {
    for (std::size_t t = 0; t < st->months.size(); ++t) {
      const auto lo = static_cast<Eigen::Index>(st->month_offset[t]);
      const auto len = static_cast<Eigen::Index>(st->month_offset[t + 1] - st->month_offset[t]);
      for (std::size_t j = 0; j < p; ++j) {
        Vector col = st->chars.col(static_cast<Eigen::Index>(j)).segment(lo, len);
        auto q = rank_quantile_transform(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
        for (Eigen::Index k = 0; k < len; ++k) st->chars(lo + k, static_cast<Eigen::Index>(j)) = q[static_cast<std::size_t>(k)];
      }
    }
  }

  if (macro) {
    st->macro_names = macro->names;
    st->macro.resize(static_cast<Eigen::Index>(st->months.size()), static_cast<Eigen::Index>(macro->names.size()));
    for (std::size_t t = 0; t < st->months.size(); ++t) {
      st->macro.row(static_cast<Eigen::Index>(t)) = macro->values.row(static_cast<Eigen::Index>(macro_row.at(st->months[t].index)));
    }
  }
  st->validate();
  rep.kept = n;
  if (report) *report = rep;
  return PanelDataset(std::shared_ptr<const PanelStorage>(std::move(st)));
}

inline PanelPaths default_paths(const std::filesystem::path& dir) {
  PanelPaths p;
  p.returns = (dir / "returns.csv").string();
  p.characteristics = (dir / "characteristics.csv").string();
  if (std::filesystem::exists(dir / "macro.csv")) p.macro = (dir / "macro.csv").string();
  if (std::filesystem::exists(dir / "weights.csv")) p.weights = (dir / "weights.csv").string();
  return p;
}

/// Writes a panel in the load_panel schemas. Macro columns are written with tcode 1.
inline void write_panel(const std::filesystem::path& dir, const PanelDataset& panel) {
  std::filesystem::create_directories(dir);
  const auto& st = panel.storage();
  std::ofstream ret(dir / "returns.csv");
  std::ofstream chr(dir / "characteristics.csv");
  if (!ret || !chr) throw DataError("cannot write panel files in " + dir.string());
  ret << "month,asset_id,excess_return\n";
  chr << "month,asset_id";
  for (const auto& name : st.char_names) chr << ',' << name;
  chr << '\n';
  std::ofstream caps;
  if (st.market_cap) {
    caps.open(dir / "weights.csv");
    caps << "month,asset_id,market_cap\n";
  }
  for (std::size_t t = 0; t < panel.num_months(); ++t) {
    const std::string m = panel.month(t).str();
    for (std::size_t n = panel.obs_begin(t); n < panel.obs_end(t); ++n) {
      const std::string& id = st.asset_ids[st.asset[n]];
      ret << m << ',' << id << ',' << fmt(st.returns[static_cast<Eigen::Index>(n)]) << '\n';
      chr << m << ',' << id;
      for (Eigen::Index j = 0; j < st.chars.cols(); ++j) chr << ',' << fmt(st.chars(static_cast<Eigen::Index>(n), j));
      chr << '\n';
      if (st.market_cap) caps << m << ',' << id << ',' << fmt((*st.market_cap)[static_cast<Eigen::Index>(n)]) << '\n';
    }
  }
  if (st.macro.cols() > 0) {
    std::ofstream mac(dir / "macro.csv");
    mac << "month";
    for (const auto& name : st.macro_names) mac << ',' << name;
    mac << "\ntcode";
    for (std::size_t j = 0; j < st.macro_names.size(); ++j) mac << ",1";
    mac << '\n';
    for (std::size_t t = 0; t < panel.num_months(); ++t) {
      mac << panel.month(t).str();
      for (Eigen::Index j = 0; j < st.macro.cols(); ++j) {
        mac << ',' << fmt(st.macro(static_cast<Eigen::Index>(panel.first_month_index() + t), j));
      }
      mac << '\n';
    }
  }
}

inline FactorSeries load_factors(const std::string& path) {
  CsvTable t = read_csv(path);
  const std::size_t mc = t.column("month");
  FactorSeries f;
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (j != mc) {
      cols.push_back(j);
      f.names.push_back(t.header[j]);
    }
  }
  f.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    f.months.push_back(Month::parse(t.rows[r][mc]));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      f.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = parse_field(t, r, cols[j]);
    }
  }
  return f;
}

}  // namespace deepsdf::data
