#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/netcore/params.hpp"

namespace deepsdf::data {

/// Minimal comma-separated reader: no quoting, '#'-free, one record per line.
struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line;  // source line number of each row

  std::size_t column(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return j;
    }
    throw DataError(path + ": missing column '" + std::string(name) + "'");
  }
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  CsvTable t;
  t.path = path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                      " columns, got " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line.push_back(lineno);
  }
  if (t.header.empty()) throw DataError(path + ": empty file");
  return t;
}

inline bool is_missing(std::string_view s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "." || s == "null";
}

/// Parses a numeric field; missing markers yield NaN.
inline double parse_field(const CsvTable& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  if (is_missing(s)) return std::numeric_limits<double>::quiet_NaN();
  try {
    return netcore::parse_double(s);
  } catch (const DataError&) {
    throw DataError(t.path + ":" + std::to_string(t.line[row]) + ": column '" + t.header[col] + "': cannot parse '" + s + "'");
  }
}

inline std::string fmt(double x) { return netcore::format_double(x); }

}  // namespace deepsdf::data
