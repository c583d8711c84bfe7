#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "deepsdf/core/error.hpp"
#include "deepsdf/core/types.hpp"

namespace deepsdf::netcore {

/// Location of one named tensor inside the flat parameter vector.
struct Block {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

/**
 * Flat parameter vector plus a name -> (offset, shape) layout.
 *
 * Matrices are stored row-major, so a weight of shape (out x in) maps to
 * W(o, i) at offset + o * in + i. Gradient buffers use the same layout and
 * are plain Vectors of size().
 */
class NetworkParams {
 public:
  NetworkParams() = default;

  std::size_t add(std::string name, std::size_t rows, std::size_t cols) {
    if (index_.count(name)) throw DataError("duplicate parameter block '" + name + "'");
    Block b{std::move(name), static_cast<std::size_t>(values_.size()), rows, cols};
    values_.conservativeResize(static_cast<Eigen::Index>(b.offset + b.size()));
    values_.segment(static_cast<Eigen::Index>(b.offset), static_cast<Eigen::Index>(b.size())).setZero();
    index_[b.name] = blocks_.size();
    blocks_.push_back(b);
    return b.offset;
  }

  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  const std::vector<Block>& layout() const { return blocks_; }
  const Vector& values() const { return values_; }
  Vector& values() { return values_; }

  const Block& block(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw DataError("unknown parameter block '" + std::string(name) + "'");
    return blocks_[it->second];
  }
  bool has(std::string_view name) const { return index_.count(std::string(name)) > 0; }

  Eigen::Map<const RowMatrix> matrix(std::string_view name) const { return view(values_, block(name)); }
  Eigen::Map<RowMatrix> matrix(std::string_view name) { return view(values_, block(name)); }

  static Eigen::Map<const RowMatrix> view(const Vector& flat, const Block& b) {
    return {flat.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
  }
  static Eigen::Map<RowMatrix> view(Vector& flat, const Block& b) {
    return {flat.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
  }

  /// Name of the block containing flat coordinate `k`, for diagnostics.
  std::string locate(std::size_t k) const {
    for (const auto& b : blocks_) {
      if (k >= b.offset && k < b.offset + b.size()) {
        std::size_t local = k - b.offset;
        return b.name + "[" + std::to_string(local / b.cols) + "," + std::to_string(local % b.cols) + "]";
      }
    }
    return "#" + std::to_string(k);
  }

  bool same_layout(const NetworkParams& other) const {
    if (blocks_.size() != other.blocks_.size()) return false;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const auto& a = blocks_[i];
      const auto& b = other.blocks_[i];
      if (a.name != b.name || a.offset != b.offset || a.rows != b.rows || a.cols != b.cols) return false;
    }
    return true;
  }

  bool all_finite() const { return values_.allFinite(); }

 private:
  Vector values_;
  std::vector<Block> blocks_;
  std::map<std::string, std::size_t> index_;
};

// Checkpoint text format, version 1:
//
//   deepsdf-params 1
//   blocks <count>
//   <name> <rows> <cols>
//   <rows*cols values, row-major, shortest round-trip decimal>
//   ... one header line and one value line per block
//
// Values use std::to_chars shortest representation, so save/load is exact.
inline constexpr std::string_view kCheckpointMagic = "deepsdf-params";
inline constexpr int kCheckpointVersion = 1;

inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("cannot parse number '" + std::string(s) + "'");
  }
  return x;
}

inline void write_params(std::ostream& out, const NetworkParams& params) {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "blocks " << params.layout().size() << '\n';
  for (const auto& b : params.layout()) {
    out << b.name << ' ' << b.rows << ' ' << b.cols << '\n';
    for (std::size_t k = 0; k < b.size(); ++k) {
      if (k) out << ' ';
      out << format_double(params.values()[static_cast<Eigen::Index>(b.offset + k)]);
    }
    out << '\n';
  }
}

inline NetworkParams read_params(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kCheckpointMagic) throw DataError("not a parameter checkpoint (bad magic)");
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  std::string tag;
  std::size_t count = 0;
  in >> tag >> count;
  if (tag != "blocks") throw DataError("malformed checkpoint header");
  NetworkParams params;
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols)) throw DataError("truncated checkpoint at block " + std::to_string(i));
    std::size_t off = params.add(name, rows, cols);
    for (std::size_t k = 0; k < rows * cols; ++k) {
      std::string tok;
      if (!(in >> tok)) throw DataError("truncated values in block '" + name + "'");
      params.values()[static_cast<Eigen::Index>(off + k)] = parse_double(tok);
    }
  }
  return params;
}

inline void save_params(const std::string& path, const NetworkParams& params) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_params(out, params);
}

inline NetworkParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path);
  return read_params(in);
}

}  // namespace deepsdf::netcore
