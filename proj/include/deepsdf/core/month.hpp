#pragma once

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>

#include "deepsdf/core/error.hpp"

namespace deepsdf {

/// Calendar month stored as year * 12 + (month - 1); text form YYYY-MM.
struct Month {
  int index = 0;

  static Month from_ym(int year, int month) { return Month{year * 12 + (month - 1)}; }

  static Month parse(std::string_view s) {
    int y = 0;
    int m = 0;
    if (s.size() != 7 || s[4] != '-') throw DataError("bad month stamp '" + std::string(s) + "' (want YYYY-MM)");
    auto r1 = std::from_chars(s.data(), s.data() + 4, y);
    auto r2 = std::from_chars(s.data() + 5, s.data() + 7, m);
    if (r1.ec != std::errc() || r2.ec != std::errc() || m < 1 || m > 12) {
      throw DataError("bad month stamp '" + std::string(s) + "'");
    }
    return from_ym(y, m);
  }

  int year() const { return index / 12; }
  int month() const { return index % 12 + 1; }

  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", year(), month());
    return buf;
  }

  Month operator+(int k) const { return Month{index + k}; }
  auto operator<=>(const Month&) const = default;
};

}  // namespace deepsdf
