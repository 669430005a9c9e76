#pragma once

#include <charconv>
#include <cmath>
#include <optional>
#include <string>

namespace sessat {

// Shortest round-trip decimal form; stable across runs and platforms.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (v == 0.0) return "0";  // folds -0
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_slot(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

// Fixed-precision rendering for human-readable tables.
inline std::string format_fixed(double v, int digits) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

}  // namespace sessat
