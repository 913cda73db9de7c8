#pragma once

#include <charconv>
#include <optional>
#include <ostream>
#include <string>

namespace gngan {

/// Shortest text that round-trips the value.
inline std::string format_double(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// Empty string for an absent value.
inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; }

}  // namespace gngan
