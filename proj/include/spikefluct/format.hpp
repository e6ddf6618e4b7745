#pragma once

#include <charconv>
#include <cmath>
#include <string>
#include <system_error>

namespace spikefluct {

/// Locale-independent shortest "%.{digits}g"-style rendering ('.' decimal).
inline std::string format_double(double x, int digits = 10) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, digits);
  if (res.ec != std::errc()) return "nan";
  return std::string(buf, res.ptr);
}

}  // namespace spikefluct
