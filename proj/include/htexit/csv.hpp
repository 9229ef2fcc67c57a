#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace htexit {

/// Shortest decimal text that reads back to the same double; "inf"/"-inf"/"nan".
inline std::string fmt_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

}  // namespace htexit
