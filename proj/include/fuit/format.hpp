#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace fuit {

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline constexpr const char* kToolVersion = "0.3.0";

}  // namespace fuit
