#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>

namespace embfuse {

/// Shortest round-trip decimal form; empty for NaN (a blank CSV cell).
inline std::string format_double(double v) {
  if (std::isnan(v)) return {};
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

inline std::string format_hash(std::uint64_t h) {
  std::array<char, 17> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), h, 16);
  std::string hex(buf.data(), ptr);
  return std::string(16 - hex.size(), '0') + hex;
}

}  // namespace embfuse
