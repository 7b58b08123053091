#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace splitnn {

using ClientId = std::uint32_t;
using BatchId = std::uint64_t;

/// Numeric precision of matrix payloads on the wire. Arithmetic is always f64.
enum class Precision : std::uint8_t { f32 = 0, f64 = 1 };

constexpr std::size_t bytes_per_value(Precision p) noexcept {
  return p == Precision::f32 ? 4 : 8;
}

std::string_view to_string(Precision p) noexcept;
std::optional<Precision> parse_precision(std::string_view s) noexcept;

}  // namespace splitnn
