#pragma once

#include <cstdint>

namespace splitnn {

/// Independent child seed for a named stream (splitmix64 finaliser).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace seed_stream {
inline constexpr std::uint64_t data = 1;
inline constexpr std::uint64_t partition = 2;
inline constexpr std::uint64_t sampler = 3;
}  // namespace seed_stream

/// Seed of client `id`'s minibatch sampler under experiment seed `base`.
constexpr std::uint64_t client_sampler_seed(std::uint64_t base, std::uint64_t id) noexcept {
  return derive_seed(derive_seed(base, seed_stream::sampler), id);
}

}  // namespace splitnn
