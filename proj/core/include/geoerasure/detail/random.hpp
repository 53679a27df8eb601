#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace geoerasure::detail {

// std::uniform_int_distribution and std::shuffle are implementation-defined,
// so seeded outputs would differ between standard libraries. mt19937_64 is
// fully specified; the helpers below only use its raw output.

/// Uniform index in [0, n) by multiply-shift with rejection.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  __extension__ using u128 = unsigned __int128;
  std::uint64_t x = rng();
  u128 m = static_cast<u128>(x) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      x = rng();
      m = static_cast<u128>(x) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
void shuffle(std::span<T> items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace geoerasure::detail
