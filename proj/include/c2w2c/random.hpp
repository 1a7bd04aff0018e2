#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace c2w2c {

/// Deterministic helpers on top of mt19937_64. The standard distributions are
/// implementation-defined, so everything below maps engine output explicitly
/// to keep traces reproducible across standard libraries.

inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
}

inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

/// Unbiased integer in [0, bound) by rejection.
inline std::uint64_t bounded_uint(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

template <typename V>
void shuffle_vector(V& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(bounded_uint(rng, i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

/// Stable per-epoch shuffle seed derived from the base seed (splitmix64 mix).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace c2w2c
