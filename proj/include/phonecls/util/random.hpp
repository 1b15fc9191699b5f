#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace phonecls {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent per-task seeds from (seed, index).
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix_seed(mix_seed(seed) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

// Uniform integer in [0, n) without the implementation-defined behaviour of
// std::uniform_int_distribution, so seeded results match across standard libraries.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - Rng::max() % n;
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return draw % n;
}

// Uniform double in [0, 1).
inline double uniform_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Standard normal by Box-Muller.
inline double standard_normal(Rng& rng) {
  double u1 = uniform_unit(rng);
  while (u1 <= 0.0) u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// Fisher-Yates on any random-access range.
template <typename Range>
void shuffle(Range& range, Rng& rng) {
  using std::swap;
  for (std::size_t i = range.size(); i > 1; --i) {
    swap(range[i - 1], range[uniform_index(rng, i)]);
  }
}

}  // namespace phonecls
