#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tbs {

using Rng = std::mt19937_64;

/// Counter-based seed derivation: folds each tag into the seed with splitmix64.
/// Every random stream in the library is keyed this way, so results never depend
/// on the order in which streams are consumed.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(seed, tags));
}

/// Uniform in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform integer in [lo, hi].
int uniform_int(Rng& rng, int lo, int hi);

double standard_normal(Rng& rng);

}  // namespace tbs
