#pragma once

// Seed derivation and the coupling-noise draw scheme. Noise draws are tied
// to the pair index, not to iteration order, so a table is reproducible from
// (seed, delta_j) alone and identical no matter how it is traversed.

#include <cstdint>

#include "qbatt/model.hpp"

namespace qbatt {

/// splitmix64 finalizer; bijective 64-bit mix.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Stream seed for labelled sub-tasks (realization index, axis index, ...).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(mix64(master) ^ a) ^ b);
}

/// Map 64 random bits to [0, 1).
inline double unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Uniform table plus one noise draw per unordered pair: J_mn -> J_mn + delta
/// with delta ~ U[-delta_j, delta_j]. Onsite potentials are left untouched.
/// Exactly one draw per pair, keyed by the pair index m*n + k.
inline CouplingTable make_noisy_table(const SystemSpec& spec, double delta_j,
                                      std::uint64_t seed) {
  CouplingTable t = CouplingTable::uniform(spec);
  const std::int64_t n = t.n();
  for (std::int64_t m = 0; m < n; ++m) {
    for (std::int64_t k = m + 1; k < n; ++k) {
      const std::uint64_t pair_index = static_cast<std::uint64_t>(m * n + k);
      const double u = unit_double(mix64(seed ^ mix64(pair_index)));
      const double delta = (2.0 * u - 1.0) * delta_j;
      t.set_coupling(m, k, t.coupling(m, k) + delta);
    }
  }
  return t;
}

/// Number of per-pair draws used by make_noisy_table (recorded in manifests).
inline std::uint64_t noise_draws_per_pair() { return 1; }

} // namespace qbatt
