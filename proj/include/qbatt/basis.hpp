#pragma once

// Enumeration of the fixed-excitation-number sector as bit configurations in
// ascending numeric order, with O(1) or O(N) rank lookup. Bit m of a
// configuration is the occupation of site m; battery sites occupy the low
// bits so that the entropy block split is a plain radix split.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace qbatt {

/// Pascal triangle in 64-bit, n up to 63 (C(63, 31) fits comfortably).
inline std::uint64_t binomial(int n, int k) {
  static const auto table = [] {
    std::array<std::array<std::uint64_t, 64>, 64> c{};
    for (int i = 0; i < 64; ++i) {
      c[i][0] = 1;
      for (int j = 1; j <= i; ++j)
        c[i][j] = c[i - 1][j - 1] + (j <= i - 1 ? c[i - 1][j] : 0);
    }
    return c;
  }();
  if (k < 0 || k > n) return 0;
  if (n < 0 || n > 63) throw std::invalid_argument("binomial: n out of range");
  return table[n][k];
}

struct SectorBasis {
  int n = 0;       // total sites
  int n_exc = 0;   // conserved excitation number
  std::vector<std::uint64_t> configs;     // ascending
  std::vector<std::int64_t> rank_table;   // 2^n entries when n <= 24, else empty

  std::int64_t dim() const { return static_cast<std::int64_t>(configs.size()); }
  std::uint64_t config_at(std::int64_t i) const { return configs[static_cast<std::size_t>(i)]; }

  /// Ordinal of a configuration within the ascending enumeration.
  /// Colexicographic ranking: rank = sum over set bits p_i of C(p_i, i+1).
  std::int64_t index_of(std::uint64_t cfg) const {
    if (!rank_table.empty()) return rank_table[cfg];
    std::int64_t r = 0;
    int seen = 0;
    std::uint64_t bits = cfg;
    while (bits) {
      const int p = __builtin_ctzll(bits);
      bits &= bits - 1;
      r += static_cast<std::int64_t>(binomial(p, ++seen));
    }
    return r;
  }

  static SectorBasis build(int n, int n_exc) {
    if (n < 1 || n > 63) throw std::invalid_argument("SectorBasis: n out of range");
    if (n_exc < 0 || n_exc > n)
      throw std::invalid_argument("SectorBasis: excitation count out of range");
    SectorBasis b;
    b.n = n;
    b.n_exc = n_exc;
    const std::uint64_t dim = binomial(n, n_exc);
    b.configs.reserve(dim);
    if (n_exc == 0) {
      b.configs.push_back(0);
    } else {
      // Gosper's hack walks same-popcount words in ascending order.
      std::uint64_t cfg = (std::uint64_t{1} << n_exc) - 1;
      const std::uint64_t limit = std::uint64_t{1} << n;
      while (cfg < limit) {
        b.configs.push_back(cfg);
        const std::uint64_t c = cfg & (~cfg + 1);
        const std::uint64_t r = cfg + c;
        if (r >= limit) break;
        cfg = (((r ^ cfg) >> 2) / c) | r;
      }
    }
    if (b.configs.size() != dim)
      throw std::runtime_error("SectorBasis: enumeration mismatch");
    if (n <= 24) {
      b.rank_table.assign(std::size_t{1} << n, -1);
      for (std::int64_t i = 0; i < b.dim(); ++i) b.rank_table[b.configs[i]] = i;
    }
    return b;
  }
};

} // namespace qbatt
