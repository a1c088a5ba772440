#pragma once

// Parameter records for the qubit battery-charger model and the derived
// constants every engine needs. All types are immutable value records after
// construction and safe to share across threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qbatt {

/// Uniform-coupling model: N_B battery qubits with onsite potential V_B and
/// intra-part coupling J_B, N_C charger qubits with V_C and J_C, and a
/// battery-charger coupling J_BC on every cross pair.
struct SystemSpec {
  std::int64_t n_b = 0;
  std::int64_t n_c = 0;
  double v_b = 1.0;
  double v_c = 0.0;
  double j_b = 0.0;
  double j_c = 0.0;
  double j_bc = 0.0;

  double delta_v() const { return v_b - v_c; }
  std::int64_t k_max() const { return std::min(n_b, n_c); }

  /// Effective detuning of the quadratic low-excitation model.
  double omega() const {
    return j_b * static_cast<double>(n_b) + j_c * static_cast<double>(n_c) + delta_v();
  }
  /// Effective cross coupling J_BC * sqrt(N_B N_C).
  double g() const {
    return j_bc * std::sqrt(static_cast<double>(n_b) * static_cast<double>(n_c));
  }

  void validate() const {
    if (n_b < 1 || n_c < 1)
      throw std::invalid_argument("SystemSpec: qubit counts must be >= 1");
    for (double x : {v_b, v_c, j_b, j_c, j_bc})
      if (!std::isfinite(x))
        throw std::invalid_argument("SystemSpec: non-finite parameter");
  }
};

/// Per-site potentials and per-pair couplings of the general model. Sites
/// 0..n_b-1 are the battery, n_b..n-1 the charger; j is symmetric with zero
/// diagonal.
struct CouplingTable {
  std::int64_t n_b = 0;
  std::int64_t n_c = 0;
  std::vector<double> v;  // size n
  std::vector<double> j;  // size n*n, row-major

  std::int64_t n() const { return n_b + n_c; }
  bool is_battery(std::int64_t m) const { return m < n_b; }

  double coupling(std::int64_t m, std::int64_t k) const { return j[static_cast<std::size_t>(m * n() + k)]; }
  void set_coupling(std::int64_t m, std::int64_t k, double value) {
    j[static_cast<std::size_t>(m * n() + k)] = value;
    j[static_cast<std::size_t>(k * n() + m)] = value;
  }

  static CouplingTable uniform(const SystemSpec& spec) {
    spec.validate();
    CouplingTable t;
    t.n_b = spec.n_b;
    t.n_c = spec.n_c;
    const std::int64_t n = t.n();
    t.v.resize(static_cast<std::size_t>(n));
    for (std::int64_t m = 0; m < n; ++m)
      t.v[static_cast<std::size_t>(m)] = t.is_battery(m) ? spec.v_b : spec.v_c;
    t.j.assign(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t m = 0; m < n; ++m) {
      for (std::int64_t k = m + 1; k < n; ++k) {
        double jj;
        if (t.is_battery(m) && t.is_battery(k))
          jj = spec.j_b;
        else if (!t.is_battery(m) && !t.is_battery(k))
          jj = spec.j_c;
        else
          jj = spec.j_bc;
        t.set_coupling(m, k, jj);
      }
    }
    return t;
  }

  void validate() const {
    const std::int64_t nn = n();
    if (n_b < 1 || n_c < 1)
      throw std::invalid_argument("CouplingTable: both parts need at least one site");
    if (static_cast<std::int64_t>(v.size()) != nn ||
        static_cast<std::int64_t>(j.size()) != nn * nn)
      throw std::invalid_argument("CouplingTable: inconsistent array sizes");
    for (std::int64_t m = 0; m < nn; ++m) {
      if (coupling(m, m) != 0.0)
        throw std::invalid_argument("CouplingTable: nonzero diagonal coupling");
      for (std::int64_t k = 0; k < nn; ++k)
        if (coupling(m, k) != coupling(k, m))
          throw std::invalid_argument("CouplingTable: coupling matrix not symmetric");
    }
  }
};

/// One battery-charger qubit pair of the parallel (non-interacting pairs)
/// reference battery, replicated n_pairs times.
struct PairSpec {
  double j_pair = 0.0;
  double v_b = 1.0;
  double v_c = 0.0;
  std::int64_t n_pairs = 1;

  double delta_v() const { return v_b - v_c; }
  /// Pair oscillation frequency sqrt(4 J^2 + dV^2).
  double rabi() const { return std::hypot(2.0 * j_pair, delta_v()); }

  void validate() const {
    if (n_pairs < 1) throw std::invalid_argument("PairSpec: n_pairs must be >= 1");
  }
};

enum class GridSpacing { uniform, logarithmic };

/// Sample times for a dynamics run. Uniform grids start at t = 0;
/// logarithmic grids are geometric over four decades ending at t_max.
struct TimeGrid {
  double t_max = 0.0;
  std::int64_t n_samples = 2;
  GridSpacing spacing = GridSpacing::uniform;

  std::vector<double> times() const {
    if (n_samples < 1) throw std::invalid_argument("TimeGrid: n_samples must be >= 1");
    if (!(t_max > 0.0)) throw std::invalid_argument("TimeGrid: t_max must be > 0");
    std::vector<double> ts;
    ts.reserve(static_cast<std::size_t>(n_samples));
    if (spacing == GridSpacing::uniform) {
      if (n_samples == 1) return {0.0};
      for (std::int64_t i = 0; i < n_samples; ++i)
        ts.push_back(t_max * static_cast<double>(i) / static_cast<double>(n_samples - 1));
    } else {
      if (n_samples == 1) return {t_max};
      const double t_min = t_max * 1e-4;
      const double ratio = std::pow(t_max / t_min, 1.0 / static_cast<double>(n_samples - 1));
      double t = t_min;
      for (std::int64_t i = 0; i < n_samples; ++i) {
        ts.push_back(i + 1 == n_samples ? t_max : t);
        t *= ratio;
      }
    }
    return ts;
  }
};

} // namespace qbatt
