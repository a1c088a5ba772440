#pragma once

// Dynamics of the general (possibly disordered) model in the conserved
// excitation-number sector: sparse Hamiltonian action over the bit-basis and
// Lanczos time stepping. The battery/charger entanglement entropy comes from
// the Schmidt values of the amplitude matrix, block by battery-excitation
// count.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "qbatt/basis.hpp"
#include "qbatt/krylov.hpp"
#include "qbatt/model.hpp"
#include "qbatt/result.hpp"

namespace qbatt {

struct SectorBuildOptions {
  std::size_t memory_cap_bytes = std::size_t{2} << 30;  // adjacency budget
  bool force_matrix_free = false;
};

/// H restricted to one excitation sector. Every configuration has exactly
/// n_exc * (n - n_exc) outgoing hops, so the adjacency is stored without row
/// pointers: hop h of row i moves the excitation on set bit m to clear bit q
/// with amplitude J(m, q). When the adjacency exceeds the memory cap the
/// hops are regenerated on the fly during the matvec.
struct SparseHamiltonian {
  std::shared_ptr<const SectorBasis> basis;
  std::shared_ptr<const CouplingTable> table;
  std::vector<double> diagonal;       // sum of V_m over set bits
  std::vector<std::int32_t> targets;  // dim * hops_per_row, empty if matrix-free
  std::vector<std::uint16_t> pair_id; // m * n_sites + q per stored hop
  std::vector<double> j_flat;         // coupling lookup by pair_id
  int hops_per_row = 0;
  bool matrix_free = false;

  std::int64_t dim() const { return basis->dim(); }

  void apply(const cplx* in, cplx* out) const {
    const std::int64_t d = dim();
    if (!matrix_free) {
      const std::int64_t r = hops_per_row;
      const std::int32_t* tg = targets.data();
      const std::uint16_t* pid = pair_id.data();
      const double* jf = j_flat.data();
      for (std::int64_t i = 0; i < d; ++i) {
        cplx acc = diagonal[static_cast<std::size_t>(i)] * in[i];
        const std::size_t base = static_cast<std::size_t>(i * r);
        for (std::int64_t h = 0; h < r; ++h)
          acc += jf[pid[base + static_cast<std::size_t>(h)]] *
                 in[tg[base + static_cast<std::size_t>(h)]];
        out[i] = acc;
      }
    } else {
      const int n = basis->n;
      const std::uint64_t full = (std::uint64_t{1} << n) - 1;
      for (std::int64_t i = 0; i < d; ++i) {
        const std::uint64_t cfg = basis->config_at(i);
        cplx acc = diagonal[static_cast<std::size_t>(i)] * in[i];
        std::uint64_t set = cfg;
        while (set) {
          const int m = __builtin_ctzll(set);
          set &= set - 1;
          std::uint64_t clear = ~cfg & full;
          while (clear) {
            const int q = __builtin_ctzll(clear);
            clear &= clear - 1;
            const std::uint64_t moved =
                (cfg ^ (std::uint64_t{1} << m)) | (std::uint64_t{1} << q);
            acc += j_flat[static_cast<std::size_t>(m * n + q)] * in[basis->index_of(moved)];
          }
        }
        out[i] = acc;
      }
    }
  }
};

struct SectorSystem {
  std::shared_ptr<const SectorBasis> basis;
  std::shared_ptr<const CouplingTable> table;
  SparseHamiltonian h;
};

inline SectorSystem build_sector(const CouplingTable& table, int n_exc,
                                 const SectorBuildOptions& opts = {}) {
  table.validate();
  const int n = static_cast<int>(table.n());
  if (n_exc < 0 || n_exc > n)
    throw std::invalid_argument("build_sector: excitation count out of range");
  if (n > 62) throw std::invalid_argument("build_sector: too many sites");
  const std::uint64_t dim = binomial(n, n_exc);
  if (dim * sizeof(cplx) > opts.memory_cap_bytes)
    throw std::runtime_error("build_sector: sector dimension exceeds the memory cap");

  SectorSystem sys;
  sys.basis = std::make_shared<const SectorBasis>(SectorBasis::build(n, n_exc));
  sys.table = std::make_shared<const CouplingTable>(table);
  SparseHamiltonian& h = sys.h;
  h.basis = sys.basis;
  h.table = sys.table;
  h.hops_per_row = n_exc * (n - n_exc);

  const SectorBasis& basis = *sys.basis;
  h.diagonal.resize(static_cast<std::size_t>(basis.dim()));
  for (std::int64_t i = 0; i < basis.dim(); ++i) {
    std::uint64_t bits = basis.config_at(i);
    double dsum = 0.0;
    while (bits) {
      dsum += table.v[static_cast<std::size_t>(__builtin_ctzll(bits))];
      bits &= bits - 1;
    }
    h.diagonal[static_cast<std::size_t>(i)] = dsum;
  }

  h.j_flat.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
  for (int m = 0; m < n; ++m)
    for (int q = 0; q < n; ++q)
      h.j_flat[static_cast<std::size_t>(m * n + q)] = table.coupling(m, q);

  const std::uint64_t adjacency_bytes =
      dim * static_cast<std::uint64_t>(h.hops_per_row) *
      (sizeof(std::int32_t) + sizeof(std::uint16_t));
  h.matrix_free = opts.force_matrix_free || adjacency_bytes > opts.memory_cap_bytes ||
                  dim > (std::uint64_t{1} << 31);

  if (!h.matrix_free && h.hops_per_row > 0) {
    h.targets.resize(dim * static_cast<std::uint64_t>(h.hops_per_row));
    h.pair_id.resize(h.targets.size());
    std::size_t w = 0;
    const std::uint64_t full = (std::uint64_t{1} << n) - 1;
    for (std::int64_t i = 0; i < basis.dim(); ++i) {
      const std::uint64_t cfg = basis.config_at(i);
      std::uint64_t set = cfg;
      while (set) {
        const int m = __builtin_ctzll(set);
        set &= set - 1;
        std::uint64_t clear = ~cfg & full;
        while (clear) {
          const int q = __builtin_ctzll(clear);
          clear &= clear - 1;
          const std::uint64_t moved =
              (cfg ^ (std::uint64_t{1} << m)) | (std::uint64_t{1} << q);
          h.targets[w] = static_cast<std::int32_t>(basis.index_of(moved));
          h.pair_id[w] = static_cast<std::uint16_t>(m * n + q);
          ++w;
        }
      }
    }
  }
  return sys;
}

struct SectorState {
  std::vector<cplx> amps;

  double norm2() const {
    double s = 0.0;
    for (const cplx& a : amps) s += std::norm(a);
    return s;
  }
};

/// Charger-full initial configuration as a bare bit pattern.
inline std::uint64_t initial_sector_config(const CouplingTable& table) {
  std::uint64_t cfg = 0;
  for (std::int64_t m = table.n_b; m < table.n(); ++m) cfg |= std::uint64_t{1} << m;
  return cfg;
}

/// All charger sites excited, all battery sites empty; the sector containing
/// it has n_exc = N_C excitations.
inline SectorState make_initial_sector(const SectorSystem& sys) {
  SectorState s;
  s.amps.assign(static_cast<std::size_t>(sys.basis->dim()), cplx{});
  s.amps[static_cast<std::size_t>(sys.basis->index_of(initial_sector_config(*sys.table)))] =
      1.0;
  return s;
}

namespace detail {

/// Entropy of the battery reduced density matrix. Amplitudes regroup into
/// blocks by battery excitation count b; within a block the coefficient
/// matrix is C(N_B, b) x C(N_C, n_exc - b) and its squared singular values
/// are eigenvalues of rho_B.
class SectorEntropy {
 public:
  SectorEntropy(const SectorBasis& basis, int n_b) : basis_(&basis) {
    const int n_c = basis.n - n_b;
    const std::uint64_t bmask = (std::uint64_t{1} << n_b) - 1;
    const int b_lo = std::max(0, basis.n_exc - n_c);
    const int b_hi = std::min(n_b, basis.n_exc);
    std::vector<SectorBasis> bat, chg;
    for (int b = b_lo; b <= b_hi; ++b) {
      blocks_.emplace_back();
      blocks_.back().rows = static_cast<Eigen::Index>(binomial(n_b, b));
      blocks_.back().cols = static_cast<Eigen::Index>(binomial(n_c, basis.n_exc - b));
      bat.push_back(SectorBasis::build(n_b, b));
      chg.push_back(SectorBasis::build(n_c, basis.n_exc - b));
    }
    row_.resize(static_cast<std::size_t>(basis.dim()));
    col_.resize(static_cast<std::size_t>(basis.dim()));
    blk_.resize(static_cast<std::size_t>(basis.dim()));
    for (std::int64_t i = 0; i < basis.dim(); ++i) {
      const std::uint64_t cfg = basis.config_at(i);
      const std::uint64_t bcfg = cfg & bmask;
      const std::uint64_t ccfg = cfg >> n_b;
      const std::size_t b = static_cast<std::size_t>(__builtin_popcountll(bcfg) - b_lo);
      blk_[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(b);
      row_[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(bat[b].index_of(bcfg));
      col_[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(chg[b].index_of(ccfg));
    }
  }

  /// Returns (entropy, sum of Schmidt weights).
  std::pair<double, double> operator()(std::span<const cplx> amps) {
    for (Block& blk : blocks_) {
      blk.m.resize(blk.rows, blk.cols);
      blk.m.setZero();
    }
    for (std::int64_t i = 0; i < basis_->dim(); ++i) {
      Block& blk = blocks_[static_cast<std::size_t>(blk_[static_cast<std::size_t>(i)])];
      blk.m(row_[static_cast<std::size_t>(i)], col_[static_cast<std::size_t>(i)]) =
          amps[static_cast<std::size_t>(i)];
    }
    double s = 0.0, total = 0.0;
    for (Block& blk : blocks_) {
      Eigen::MatrixXcd gram;
      if (blk.rows <= blk.cols)
        gram = blk.m * blk.m.adjoint();
      else
        gram = blk.m.adjoint() * blk.m;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram, Eigen::EigenvaluesOnly);
      for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
        const double lam = es.eigenvalues()[k];
        if (lam > 0.0) {
          total += lam;
          s -= lam * std::log(lam);
        }
      }
    }
    return {s, total};
  }

  /// ln of the maximal Schmidt rank across blocks (entropy upper bound).
  double log_rank_bound() const {
    double rank = 0.0;
    for (const Block& blk : blocks_) rank += static_cast<double>(std::min(blk.rows, blk.cols));
    return std::log(rank);
  }

 private:
  struct Block {
    Eigen::Index rows = 0, cols = 0;
    Eigen::MatrixXcd m;
  };
  const SectorBasis* basis_;
  std::vector<Block> blocks_;
  std::vector<std::int32_t> row_, col_, blk_;
};

} // namespace detail

struct SectorRunOptions {
  KrylovOptions krylov;
  bool with_entropy = true;
  std::int64_t realization = -1;
};

/// Streamed Lanczos propagation; observer(sample, t, amps, energy).
template <class Observer>
void sector_propagate_observe(const SectorState& state0, const SparseHamiltonian& h,
                              std::span<const double> times, const KrylovOptions& kopts,
                              Observer&& observer) {
  const std::size_t dim = static_cast<std::size_t>(h.dim());
  if (state0.amps.size() != dim)
    throw std::invalid_argument("sector propagate: dimension mismatch");
  if (times.empty()) return;
  std::vector<cplx> c(state0.amps);
  auto apply = [&h](const cplx* in, cplx* out) { h.apply(in, out); };
  KrylovPropagator<decltype(apply)> prop(apply, dim, kopts);
  prop.evolve_sampled(std::span<cplx>(c.data(), dim), 0.0, times, times.back(),
                      [&](std::size_t s, std::span<const cplx> amps, double energy) {
                        observer(s, times[s], amps, energy);
                      });
}

inline std::vector<SectorState> lanczos_propagate(const SectorState& state0,
                                                  const SparseHamiltonian& h,
                                                  const TimeGrid& grid,
                                                  const KrylovOptions& kopts = {}) {
  const std::vector<double> ts = grid.times();
  std::vector<SectorState> out(ts.size());
  sector_propagate_observe(state0, h, ts, kopts,
                           [&](std::size_t s, double, std::span<const cplx> amps, double) {
                             out[s].amps.assign(amps.begin(), amps.end());
                           });
  return out;
}

namespace detail {

struct SectorAccumulator {
  const SectorSystem& sys;
  DynamicsResult& result;
  bool with_entropy;
  std::vector<double> w_battery;  // battery onsite energy per configuration
  std::vector<double> n_battery;  // battery excitation count per configuration
  double k_min;
  double s_max;
  double e_b0 = 0.0;
  std::optional<SectorEntropy> entropy;

  SectorAccumulator(const SectorSystem& s, DynamicsResult& r, bool ent)
      : sys(s),
        result(r),
        with_entropy(ent),
        k_min(static_cast<double>(std::min(s.table->n_b, s.table->n_c))),
        s_max(std::log(static_cast<double>(std::min(s.table->n_b, s.table->n_c)) + 1.0)) {
    if (with_entropy)
      entropy.emplace(*sys.basis, static_cast<int>(sys.table->n_b));
    const std::int64_t d = sys.basis->dim();
    w_battery.resize(static_cast<std::size_t>(d));
    n_battery.resize(static_cast<std::size_t>(d));
    const std::uint64_t bmask = (std::uint64_t{1} << sys.table->n_b) - 1;
    for (std::int64_t i = 0; i < d; ++i) {
      std::uint64_t bits = sys.basis->config_at(i) & bmask;
      double wsum = 0.0;
      n_battery[static_cast<std::size_t>(i)] = static_cast<double>(__builtin_popcountll(bits));
      while (bits) {
        wsum += sys.table->v[static_cast<std::size_t>(__builtin_ctzll(bits))];
        bits &= bits - 1;
      }
      w_battery[static_cast<std::size_t>(i)] = wsum;
    }
  }

  void operator()(std::size_t s, double t, std::span<const cplx> amps, double energy) {
    double norm2 = 0.0, e_b = 0.0, nb_mean = 0.0;
    for (std::size_t i = 0; i < amps.size(); ++i) {
      const double p = std::norm(amps[i]);
      norm2 += p;
      e_b += w_battery[i] * p;
      nb_mean += n_battery[i] * p;
    }
    if (s == 0 && t == 0.0) e_b0 = e_b;

    double s_nat = std::nan("");
    auto& d = result.diagnostics;
    if (with_entropy) {
      const auto [ent, weight] = (*entropy)(amps);
      s_nat = ent;
      d.entropy_checked = true;
      d.entropy_bound_excess =
          std::max({d.entropy_bound_excess, ent - entropy->log_rank_bound(), -ent});
      d.max_norm_error = std::max(d.max_norm_error, std::abs(weight - 1.0));
    }

    result.t.push_back(t);
    result.e_b.push_back(e_b);
    result.p_b.push_back(t > 0.0 ? (e_b - e_b0) / t : 0.0);
    result.eta_b.push_back(nb_mean / k_min);
    result.s_vn.push_back(s_nat);
    result.s_vn_norm.push_back(s_nat / s_max);
    result.e_total.push_back(energy);

    if (s == 0) d.energy_reference = energy;
    d.max_norm_error = std::max(d.max_norm_error, std::abs(norm2 - 1.0));
    d.max_energy_drift = std::max(d.max_energy_drift, std::abs(energy - d.energy_reference));
    // In-sector excitation count is diagonal and exact by construction.
    d.excitation_checked = true;
    const double nc_mean = static_cast<double>(sys.basis->n_exc) * norm2 - nb_mean;
    d.max_excitation_error =
        std::max(d.max_excitation_error,
                 std::abs(nb_mean + nc_mean - static_cast<double>(sys.basis->n_exc)));
  }
};

} // namespace detail

/// Observable series for already-propagated sector states.
inline DynamicsResult sector_observables(std::span<const SectorState> states,
                                         const SectorSystem& sys, const TimeGrid& grid,
                                         bool with_entropy = true) {
  if (states.empty()) throw std::invalid_argument("sector_observables: no states");
  const std::vector<double> ts = grid.times();
  if (ts.size() != states.size())
    throw std::invalid_argument("sector_observables: grid/state count mismatch");
  DynamicsResult r;
  detail::SectorAccumulator acc(sys, r, with_entropy);
  std::vector<cplx> hx(states[0].amps.size());
  for (std::size_t s = 0; s < states.size(); ++s) {
    sys.h.apply(states[s].amps.data(), hx.data());
    cplx e{};
    for (std::size_t i = 0; i < hx.size(); ++i) e += std::conj(states[s].amps[i]) * hx[i];
    acc(s, ts[s], std::span<const cplx>(states[s].amps.data(), states[s].amps.size()),
        e.real());
  }
  return r;
}

/// Initial state -> Lanczos propagation -> observables, streaming.
inline DynamicsResult run_sector_dynamics(const SectorSystem& sys,
                                          std::span<const double> times,
                                          const SectorRunOptions& opts = {}) {
  const SectorState s0 = make_initial_sector(sys);
  DynamicsResult r;
  r.realization = opts.realization;
  detail::SectorAccumulator acc(sys, r, opts.with_entropy);
  sector_propagate_observe(s0, sys.h, times, opts.krylov, acc);
  return r;
}

inline DynamicsResult run_sector_dynamics(const SectorSystem& sys, const TimeGrid& grid,
                                          const SectorRunOptions& opts = {}) {
  const std::vector<double> ts = grid.times();
  return run_sector_dynamics(sys, std::span<const double>(ts.data(), ts.size()), opts);
}

} // namespace qbatt
