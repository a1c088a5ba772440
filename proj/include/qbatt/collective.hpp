#pragma once

// Exact dynamics of the uniform-coupling model in the two-large-spin sector.
// The conserved total z spin confines the dynamics launched from the
// all-down (battery) x all-up (charger) state to the K+1 ladder states |k>
// with k transferred excitations, K = min(N_B, N_C), where the Hamiltonian
// is real symmetric tridiagonal:
//
//   <k|H|k>   = V_B k + V_C (N_C - k) + J_B k (N_B - k) + J_C k (N_C - k)
//   <k+1|H|k> = J_BC (k+1) sqrt((N_B - k)(N_C - k))
//
// The |k> states are products of battery and charger ladder states, so they
// are simultaneously the Schmidt basis of the battery/charger bipartition
// and the entanglement entropy is read off the amplitudes directly.

#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "qbatt/krylov.hpp"
#include "qbatt/model.hpp"
#include "qbatt/result.hpp"
#include "qbatt/tridiag.hpp"

namespace qbatt {

struct CollectiveHamiltonian {
  std::vector<double> diag;     // K+1 entries
  std::vector<double> offdiag;  // K entries

  std::size_t dim() const { return diag.size(); }
};

inline CollectiveHamiltonian build_hamiltonian(const SystemSpec& spec) {
  spec.validate();
  const std::int64_t kk = spec.k_max();
  CollectiveHamiltonian h;
  h.diag.resize(static_cast<std::size_t>(kk + 1));
  h.offdiag.resize(static_cast<std::size_t>(kk));
  const double nb = static_cast<double>(spec.n_b);
  const double nc = static_cast<double>(spec.n_c);
  for (std::int64_t k = 0; k <= kk; ++k) {
    const double kd = static_cast<double>(k);
    h.diag[static_cast<std::size_t>(k)] = spec.v_b * kd + spec.v_c * (nc - kd) +
                                          spec.j_b * kd * (nb - kd) +
                                          spec.j_c * kd * (nc - kd);
  }
  for (std::int64_t k = 0; k < kk; ++k) {
    const double kd = static_cast<double>(k);
    h.offdiag[static_cast<std::size_t>(k)] =
        spec.j_bc * (kd + 1.0) * std::sqrt((nb - kd) * (nc - kd));
  }
  return h;
}

struct CollectiveState {
  std::vector<cplx> amps;  // K+1 amplitudes over |k>
  SystemSpec spec;

  double norm2() const {
    double n = 0.0;
    for (const cplx& a : amps) n += std::norm(a);
    return n;
  }
};

inline CollectiveState make_initial_collective(const SystemSpec& spec) {
  spec.validate();
  CollectiveState s;
  s.spec = spec;
  s.amps.assign(static_cast<std::size_t>(spec.k_max() + 1), cplx{});
  s.amps[0] = 1.0;
  return s;
}

enum class Method { spectral, krylov, auto_select };

struct PropagateOptions {
  Method method = Method::auto_select;
  std::size_t spectral_max_dim = 4096;
  KrylovOptions krylov;
  bool with_entropy = true;
};

inline Method resolve_method(Method m, std::size_t dim, std::size_t spectral_max) {
  if (m != Method::auto_select) return m;
  return dim <= spectral_max ? Method::spectral : Method::krylov;
}

inline void tridiagonal_apply(const CollectiveHamiltonian& h, const cplx* in, cplx* out) {
  const std::size_t n = h.dim();
  for (std::size_t i = 0; i < n; ++i) {
    cplx acc = h.diag[i] * in[i];
    if (i > 0) acc += h.offdiag[i - 1] * in[i - 1];
    if (i + 1 < n) acc += h.offdiag[i] * in[i + 1];
    out[i] = acc;
  }
}

inline double collective_energy(const CollectiveHamiltonian& h, std::span<const cplx> c) {
  const std::size_t n = h.dim();
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    e += h.diag[i] * std::norm(c[i]);
    if (i + 1 < n) e += 2.0 * h.offdiag[i] * (std::conj(c[i]) * c[i + 1]).real();
  }
  return e;
}

/// Streamed propagation: observer(sample_index, time, amplitudes, energy)
/// is called once per sample time (ascending, starting at or after 0).
template <class Observer>
void propagate_observe(const CollectiveState& state0, const CollectiveHamiltonian& h,
                       std::span<const double> times, const PropagateOptions& opts,
                       Observer&& observer) {
  const std::size_t dim = h.dim();
  if (state0.amps.size() != dim)
    throw std::invalid_argument("propagate: state/Hamiltonian dimension mismatch");
  if (times.empty()) return;
  for (std::size_t i = 0; i + 1 < times.size(); ++i)
    if (!(times[i] < times[i + 1]))
      throw std::invalid_argument("propagate: sample times must be ascending");

  const Method method = resolve_method(opts.method, dim, opts.spectral_max_dim);
  if (method == Method::spectral) {
    const SpectralDecomposition sd = eigendecompose(SymTridiagonal{h.diag, h.offdiag});
    std::vector<cplx> w(dim), c(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      cplx acc{};
      for (std::size_t i = 0; i < dim; ++i) acc += sd.vec(i, j) * state0.amps[i];
      w[j] = acc;
    }
    for (std::size_t s = 0; s < times.size(); ++s) {
      const double t = times[s];
      for (std::size_t i = 0; i < dim; ++i) c[i] = cplx{};
      for (std::size_t j = 0; j < dim; ++j) {
        const double phase = -sd.eigenvalues[j] * t;
        const cplx f = w[j] * cplx{std::cos(phase), std::sin(phase)};
        for (std::size_t i = 0; i < dim; ++i) c[i] += sd.vec(i, j) * f;
      }
      observer(s, t, std::span<const cplx>(c.data(), dim), collective_energy(h, c));
    }
  } else {
    std::vector<cplx> c(state0.amps);
    auto apply = [&h](const cplx* in, cplx* out) { tridiagonal_apply(h, in, out); };
    KrylovPropagator<decltype(apply)> prop(apply, dim, opts.krylov);
    prop.evolve_sampled(std::span<cplx>(c.data(), dim), 0.0, times, times.back(),
                        [&](std::size_t s, std::span<const cplx> amps, double energy) {
                          observer(s, times[s], amps, energy);
                        });
  }
}

/// Propagated states at every grid time. Convenient for small K; large runs
/// should stream through propagate_observe or run_dynamics instead.
inline std::vector<CollectiveState> propagate(const CollectiveState& state0,
                                              const CollectiveHamiltonian& h,
                                              const TimeGrid& grid,
                                              const PropagateOptions& opts = {}) {
  const std::vector<double> ts = grid.times();
  std::vector<CollectiveState> out(ts.size(), CollectiveState{{}, state0.spec});
  propagate_observe(state0, h, ts, opts,
                    [&](std::size_t s, double, std::span<const cplx> amps, double) {
                      out[s].amps.assign(amps.begin(), amps.end());
                    });
  return out;
}

namespace detail {

struct CollectiveAccumulator {
  const SystemSpec spec;
  const double k_inv;       // 1 / K
  const double s_max;       // ln(K+1)
  DynamicsResult& result;
  bool with_entropy;
  double e_b0 = 0.0;

  CollectiveAccumulator(const SystemSpec& sp, DynamicsResult& r, bool entropy)
      : spec(sp),
        k_inv(1.0 / static_cast<double>(sp.k_max())),
        s_max(std::log(static_cast<double>(sp.k_max()) + 1.0)),
        result(r),
        with_entropy(entropy) {}

  void operator()(std::size_t s, double t, std::span<const cplx> amps, double energy) {
    const double nc = static_cast<double>(spec.n_c);
    double norm2 = 0.0, kmean = 0.0, entropy_nat = 0.0;
    for (std::size_t k = 0; k < amps.size(); ++k) {
      const double p = std::norm(amps[k]);
      norm2 += p;
      kmean += static_cast<double>(k) * p;
      if (with_entropy && p > 0.0) entropy_nat -= p * std::log(p);
    }
    const double e_b = spec.v_b * kmean;
    const double e_c = spec.v_c * (nc * norm2 - kmean);
    if (s == 0 && t == 0.0) e_b0 = e_b;

    result.t.push_back(t);
    result.e_b.push_back(e_b);
    result.p_b.push_back(t > 0.0 ? (e_b - e_b0) / t : 0.0);
    result.eta_b.push_back(kmean * k_inv);
    result.s_vn.push_back(with_entropy ? entropy_nat : std::nan(""));
    result.s_vn_norm.push_back(with_entropy ? entropy_nat / s_max : std::nan(""));
    result.e_total.push_back(energy);

    auto& d = result.diagnostics;
    if (s == 0) d.energy_reference = energy;
    d.max_norm_error = std::max(d.max_norm_error, std::abs(norm2 - 1.0));
    d.max_energy_drift = std::max(d.max_energy_drift, std::abs(energy - d.energy_reference));
    if (spec.v_b != 0.0 && spec.v_c != 0.0) {
      d.excitation_checked = true;
      d.max_excitation_error =
          std::max(d.max_excitation_error, std::abs(e_b / spec.v_b + e_c / spec.v_c - nc));
    }
    if (with_entropy) {
      d.entropy_checked = true;
      d.entropy_bound_excess =
          std::max({d.entropy_bound_excess, entropy_nat - s_max, -entropy_nat});
    }
  }
};

} // namespace detail

/// Observable series for already-propagated states.
inline DynamicsResult observables(std::span<const CollectiveState> states,
                                  const TimeGrid& grid) {
  if (states.empty()) throw std::invalid_argument("observables: no states");
  const std::vector<double> ts = grid.times();
  if (ts.size() != states.size())
    throw std::invalid_argument("observables: grid/state count mismatch");
  const CollectiveHamiltonian h = build_hamiltonian(states[0].spec);
  DynamicsResult r;
  detail::CollectiveAccumulator acc(states[0].spec, r, true);
  for (std::size_t s = 0; s < states.size(); ++s)
    acc(s, ts[s], std::span<const cplx>(states[s].amps.data(), states[s].amps.size()),
        collective_energy(h, states[s].amps));
  return r;
}

/// Initial state -> propagate -> observables, streaming.
inline DynamicsResult run_dynamics(const SystemSpec& spec, std::span<const double> times,
                                   const PropagateOptions& opts = {}) {
  const CollectiveHamiltonian h = build_hamiltonian(spec);
  const CollectiveState s0 = make_initial_collective(spec);
  DynamicsResult r;
  detail::CollectiveAccumulator acc(spec, r, opts.with_entropy);
  propagate_observe(s0, h, times, opts, acc);
  return r;
}

inline DynamicsResult run_dynamics(const SystemSpec& spec, const TimeGrid& grid,
                                   const PropagateOptions& opts = {}) {
  const std::vector<double> ts = grid.times();
  return run_dynamics(spec, std::span<const double>(ts.data(), ts.size()), opts);
}

} // namespace qbatt
