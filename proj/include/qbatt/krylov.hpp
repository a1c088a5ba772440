#pragma once

// Adaptive Lanczos propagation of exp(-i H t) applied to a state vector,
// generic over the Hamiltonian action. Each step builds a small Krylov
// subspace, exponentiates the projected tridiagonal matrix exactly, and
// controls the step size through a residual estimate; the step is halved
// until the estimate falls below the tolerance. Happy breakdown (an exactly
// invariant subspace) is detected and treated as exact.
//
// Within a converged step the projected propagator is unitary, so norm and
// energy are conserved to roundoff; the state is renormalized after each
// step to stop drift from compounding.

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "qbatt/tridiag.hpp"

namespace qbatt {

using cplx = std::complex<double>;

struct KrylovOptions {
  int max_subspace = 30;
  double step_tol = 1e-10;  // local residual estimate per step
  int max_halvings = 60;
  bool reorthogonalize = true;  // one extra Gram-Schmidt pass per vector
};

struct KrylovStats {
  long steps = 0;
  long matvecs = 0;
  double min_step = std::numeric_limits<double>::infinity();
  double max_step = 0.0;
};

template <class MatVec>
class KrylovPropagator {
 public:
  KrylovPropagator(MatVec apply, std::size_t dim, KrylovOptions opt = {})
      : apply_(std::move(apply)), dim_(dim), opt_(opt) {
    if (dim_ == 0) throw std::invalid_argument("KrylovPropagator: zero dimension");
    if (opt_.max_subspace < 1) throw std::invalid_argument("KrylovPropagator: subspace < 1");
    const std::size_t m = static_cast<std::size_t>(opt_.max_subspace);
    basis_.assign((m + 1) * dim_, cplx{});
    alpha_.assign(m, 0.0);
    beta_.assign(m, 0.0);
    u_.assign(m, cplx{});
    w_.assign(dim_, cplx{});
  }

  const KrylovStats& stats() const { return stats_; }

  /// Advance a unit-norm state by dt (either sign), substepping as needed.
  void evolve(std::span<cplx> state, double dt) {
    evolve_sampled(state, 0.0, {}, dt, nullptr);
  }

  /// Advance state from t0 to t0 + span_t, invoking
  /// sink(sample_index, state, energy) at every requested time.
  /// With a sink, span_t must be >= 0 and sample_times ascending within
  /// [t0, t0 + span_t].
  using Sink = std::function<void(std::size_t, std::span<const cplx>, double)>;
  void evolve_sampled(std::span<cplx> state, double t0,
                      std::span<const double> sample_times, double span_t,
                      const Sink& sink) {
    if (state.size() != dim_)
      throw std::invalid_argument("KrylovPropagator: state dimension mismatch");
    if (sink && span_t < 0.0)
      throw std::invalid_argument("KrylovPropagator: sampled evolution runs forward");
    {
      double n2 = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) n2 += std::norm(state[i]);
      if (std::abs(n2 - 1.0) > 1e-6)
        throw std::invalid_argument("KrylovPropagator: state must be unit norm");
    }

    const double direction = span_t >= 0.0 ? 1.0 : -1.0;
    const double t_end = t0 + span_t;
    double t = t0;
    std::size_t next_sample = 0;

    // Samples at (or numerically before) the start are the current state.
    while (sink && next_sample < sample_times.size() &&
           sample_times[next_sample] <= t0) {
      sink(next_sample, state, exact_energy_of(state));
      ++next_sample;
    }
    if (span_t == 0.0) return;

    double h_guess = std::abs(span_t);
    while (true) {
      const double remaining = std::abs(t_end - t);
      if (remaining <= std::abs(span_t) * 1e-15) break;

      const std::size_t m = build_subspace(state);
      const SymTridiagonal tm{
          std::vector<double>(alpha_.begin(), alpha_.begin() + m),
          std::vector<double>(beta_.begin(), beta_.begin() + (m - 1))};
      eig_ = eigendecompose(tm);
      const double beta_next = breakdown_ ? 0.0 : beta_[m - 1];

      double h;
      if (breakdown_) {
        h = remaining;  // invariant subspace: the projected dynamics is exact
      } else {
        h = std::min(h_guess, remaining);
        // Start near the superlinear convergence regime of the subspace.
        const double width = eig_.eigenvalues[m - 1] - eig_.eigenvalues[0];
        if (width > 0.0) h = std::min(h, 2.0 * static_cast<double>(m) / width);
        int halvings = 0;
        double est = residual_estimate(m, beta_next, h);
        while (est > opt_.step_tol) {
          if (++halvings > opt_.max_halvings)
            throw std::runtime_error(
                "krylov: residual tolerance unreachable at maximum subspace dimension");
          h *= 0.5;
          est = residual_estimate(m, beta_next, h);
        }
        h_guess = est < 0.05 * opt_.step_tol ? 1.5 * h : h;
      }

      // Emit all samples covered by this step from the current subspace.
      if (sink) {
        const double t_step_end = t + h;
        while (next_sample < sample_times.size()) {
          const double ts = sample_times[next_sample];
          if (ts - t_step_end > 1e-12 * std::max(1.0, std::abs(ts))) break;
          project_exponential(m, ts - t);
          assemble(m, w_);
          sink(next_sample, std::span<const cplx>(w_.data(), dim_),
               tridiag_quadratic(m));
          ++next_sample;
        }
      }

      project_exponential(m, direction * h);
      assemble(m, w_);
      double nrm = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) nrm += std::norm(w_[i]);
      nrm = std::sqrt(nrm);
      if (!(nrm > 0.0)) throw std::runtime_error("krylov: state vanished");
      const double inv = 1.0 / nrm;
      for (std::size_t i = 0; i < dim_; ++i) state[i] = w_[i] * inv;
      t += direction * h;
      ++stats_.steps;
      stats_.min_step = std::min(stats_.min_step, h);
      stats_.max_step = std::max(stats_.max_step, h);
    }

    while (sink && next_sample < sample_times.size()) {
      sink(next_sample, state, exact_energy_of(state));
      ++next_sample;
    }
  }

 private:
  cplx* basis_row(std::size_t j) { return basis_.data() + j * dim_; }

  /// Lanczos recurrence from `state` (assumed unit norm). Fills alpha_,
  /// beta_ and the basis rows; returns the subspace dimension actually
  /// built and sets breakdown_ when the subspace became exactly invariant.
  std::size_t build_subspace(std::span<const cplx> state) {
    const std::size_t m_max = static_cast<std::size_t>(opt_.max_subspace);
    breakdown_ = false;
    for (std::size_t i = 0; i < dim_; ++i) basis_row(0)[i] = state[i];
    double scale = 0.0;
    std::size_t m = m_max;
    for (std::size_t j = 0; j < m_max; ++j) {
      cplx* vj = basis_row(j);
      cplx* vn = basis_row(j + 1);
      apply_(vj, vn);
      ++stats_.matvecs;
      if (j > 0) {
        const double b = beta_[j - 1];
        const cplx* vp = basis_row(j - 1);
        for (std::size_t i = 0; i < dim_; ++i) vn[i] -= b * vp[i];
      }
      double a = 0.0;
      for (std::size_t i = 0; i < dim_; ++i)
        a += vj[i].real() * vn[i].real() + vj[i].imag() * vn[i].imag();
      alpha_[j] = a;
      for (std::size_t i = 0; i < dim_; ++i) vn[i] -= a * vj[i];
      if (opt_.reorthogonalize) {
        for (std::size_t p = 0; p <= j; ++p) {
          const cplx* vp = basis_row(p);
          cplx dot{};
          for (std::size_t i = 0; i < dim_; ++i) dot += std::conj(vp[i]) * vn[i];
          if (p == j) alpha_[j] += dot.real();
          for (std::size_t i = 0; i < dim_; ++i) vn[i] -= dot * vp[i];
        }
      }
      double b2 = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) b2 += std::norm(vn[i]);
      const double b = std::sqrt(b2);
      beta_[j] = b;
      scale = std::max(scale, std::abs(alpha_[j]) + b);
      if (b <= scale * 1e-14 || j + 1 == dim_) {
        m = j + 1;
        breakdown_ = true;
        break;
      }
      const double inv = 1.0 / b;
      for (std::size_t i = 0; i < dim_; ++i) vn[i] *= inv;
    }
    return std::min(m, dim_);
  }

  /// u_(s) = exp(-i s T_m) e_0 via the spectral factorization of T_m.
  void project_exponential(std::size_t m, double s) {
    for (std::size_t i = 0; i < m; ++i) u_[i] = cplx{};
    for (std::size_t j = 0; j < m; ++j) {
      const double w0 = eig_.vec(0, j);
      if (w0 == 0.0) continue;
      const double phase = -s * eig_.eigenvalues[j];
      const cplx f = w0 * cplx{std::cos(phase), std::sin(phase)};
      for (std::size_t i = 0; i < m; ++i) u_[i] += eig_.vec(i, j) * f;
    }
  }

  /// Residual estimate for a step of size h: |beta_m| times the integral of
  /// the last subspace component of u(s) over [0, h] (composite Simpson).
  double residual_estimate(std::size_t m, double beta_next, double h) {
    if (beta_next == 0.0) return 0.0;
    double acc = 0.0;
    const double weights[4] = {4.0, 2.0, 4.0, 1.0};
    for (int q = 1; q <= 4; ++q) {
      project_exponential(m, h * 0.25 * q);
      acc += weights[q - 1] * std::abs(u_[m - 1]);
    }
    return beta_next * h * acc / 12.0;
  }

  void assemble(std::size_t m, std::vector<cplx>& out) {
    for (std::size_t i = 0; i < dim_; ++i) out[i] = cplx{};
    for (std::size_t j = 0; j < m; ++j) {
      const cplx uj = u_[j];
      if (uj == cplx{}) continue;
      const cplx* vj = basis_row(j);
      for (std::size_t i = 0; i < dim_; ++i) out[i] += uj * vj[i];
    }
  }

  /// <u|T|u> for the current subspace coefficients (the sample's energy).
  double tridiag_quadratic(std::size_t m) {
    double e = 0.0, nrm = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      e += alpha_[i] * std::norm(u_[i]);
      nrm += std::norm(u_[i]);
      if (i + 1 < m) e += 2.0 * beta_[i] * (std::conj(u_[i]) * u_[i + 1]).real();
    }
    return nrm > 0.0 ? e / nrm : 0.0;
  }

  /// <state|H|state>, used when a sample coincides with the current state.
  double exact_energy_of(std::span<const cplx> state) {
    apply_(state.data(), w_.data());
    ++stats_.matvecs;
    cplx e{};
    for (std::size_t i = 0; i < dim_; ++i) e += std::conj(state[i]) * w_[i];
    return e.real();
  }

  MatVec apply_;
  std::size_t dim_;
  KrylovOptions opt_;
  KrylovStats stats_;
  std::vector<cplx> basis_;
  std::vector<double> alpha_, beta_;
  std::vector<cplx> u_;
  std::vector<cplx> w_;
  SpectralDecomposition eig_;
  bool breakdown_ = false;
};

} // namespace qbatt
