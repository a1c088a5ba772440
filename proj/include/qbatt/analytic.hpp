#pragma once

// Closed-form references: the parallel (independent-pairs) battery, the
// low-excitation quadratic model of the collective battery, and the
// asymptotic size-scaling laws of its maxima.
//
// The power maximum of (1 - cos x)/x sits at the root x* of tan(x/2) = x,
// x* = 2.3311...; the peak coefficient 2(1 - cos x*)/x* = 2 sin x* =
// 1.4492... Both are computed to machine precision at first use rather than
// stored as rounded literals.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "qbatt/model.hpp"

namespace qbatt {

namespace detail {
inline double solve_power_root() {
  // tan(x/2) - x is continuous and changes sign on [2, 3].
  double lo = 2.0, hi = 3.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (std::tan(0.5 * mid) - mid < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}
} // namespace detail

/// Root of tan(x/2) = x on (0, pi): the scaled time of the power maximum.
inline double power_peak_root() {
  static const double x = detail::solve_power_root();
  return x;
}

/// 2 (1 - cos x*) / x*: peak value of 2(1 - cos x)/x.
inline double power_peak_coefficient() {
  static const double c = 2.0 * (1.0 - std::cos(power_peak_root())) / power_peak_root();
  return c;
}

struct MaxRecord {
  double value = 0.0;
  double time = 0.0;
  enum class Kind { energy, power } kind = Kind::energy;
  bool window_limited = false;
};

// ---------------------------------------------------------------------------
// Parallel battery: N_B independent pairs.

struct ParallelPoint {
  double e = 0.0;
  double p = 0.0;
  double s = 0.0;
};

inline ParallelPoint parallel_dynamics(const PairSpec& pair, double t) {
  pair.validate();
  if (t < 0.0) throw std::invalid_argument("parallel_dynamics: t must be >= 0");
  const double om = pair.rabi();
  const double nb = static_cast<double>(pair.n_pairs);
  ParallelPoint out;
  if (om == 0.0) return out;  // decoupled, degenerate pair: nothing moves
  const double j2 = pair.j_pair * pair.j_pair;
  const double sh = std::sin(0.5 * om * t);
  const double ch = std::cos(0.5 * om * t);
  const double b = 4.0 * j2 / (om * om) * sh * sh;  // excited-pair weight
  const double a = ch * ch + pair.delta_v() * pair.delta_v() / (om * om) * sh * sh;
  out.e = nb * pair.v_b * b;
  out.p = t > 0.0 ? out.e / t : 0.0;
  const auto xlnx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
  out.s = -nb * (xlnx(a) + xlnx(b));
  return out;
}

/// Exact maxima of the pair energy and average power over time.
inline std::pair<MaxRecord, MaxRecord> parallel_maxima(const PairSpec& pair) {
  pair.validate();
  const double om = pair.rabi();
  if (om == 0.0)
    throw std::invalid_argument("parallel_maxima: degenerate pair (J = 0 and dV = 0)");
  if (!(pair.v_b > 0.0))
    throw std::invalid_argument("parallel_maxima: requires V_b > 0");
  const double nb = static_cast<double>(pair.n_pairs);
  const double j2 = pair.j_pair * pair.j_pair;
  MaxRecord e{4.0 * nb * pair.v_b * j2 / (om * om), M_PI / om, MaxRecord::Kind::energy,
              false};
  MaxRecord p{power_peak_coefficient() * nb * pair.v_b * j2 / om, power_peak_root() / om,
              MaxRecord::Kind::power, false};
  return {e, p};
}

// ---------------------------------------------------------------------------
// Low-excitation quadratic model of the collective battery.

enum class HpRegime { oscillatory, critical, hyperbolic };

struct HpParams {
  double omega = 0.0;          // J_B N_B + J_C N_C + dV
  double g = 0.0;              // J_BC sqrt(N_B N_C)
  double v_b = 1.0;
  double v_c_times_nc = 0.0;   // constant charger offset, not part of E_B

  /// Sign of omega^2 - 4 g^2 with a relative tolerance at the boundary.
  HpRegime regime(double rel_tol = 1e-12) const {
    const double d = discriminant();
    const double scale = std::max(omega * omega, 4.0 * g * g);
    if (scale == 0.0 || std::abs(d) <= rel_tol * scale) return HpRegime::critical;
    return d > 0.0 ? HpRegime::oscillatory : HpRegime::hyperbolic;
  }

  double discriminant() const { return omega * omega - 4.0 * g * g; }

  static HpParams from_spec(const SystemSpec& spec) {
    spec.validate();
    return HpParams{spec.omega(), spec.g(), spec.v_b,
                    spec.v_c * static_cast<double>(spec.n_c)};
  }
};

struct HpPoint {
  double e = 0.0;
  double p = 0.0;
};

inline HpPoint hp_dynamics(const HpParams& hp, double t) {
  if (t < 0.0) throw std::invalid_argument("hp_dynamics: t must be >= 0");
  const double g2v = hp.g * hp.g * hp.v_b;
  HpPoint out;
  switch (hp.regime()) {
    case HpRegime::critical:
      out.e = g2v * t * t;
      break;
    case HpRegime::oscillatory: {
      const double w = std::sqrt(hp.discriminant());
      const double sh = std::sin(0.5 * w * t);
      out.e = 4.0 * g2v / (w * w) * sh * sh;  // 2 g^2 V (1 - cos wt) / w^2
      break;
    }
    case HpRegime::hyperbolic: {
      const double w = std::sqrt(-hp.discriminant());
      const double sh = std::sinh(0.5 * w * t);
      out.e = 4.0 * g2v / (w * w) * sh * sh;  // 2 g^2 V (cosh wt - 1) / w^2
      break;
    }
  }
  out.p = t > 0.0 ? out.e / t : 0.0;
  return out;
}

/// Closed-form maxima; defined only in the oscillatory regime.
inline std::pair<MaxRecord, MaxRecord> hp_maxima(const HpParams& hp) {
  if (hp.regime() != HpRegime::oscillatory)
    throw std::domain_error("hp_maxima: maxima unbounded outside the oscillatory regime");
  const double w = std::sqrt(hp.discriminant());
  const double g2v = hp.g * hp.g * hp.v_b;
  MaxRecord e{4.0 * g2v / (w * w), M_PI / w, MaxRecord::Kind::energy, false};
  MaxRecord p{power_peak_coefficient() * g2v / w, power_peak_root() / w,
              MaxRecord::Kind::power, false};
  return {e, p};
}

// ---------------------------------------------------------------------------
// Asymptotic scaling of the maxima with the battery size, for N_B = N_C and
// a single coupling J. Two regimes admit closed exponents:
//   dV > 0, 4 J N_B >> dV:   E ~ J N_B V_B / dV,           exponents (1, 3/2, -1/2)
//   dV < 0, 4 J N_B << -dV:  E ~ 4 J^2 N_B^2 V_B / dV^2,   exponents (2, 2, 0)

struct ScalingPrediction {
  bool valid = false;
  std::string reason;       // set when no prediction applies
  double e_exponent = 0.0;
  double p_exponent = 0.0;
  double t_exponent = 0.0;  // shared by t_E and t_P
  double e_prefactor = 0.0;
  double p_prefactor = 0.0;
  double t_e_prefactor = 0.0;
  double t_p_prefactor = 0.0;
};

inline ScalingPrediction hp_scaling(const SystemSpec& spec, double depth = 100.0) {
  spec.validate();
  ScalingPrediction out;
  if (spec.n_b != spec.n_c || spec.j_b != spec.j_c || spec.j_b != spec.j_bc) {
    out.reason = "no asymptotic prediction: requires N_B = N_C and a single coupling J";
    return out;
  }
  const double j = spec.j_b;
  const double dv = spec.delta_v();
  const double nb = static_cast<double>(spec.n_b);
  const double four_jn = 4.0 * j * nb;
  if (j <= 0.0) {
    out.reason = "no asymptotic prediction: requires J > 0";
    return out;
  }
  if (dv > 0.0 && four_jn >= depth * dv) {
    out.valid = true;
    out.e_exponent = 1.0;
    out.p_exponent = 1.5;
    out.t_exponent = -0.5;
    out.e_prefactor = j * nb * spec.v_b / dv;
    out.p_prefactor = 0.5 * power_peak_coefficient() * std::pow(j * nb, 1.5) * spec.v_b /
                      std::sqrt(dv);
    out.t_e_prefactor = M_PI / std::sqrt(four_jn * dv);
    out.t_p_prefactor = power_peak_root() / std::sqrt(four_jn * dv);
    return out;
  }
  if (dv < 0.0 && depth * four_jn <= -dv) {
    out.valid = true;
    out.e_exponent = 2.0;
    out.p_exponent = 2.0;
    out.t_exponent = 0.0;
    out.e_prefactor = 4.0 * j * j * nb * nb * spec.v_b / (dv * dv);
    out.p_prefactor = power_peak_coefficient() * j * j * nb * nb * spec.v_b / std::abs(dv);
    out.t_e_prefactor = M_PI / std::abs(dv);
    out.t_p_prefactor = power_peak_root() / std::abs(dv);
    return out;
  }
  out.reason = "no asymptotic prediction: not deep enough in either offset regime";
  return out;
}

} // namespace qbatt
