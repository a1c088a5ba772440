#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "qbatt/analytic.hpp"

using namespace qbatt;

TEST_CASE("power-peak constants") {
  const double x = power_peak_root();
  const double c = power_peak_coefficient();
  // Root of tan(x/2) = x computed independently (bisection in Python/mpmath).
  CHECK(x == Catch::Approx(2.3311223704144224).margin(1e-12));
  CHECK(c == Catch::Approx(1.4492227075534163).margin(1e-12));
  // At the root, 2 (1 - cos x*) / x* equals 2 sin x*.
  CHECK(c == Catch::Approx(2.0 * std::sin(x)).margin(1e-12));
  // Two-decimal display values.
  CHECK(std::round(x * 100.0) / 100.0 == 2.33);
  CHECK(std::abs(c - 1.44) < 0.01);
  CHECK(M_PI / x == Catch::Approx(1.3476738473541767).margin(1e-12));
}

TEST_CASE("parallel dynamics limits") {
  const double j = 0.9, vb = 1.0;
  PairSpec balanced{j, vb, vb, 5};  // dV = 0
  const double omega = balanced.rabi();
  // Full charge at t = pi/Omega, and a pure product state again (S = 0).
  const ParallelPoint full = parallel_dynamics(balanced, M_PI / omega);
  CHECK(full.e == Catch::Approx(5.0 * vb).epsilon(1e-12));
  CHECK(full.s == Catch::Approx(0.0).margin(1e-12));
  // Whole period: empty battery, zero entropy.
  const ParallelPoint period = parallel_dynamics(balanced, 2 * M_PI / omega);
  CHECK(period.e == Catch::Approx(0.0).margin(1e-10));
  CHECK(period.s == Catch::Approx(0.0).margin(1e-10));

  PairSpec detuned{j, vb, vb - 1.7, 5};
  const double om2 = detuned.rabi();
  const ParallelPoint half = parallel_dynamics(detuned, M_PI / om2);
  CHECK(half.e == Catch::Approx(4 * 5 * vb * j * j / (om2 * om2)).epsilon(1e-12));
  CHECK(half.e < 5.0 * vb);
}

TEST_CASE("parallel dynamics pinned values") {
  // Frozen from an independent evaluation of the closed forms
  // (J = 0.7, dV = 1.3, V_b = 1, one pair, t = 2.1).
  PairSpec pair{0.7, 1.0, -0.3, 1};
  CHECK(pair.rabi() == Catch::Approx(1.91049731745428).margin(1e-13));
  const ParallelPoint pt = parallel_dynamics(pair, 2.1);
  CHECK(pt.e == Catch::Approx(0.4415319451005076).margin(1e-12));
  CHECK(pt.s == Catch::Approx(0.6862944861715552).margin(1e-12));
}

TEST_CASE("pair excitation weights are a probability split") {
  PairSpec pair{1.3, 1.0, 0.4, 1};
  const double om = pair.rabi();
  for (double t : {0.0, 0.3, 1.1, 2.9, 7.7}) {
    const double sh = std::sin(0.5 * om * t), ch = std::cos(0.5 * om * t);
    const double b = 4 * pair.j_pair * pair.j_pair / (om * om) * sh * sh;
    const double a = ch * ch + pair.delta_v() * pair.delta_v() / (om * om) * sh * sh;
    CHECK(a + b == Catch::Approx(1.0).margin(1e-14));
  }
}

TEST_CASE("parallel maxima against a dense scan") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> jd(0.3, 2.0), dvd(-3.0, 3.0);
  for (int rep = 0; rep < 5; ++rep) {
    PairSpec pair{jd(rng), 1.0, 1.0 - dvd(rng), 3};
    const auto [em, pm] = parallel_maxima(pair);
    double be = 0.0, bp = 0.0;
    const double horizon = 2.2 * em.time;
    for (int i = 1; i <= 400000; ++i) {
      const double t = horizon * i / 400000.0;
      const ParallelPoint pt = parallel_dynamics(pair, t);
      be = std::max(be, pt.e);
      bp = std::max(bp, pt.p);
    }
    CHECK(be == Catch::Approx(em.value).epsilon(1e-8));
    CHECK(bp == Catch::Approx(pm.value).epsilon(1e-8));
    CHECK(pm.time < em.time);  // power peaks first
  }
  CHECK_THROWS_AS(parallel_maxima(PairSpec{0.0, 1.0, 1.0, 2}), std::invalid_argument);
}

TEST_CASE("quadratic model branches") {
  // Critical: E = V g^2 t^2 exactly.
  const HpParams crit{2.0, 1.0, 1.5, 0.0};
  REQUIRE(crit.regime() == HpRegime::critical);
  for (double t : {0.1, 0.7, 2.0}) {
    CHECK(hp_dynamics(crit, t).e == Catch::Approx(1.5 * t * t).epsilon(1e-12));
    CHECK(hp_dynamics(crit, t).p == Catch::Approx(1.5 * t).epsilon(1e-12));
  }

  const HpParams osc{3.0, 1.0, 1.0, 0.0};
  REQUIRE(osc.regime() == HpRegime::oscillatory);
  const HpParams hyp{1.0, 1.0, 1.0, 0.0};
  REQUIRE(hyp.regime() == HpRegime::hyperbolic);

  // Shared leading order V g^2 t^2 as t -> 0.
  for (const HpParams& hp : {osc, crit, hyp}) {
    const double t = 1e-4;
    CHECK(hp_dynamics(hp, t).e ==
          Catch::Approx(hp.v_b * hp.g * hp.g * t * t).epsilon(1e-6));
  }
}

TEST_CASE("branch continuity at the critical boundary") {
  const double g = 1.3, v = 0.9, t = 3.0 / g;
  const double crit_e = hp_dynamics(HpParams{2 * g, g, v, 0.0}, t).e;
  for (double sign : {+1.0, -1.0}) {
    const double om2 = 4 * g * g * (1.0 + sign * 1e-6);
    const HpParams hp{std::sqrt(om2), g, v, 0.0};
    REQUIRE(hp.regime() != HpRegime::critical);
    CHECK(std::abs(hp_dynamics(hp, t).e - crit_e) / crit_e < 1e-4);
  }
}

TEST_CASE("series expansion through degree six") {
  // Every branch shares 2 g^2 V [t^2/2 - d t^4/4! + d^2 t^6/6!], d = om^2-4g^2.
  for (double om : {3.0, 2.0, 1.0}) {
    const HpParams hp{om, 1.0, 1.0, 0.0};
    const double d = hp.discriminant();
    const double g2v = hp.g * hp.g * hp.v_b;
    for (double t : {0.05, 0.1, 0.2}) {
      const double poly =
          2 * g2v *
          (t * t / 2 - d * std::pow(t, 4) / 24.0 + d * d * std::pow(t, 6) / 720.0);
      const double next = 2 * g2v * std::abs(d * d * d) * std::pow(t, 8) / 40320.0;
      CHECK(std::abs(hp_dynamics(hp, t).e - poly) <= 2 * next + 1e-15);
    }
  }
}

TEST_CASE("quadratic-model maxima") {
  const HpParams hp{6.0, 1.2, 1.0, 0.0};
  REQUIRE(hp.regime() == HpRegime::oscillatory);
  const auto [em, pm] = hp_maxima(hp);
  // Against a dense scan plus local refinement.
  double be = 0.0, bp = 0.0, bt = 0.0;
  for (int i = 1; i <= 2000000; ++i) {
    const double t = 1.5 * em.time * i / 2000000.0;
    const HpPoint pt = hp_dynamics(hp, t);
    be = std::max(be, pt.e);
    if (pt.p > bp) {
      bp = pt.p;
      bt = t;
    }
  }
  CHECK(be == Catch::Approx(em.value).epsilon(1e-10));
  CHECK(bp == Catch::Approx(pm.value).epsilon(1e-10));
  CHECK(bt == Catch::Approx(pm.time).epsilon(1e-5));
  // The closed form is a genuine local maximum.
  const double eps = 1e-6 * pm.time;
  CHECK(hp_dynamics(hp, pm.time - eps).p < pm.value);
  CHECK(hp_dynamics(hp, pm.time + eps).p < pm.value);
  // Parameter-free time ratio.
  CHECK(em.time / pm.time == Catch::Approx(M_PI / power_peak_root()).epsilon(1e-14));

  CHECK_THROWS_AS(hp_maxima(HpParams{1.0, 1.0, 1.0, 0.0}), std::domain_error);
}

TEST_CASE("quadratic model approaches the pair form at large detuning") {
  // At N_B = N_C = 1 with intra-part couplings off, the quadratic model
  // becomes accurate as |dV| >> J; its maxima then approach the pair values.
  const double j = 0.05, vb = 1.0;
  for (double dv : {5.0, 20.0, 80.0}) {
    const SystemSpec spec{1, 1, vb, vb - dv, 0, 0, j};
    const auto [ehp, php] = hp_maxima(HpParams::from_spec(spec));
    const auto [epar, ppar] = parallel_maxima(PairSpec{j, vb, vb - dv, 1});
    CHECK(std::abs(ehp.value - epar.value) / epar.value < 10.0 * (j * j) / (dv * dv) + 1e-12);
  }
}

TEST_CASE("asymptotic scaling predictions") {
  // Positive offset, deep: exponents (1, 3/2, -1/2) and known prefactors.
  const SystemSpec pos{100000, 100000, 1.0, 1.0 - 0.1, 1.0, 1.0, 1.0};
  const ScalingPrediction sp = hp_scaling(pos);
  REQUIRE(sp.valid);
  CHECK(sp.e_exponent == 1.0);
  CHECK(sp.p_exponent == 1.5);
  CHECK(sp.t_exponent == -0.5);
  CHECK(sp.e_prefactor == Catch::Approx(1.0 * 100000 * 1.0 / 0.1).epsilon(1e-12));
  CHECK(sp.p_prefactor ==
        Catch::Approx(0.5 * power_peak_coefficient() * std::pow(100000.0, 1.5) /
                      std::sqrt(0.1))
            .epsilon(1e-12));

  // Negative offset, deep: exponents (2, 2, 0).
  const SystemSpec neg{100, 100, 1.0, 1.0 + 1e8, 1.0, 1.0, 1.0};
  const ScalingPrediction sn = hp_scaling(neg);
  REQUIRE(sn.valid);
  CHECK(sn.e_exponent == 2.0);
  CHECK(sn.p_exponent == 2.0);
  CHECK(sn.t_exponent == 0.0);
  CHECK(sn.e_prefactor == Catch::Approx(4.0 * 1e4 / 1e16).epsilon(1e-10));
  CHECK(sn.t_e_prefactor == Catch::Approx(M_PI / 1e8).epsilon(1e-12));

  // Outside both regimes (4 J N_B comparable to dV): no prediction.
  const ScalingPrediction bad = hp_scaling(SystemSpec{100, 100, 1.0, -7.0, 1.0, 1.0, 1.0});
  CHECK(!bad.valid);
  CHECK(!bad.reason.empty());
  const ScalingPrediction mism =
      hp_scaling(SystemSpec{100, 200, 1.0, 0.9, 1.0, 1.0, 1.0});
  CHECK(!mism.valid);
}
