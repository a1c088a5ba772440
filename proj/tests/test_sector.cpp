#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "qbatt/analytic.hpp"
#include "qbatt/basis.hpp"
#include "qbatt/collective.hpp"
#include "qbatt/model.hpp"
#include "qbatt/random.hpp"
#include "qbatt/sector.hpp"

using namespace qbatt;

namespace {

Eigen::MatrixXcd dense_of(const SparseHamiltonian& h) {
  const auto d = static_cast<Eigen::Index>(h.dim());
  Eigen::MatrixXcd m(d, d);
  std::vector<cplx> e(static_cast<std::size_t>(d)), col(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    std::fill(e.begin(), e.end(), cplx{});
    e[static_cast<std::size_t>(j)] = 1.0;
    h.apply(e.data(), col.data());
    for (Eigen::Index i = 0; i < d; ++i) m(i, j) = col[static_cast<std::size_t>(i)];
  }
  return m;
}

} // namespace

TEST_CASE("basis enumeration and ranking") {
  const SectorBasis b = SectorBasis::build(4, 2);
  REQUIRE(b.dim() == 6);
  const std::vector<std::uint64_t> expect{0b0011, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100};
  CHECK(b.configs == expect);
  for (std::int64_t i = 0; i < b.dim(); ++i) CHECK(b.index_of(b.config_at(i)) == i);

  // Rank/unrank round trip without the lookup table (wide registers).
  const SectorBasis wide = SectorBasis::build(30, 4);
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    const std::int64_t i =
        static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(wide.dim()));
    CHECK(wide.index_of(wide.config_at(i)) == i);
  }
  CHECK(wide.rank_table.empty());
  CHECK(wide.dim() == static_cast<std::int64_t>(binomial(30, 4)));

  CHECK(binomial(4, 2) == 6);
  CHECK(binomial(12, 0) == 1);
  CHECK(binomial(0, 0) == 1);
  CHECK(binomial(5, 7) == 0);
}

TEST_CASE("two-site single-excitation sector is the pair matrix") {
  SystemSpec spec{1, 1, 1.0, -0.4, 0.0, 0.0, 0.9};
  const SectorSystem sys = build_sector(CouplingTable::uniform(spec), 1);
  REQUIRE(sys.basis->dim() == 2);
  const Eigen::MatrixXcd m = dense_of(sys.h);
  CHECK(m(0, 0).real() == Catch::Approx(1.0).margin(1e-15));   // battery bit set
  CHECK(m(1, 1).real() == Catch::Approx(-0.4).margin(1e-15));  // charger bit set
  CHECK(m(0, 1).real() == Catch::Approx(0.9).margin(1e-15));
  CHECK(m(1, 0).real() == Catch::Approx(0.9).margin(1e-15));
}

TEST_CASE("hermiticity on random vectors") {
  SystemSpec spec{4, 4, 1.0, 0.3, 1.0, 1.0, 1.0};
  const CouplingTable noisy = make_noisy_table(spec, 0.4, 77);
  const SectorSystem sys = build_sector(noisy, 4);
  const std::size_t d = static_cast<std::size_t>(sys.basis->dim());
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss;
  std::vector<cplx> x(d), y(d), hx(d), hy(d);
  for (int rep = 0; rep < 100; ++rep) {
    for (auto& v : x) v = cplx{gauss(rng), gauss(rng)};
    for (auto& v : y) v = cplx{gauss(rng), gauss(rng)};
    sys.h.apply(x.data(), hx.data());
    sys.h.apply(y.data(), hy.data());
    cplx xy{}, yx{};
    double scale = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      xy += std::conj(x[i]) * hy[i];
      yx += std::conj(y[i]) * hx[i];
      scale += std::abs(x[i]) * std::abs(hx[i]);
    }
    CHECK(std::abs(xy - std::conj(yx)) < 1e-12 * std::max(scale, 1.0));
  }
}

TEST_CASE("matrix-free apply equals the adjacency apply") {
  SystemSpec spec{3, 4, 1.0, -0.2, 0.6, 1.1, 0.8};
  const CouplingTable table = make_noisy_table(spec, 0.3, 5);
  const SectorSystem a = build_sector(table, 4);
  SectorBuildOptions mf;
  mf.force_matrix_free = true;
  const SectorSystem b = build_sector(table, 4, mf);
  REQUIRE(!a.h.matrix_free);
  REQUIRE(b.h.matrix_free);
  const std::size_t d = static_cast<std::size_t>(a.basis->dim());
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss;
  std::vector<cplx> x(d), ya(d), yb(d);
  for (auto& v : x) v = cplx{gauss(rng), gauss(rng)};
  a.h.apply(x.data(), ya.data());
  b.h.apply(x.data(), yb.data());
  for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(ya[i] - yb[i]) < 1e-14);
}

TEST_CASE("uniform sector spectrum contains the ladder spectrum") {
  SystemSpec spec{3, 3, 1.0, 0.2, 1.0, 1.0, 1.0};
  const SectorSystem sys = build_sector(CouplingTable::uniform(spec), 3);
  REQUIRE(sys.basis->dim() == 20);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(dense_of(sys.h));
  const CollectiveHamiltonian ch = build_hamiltonian(spec);
  const SpectralDecomposition cd = eigendecompose(SymTridiagonal{ch.diag, ch.offdiag});
  for (double ev : cd.eigenvalues) {
    double best = 1e9;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
      best = std::min(best, std::abs(es.eigenvalues()[i] - ev));
    CHECK(best < 1e-10);
  }
}

TEST_CASE("sector memory cap rejects oversized bases") {
  SystemSpec spec{16, 16, 1.0, 0.0, 1.0, 1.0, 1.0};
  SectorBuildOptions opts;
  opts.memory_cap_bytes = 1024;
  CHECK_THROWS_AS(build_sector(CouplingTable::uniform(spec), 16, opts),
                  std::runtime_error);
}

TEST_CASE("pair sector dynamics matches the closed form") {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> jd(0.3, 2.0), dvd(-3.0, 3.0);
  for (int rep = 0; rep < 5; ++rep) {
    const double j = jd(rng), dv = dvd(rng);
    PairSpec pair{j, 1.0, 1.0 - dv, 1};
    SystemSpec spec{1, 1, pair.v_b, pair.v_c, 0.0, 0.0, j};
    const SectorSystem sys = build_sector(CouplingTable::uniform(spec), 1);
    const TimeGrid grid{7.0, 141, GridSpacing::uniform};
    const DynamicsResult r = run_sector_dynamics(sys, grid);
    for (std::size_t i = 0; i < r.size(); ++i) {
      const ParallelPoint pt = parallel_dynamics(pair, r.t[i]);
      CHECK(std::abs(r.e_b[i] - pt.e) < 1e-9);
      CHECK(std::abs(r.s_vn[i] - pt.s) < 1e-9);
    }
  }
}

TEST_CASE("full swap at half period for a balanced pair") {
  SystemSpec spec{1, 1, 1.0, 1.0, 0.0, 0.0, 1.2};
  const SectorSystem sys = build_sector(CouplingTable::uniform(spec), 1);
  const double omega = 2.0 * 1.2;
  const std::vector<double> ts{M_PI / omega};
  const DynamicsResult r = run_sector_dynamics(
      sys, std::span<const double>(ts.data(), ts.size()), {});
  CHECK(r.e_b[0] == Catch::Approx(1.0).margin(1e-10));
  CHECK(r.s_vn[0] == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("lanczos propagation at t = 0 is the identity") {
  SystemSpec spec{2, 3, 1.0, 0.1, 0.5, 0.8, 1.0};
  const SectorSystem sys = build_sector(CouplingTable::uniform(spec), 3);
  const SectorState s0 = make_initial_sector(sys);
  const auto states = lanczos_propagate(s0, sys.h, TimeGrid{1e-300, 1, GridSpacing::uniform});
  REQUIRE(states.size() == 1);
  double dev = 0.0;
  for (std::size_t i = 0; i < s0.amps.size(); ++i)
    dev = std::max(dev, std::abs(states[0].amps[i] - s0.amps[i]));
  CHECK(dev < 1e-12);
}

TEST_CASE("cross-engine agreement on a six-plus-six system") {
  const SystemSpec spec{6, 6, 1.0, 0.2, 1.0, 1.0, 1.0};
  const TimeGrid grid{10.0, 51, GridSpacing::uniform};
  const DynamicsResult coll = run_dynamics(spec, grid);
  const SectorSystem sys = build_sector(CouplingTable::uniform(spec), 6);
  SectorRunOptions opts;
  opts.krylov.step_tol = 1e-12;
  const DynamicsResult full = run_sector_dynamics(sys, grid, opts);
  for (std::size_t i = 0; i < coll.size(); ++i) {
    CHECK(std::abs(coll.e_b[i] - full.e_b[i]) < 1e-8);
    CHECK(std::abs(coll.eta_b[i] - full.eta_b[i]) < 1e-8);
    CHECK(std::abs(coll.s_vn[i] - full.s_vn[i]) < 1e-8);
  }
  CHECK(full.diagnostics.max_excitation_error < 1e-10);
  CHECK(full.diagnostics.max_norm_error < 1e-10);
}

TEST_CASE("schmidt weights sum to one along a noisy run") {
  SystemSpec spec{4, 4, 1.0, 1.0, 1.0, 1.0, 1.0};
  const CouplingTable noisy = make_noisy_table(spec, 0.3, 21);
  const SectorSystem sys = build_sector(noisy, 4);
  const TimeGrid grid{5.0, 51, GridSpacing::uniform};
  const DynamicsResult r = run_sector_dynamics(sys, grid);
  // The accumulator folds |sum(lambda) - 1| into max_norm_error.
  CHECK(r.diagnostics.max_norm_error < 1e-10);
  CHECK(r.diagnostics.entropy_bound_excess < 1e-12);
  CHECK(r.e_b[0] == 0.0);
  CHECK(r.s_vn[0] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("noise continuity toward the uniform limit") {
  // Ensemble-mean E max approaches the uniform value as the amplitude
  // shrinks, monotonically over one decade per step.
  const SystemSpec spec{6, 6, 1.0, 1.0, 1.0, 1.0, 1.0};
  const TimeGrid grid{3.0, 121, GridSpacing::uniform};
  const auto e_max_of = [&](const CouplingTable& table) {
    const SectorSystem sys = build_sector(table, 6);
    SectorRunOptions opts;
    opts.with_entropy = false;
    const DynamicsResult r = run_sector_dynamics(sys, grid, opts);
    double best = 0.0;
    for (double e : r.e_b) best = std::max(best, e);
    return best;
  };
  const double uniform = e_max_of(CouplingTable::uniform(spec));
  double prev_dev = 1e300;
  for (double dj : {0.1, 0.01, 0.001}) {
    double mean = 0.0;
    const int reps = 6;
    for (int r = 0; r < reps; ++r)
      mean += e_max_of(make_noisy_table(spec, dj, derive_seed(1234, r, 0)));
    mean /= reps;
    const double dev = std::abs(mean - uniform);
    CHECK(dev < prev_dev);
    prev_dev = dev;
  }
}
