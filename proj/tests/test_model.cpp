#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "qbatt/collective.hpp"
#include "qbatt/config.hpp"
#include "qbatt/model.hpp"
#include "qbatt/random.hpp"
#include "qbatt/sector.hpp"

using namespace qbatt;

TEST_CASE("derived constants of the uniform spec") {
  SystemSpec spec{4, 4, 1.0, 0.5, 1.0, 1.0, 1.0};
  CHECK(spec.delta_v() == 0.5);
  CHECK(spec.k_max() == 4);
  CHECK(spec.omega() == 8.5);
  CHECK(spec.g() == Catch::Approx(4.0).margin(1e-14));

  // For N_B = N_C and one coupling J the identity
  // omega^2 - 4 g^2 = 4 J N_B dV + dV^2 holds; exact here because every
  // quantity is a small dyadic rational.
  const double lhs = spec.omega() * spec.omega() - 4.0 * spec.g() * spec.g();
  const double rhs = 4.0 * 1.0 * 4.0 * 0.5 + 0.25;
  CHECK(lhs == rhs);
}

TEST_CASE("spec validation rejects bad counts") {
  CHECK_THROWS_AS((SystemSpec{0, 3, 1, 0, 1, 1, 1}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((SystemSpec{3, 0, 1, 0, 1, 1, 1}.validate()), std::invalid_argument);
  CHECK_NOTHROW((SystemSpec{1, 1, 1, 0, 0, 0, 1}.validate()));
}

TEST_CASE("uniform coupling table partitions by membership") {
  SystemSpec spec{3, 4, 1.0, -0.5, 0.25, 0.75, 1.5};
  const CouplingTable t = CouplingTable::uniform(spec);
  t.validate();
  REQUIRE(t.n() == 7);
  for (std::int64_t m = 0; m < t.n(); ++m) {
    CHECK(t.v[m] == (m < 3 ? 1.0 : -0.5));
    for (std::int64_t k = 0; k < t.n(); ++k) {
      if (m == k) {
        CHECK(t.coupling(m, k) == 0.0);
        continue;
      }
      const bool bm = m < 3, bk = k < 3;
      const double expect = bm && bk ? 0.25 : (!bm && !bk ? 0.75 : 1.5);
      CHECK(t.coupling(m, k) == expect);
    }
  }
}

TEST_CASE("initial collective state is |k=0>") {
  const CollectiveState s = make_initial_collective(SystemSpec{2, 3, 1, 0, 1, 1, 1});
  REQUIRE(s.amps.size() == 3);  // min(2,3) + 1
  CHECK(s.amps[0] == cplx{1.0, 0.0});
  CHECK(s.amps[1] == cplx{});
  CHECK(s.amps[2] == cplx{});
  CHECK(s.norm2() == 1.0);

  const CollectiveState tiny = make_initial_collective(SystemSpec{1, 1, 1, 0, 0, 0, 1});
  REQUIRE(tiny.amps.size() == 2);
  CHECK(tiny.amps[0] == cplx{1.0, 0.0});
}

TEST_CASE("initial sector state occupies the charger-full configuration") {
  SystemSpec spec{2, 2, 1.0, 0.0, 1.0, 1.0, 1.0};
  const CouplingTable table = CouplingTable::uniform(spec);
  CHECK(initial_sector_config(table) == 0b1100u);
  const SectorSystem sys = build_sector(table, 2);
  const SectorState s = make_initial_sector(sys);
  REQUIRE(s.amps.size() == 6);  // C(4,2)
  CHECK(std::abs(s.amps[sys.basis->index_of(0b1100)] - cplx{1.0, 0.0}) == 0.0);
  CHECK(s.norm2() == 1.0);
  CHECK(__builtin_popcountll(initial_sector_config(table)) == 2);

  SystemSpec odd{3, 1, 1.0, 0.0, 1.0, 1.0, 1.0};
  const SectorSystem sys2 = build_sector(CouplingTable::uniform(odd), 1);
  CHECK(sys2.basis->dim() == 4);  // C(4,1)
}

TEST_CASE("time grids") {
  const TimeGrid uniform{2.0, 5, GridSpacing::uniform};
  const auto ts = uniform.times();
  REQUIRE(ts.size() == 5);
  CHECK(ts.front() == 0.0);
  CHECK(ts.back() == 2.0);
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) CHECK(ts[i] < ts[i + 1]);

  const TimeGrid log{10.0, 9, GridSpacing::logarithmic};
  const auto ls = log.times();
  REQUIRE(ls.size() == 9);
  CHECK(ls.front() == Catch::Approx(1e-3));
  CHECK(ls.back() == 10.0);
  for (std::size_t i = 0; i + 1 < ls.size(); ++i) CHECK(ls[i] < ls[i + 1]);

  CHECK_THROWS_AS((TimeGrid{-1.0, 5, GridSpacing::uniform}.times()), std::invalid_argument);
}

TEST_CASE("config parsing") {
  const std::string text =
      "# run setup\n"
      "n_b = 4\n"
      "n_c = 6   # charger\n"
      "v_c = -0.25\n"
      "t_max = 3.5\n"
      "seed = 99\n";
  const RunConfig cfg = parse_config_string(text);
  CHECK(cfg.n_b == 4);
  CHECK(cfg.n_c == 6);
  CHECK(cfg.v_b == 1.0);
  CHECK(cfg.v_c == -0.25);
  CHECK(cfg.t_max == 3.5);
  CHECK(cfg.seed == 99);
  CHECK(cfg.spec().delta_v() == 1.25);

  CHECK_THROWS_AS(parse_config_string("n_b = 2\nn_c = 2\nbogus = 1\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_config_string("n_b = 2\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_string("n_b = 2\nn_c = x\n"), std::invalid_argument);

  RunConfig cfg2 = parse_config_string("n_b = 2\nn_c = 2\n");
  cfg2.set("j_c", "0");
  CHECK(cfg2.j_c == 0.0);
  CHECK_THROWS_AS(cfg2.set("nope", "1"), std::invalid_argument);
}

TEST_CASE("noise draws are pair-keyed and vanish at zero amplitude") {
  SystemSpec spec{3, 3, 1.0, 1.0, 1.0, 1.0, 1.0};
  const CouplingTable uniform = CouplingTable::uniform(spec);
  const CouplingTable zero = make_noisy_table(spec, 0.0, 1234);
  CHECK(zero.j == uniform.j);  // bitwise

  const CouplingTable a = make_noisy_table(spec, 0.2, 42);
  const CouplingTable b = make_noisy_table(spec, 0.2, 42);
  const CouplingTable c = make_noisy_table(spec, 0.2, 43);
  CHECK(a.j == b.j);
  CHECK(a.j != c.j);
  CHECK(a.v == uniform.v);  // onsite potentials untouched
  for (std::int64_t m = 0; m < a.n(); ++m)
    for (std::int64_t k = m + 1; k < a.n(); ++k) {
      CHECK(std::abs(a.coupling(m, k) - 1.0) <= 0.2);
      CHECK(a.coupling(m, k) == a.coupling(k, m));
    }
}

TEST_CASE("seed mixing separates streams") {
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(mix64(0) != 0);
  const double u = unit_double(mix64(7));
  CHECK(u >= 0.0);
  CHECK(u < 1.0);
}
