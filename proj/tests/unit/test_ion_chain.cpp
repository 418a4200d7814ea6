#include <cmath>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"
#include "ionguide/ion_chain.hpp"
#include "oracles.hpp"

using namespace ionguide;

TEST_SUITE("ion_chain") {

TEST_CASE("two ions: closed form") {
  const auto u = equilibrium_positions(2);
  const double a = std::cbrt(0.25);
  CHECK(u[0] == doctest::Approx(-a).epsilon(1e-12));
  CHECK(u[1] == doctest::Approx(a).epsilon(1e-12));
}

TEST_CASE("single ion sits at the origin") {
  CHECK(equilibrium_positions(1) == std::vector<double>{0.0});
}

TEST_CASE("matches the relaxation oracle for N = 2..20") {
  for (std::size_t n = 2; n <= 20; ++n) {
    const auto u = equilibrium_positions(n);
    const auto ref = oracle::ion_chain_relaxation(n);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(u[i] - ref[i]));
    CHECK_MESSAGE(err < 1e-9, "n=" << n);
    CHECK(max_force_residual(u) < 1e-10);
  }
}

TEST_CASE("ordered, mirror symmetric, inner gaps smallest") {
  const auto u = equilibrium_positions(9);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(u[i] == doctest::Approx(-u[8 - i]).epsilon(1e-12));
    if (i) CHECK(u[i] > u[i - 1]);
  }
  CHECK(u[4] == doctest::Approx(0.0));
  CHECK(u[5] - u[4] < u[8] - u[7]);
}

TEST_CASE("equilibrium is a potential minimum") {
  const auto u = equilibrium_positions(6);
  const double v0 = chain_potential(u);
  for (std::size_t i = 0; i < u.size(); ++i)
    for (double d : {-1e-4, 1e-4}) {
      auto p = u;
      p[i] += d;
      CHECK(chain_potential(p) > v0);
    }
}

TEST_CASE("length scale and physical positions") {
  const IonChainSpec spec{8, 138 * 1.66053906660e-27, 34e3};
  const PhysicalConstants c;
  const double omega = 2 * std::numbers::pi * spec.axial_frequency;
  const double l = std::cbrt(spec.charge * spec.charge /
                             (4 * std::numbers::pi * c.vacuum_permittivity * spec.mass * omega * omega));
  CHECK(length_scale(spec) == doctest::Approx(l).epsilon(1e-12));
  const auto chain = physical_positions(spec);
  REQUIRE(chain.positions.size() == 8);
  for (std::size_t i = 0; i < 8; ++i)
    CHECK(chain.positions[i] == doctest::Approx(l * chain.dimensionless_positions[i]).epsilon(1e-12));
  CHECK(chain.min_gap() == doctest::Approx(chain.positions[4] - chain.positions[3]));
  CHECK(chain.length_scale == doctest::Approx(28.05e-6).epsilon(1e-3));
}

TEST_CASE("heavier ions or stiffer traps shrink the chain") {
  const IonChainSpec a{5, 40 * 1.66053906660e-27, 1e6};
  IonChainSpec b = a;
  b.axial_frequency = 2e6;
  CHECK(length_scale(b) == doctest::Approx(length_scale(a) * std::cbrt(0.25)).epsilon(1e-12));
  b = a;
  b.mass *= 8;
  CHECK(length_scale(b) == doctest::Approx(length_scale(a) / 2).epsilon(1e-12));
}

TEST_CASE("csv") {
  const auto chain = physical_positions(IonChainSpec{3, 138 * 1.66053906660e-27, 34e3});
  const auto csv = chain_csv(chain);
  CHECK(csv.rfind("index,u,x_m\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("validation") {
  CHECK_ERROR(physical_positions(IonChainSpec{0, 1e-25, 1e6}), ErrorKind::Validation, "invalid_chain");
  CHECK_ERROR(physical_positions(IonChainSpec{51, 1e-25, 1e6}), ErrorKind::Validation, "invalid_chain");
  CHECK_ERROR(physical_positions(IonChainSpec{3, -1.0, 1e6}), ErrorKind::Validation, "invalid_chain");
  CHECK_ERROR(physical_positions(IonChainSpec{3, 1e-25, 0.0}), ErrorKind::Validation, "invalid_chain");
}

}
