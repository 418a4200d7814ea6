#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "ionguide/design_solver.hpp"
#include "ionguide/ion_chain.hpp"
#include "oracles.hpp"

using namespace ionguide;

namespace {

DesignParameters reference() {
  DesignParameters p;
  p.wavelength = 650e-9;
  const double c = 1.0 / std::acos(-1.0);
  p.spot_chip = 2e-6;
  p.spacing_chip = 10e-6;
  p.magnification = 0.2;
  p.spot_qubit = p.spot_chip * p.magnification;
  p.spacing_qubit = p.spacing_chip * p.magnification;
  p.na_chip = c * p.wavelength / p.spot_chip;
  p.na_qubit = c * p.wavelength / p.spot_qubit;
  return p;
}

std::vector<std::array<int, 3>> all_triples() {
  std::vector<std::array<int, 3>> out;
  for (int a = 0; a < 7; ++a)
    for (int b = a + 1; b < 7; ++b)
      for (int c = b + 1; c < 7; ++c) out.push_back({a, b, c});
  return out;
}

}  // namespace

TEST_SUITE("design_solver") {

TEST_CASE("reference design satisfies the constraints") {
  CHECK(reference().constraint_residual() < 1e-15);
  CHECK(reference().consistent());
}

TEST_CASE("35 known sets: rank agrees with the exponent-matrix oracle") {
  const auto triples = all_triples();
  REQUIRE(triples.size() == 35);
  int solvable = 0;
  for (const auto& t : triples) {
    const std::array<DesignParam, 3> known{kAllDesignParams[t[0]], kAllDesignParams[t[1]], kAllDesignParams[t[2]]};
    const int r = oracle::unknown_rank(t);
    CHECK(unknown_rank(known) == r);
    CHECK(is_independent(known) == (r == 4));
    solvable += r == 4;
  }
  CHECK(solvable > 0);
  CHECK(solvable < 35);
}

TEST_CASE("solvable sets round-trip, dependent sets are classified") {
  const auto ref = reference();
  for (const auto& t : all_triples()) {
    KnownSet known;
    for (int i : t) known.emplace_back(kAllDesignParams[i], ref.get(kAllDesignParams[i]));
    CAPTURE(to_string(known[0].first));
    CAPTURE(to_string(known[1].first));
    CAPTURE(to_string(known[2].first));
    if (oracle::unknown_rank(t) == 4) {
      const auto sol = solve_design(known, ref.wavelength);
      for (auto p : kAllDesignParams) CHECK(std::abs(sol.get(p) / ref.get(p) - 1.0) < 1e-9);
    } else {
      CHECK_ERROR(solve_design(known, ref.wavelength), ErrorKind::Validation, "underdetermined");
      // Distinct factors so no integer relation among the knowns survives.
      known[0].second *= 1.01;
      known[1].second *= 1.03;
      known[2].second *= 1.07;
      CHECK_ERROR(solve_design(known, ref.wavelength), ErrorKind::Validation, "inconsistent");
    }
  }
}

TEST_CASE("other NA-spot constant") {
  DesignSolverOptions opts;
  opts.na_spot_constant = 0.5;
  const auto sol = solve_design(
      {{DesignParam::SpotChip, 2e-6}, {DesignParam::Magnification, 0.5}, {DesignParam::SpacingChip, 8e-6}}, 600e-9,
      opts);
  CHECK(sol.na_chip == doctest::Approx(0.5 * 600e-9 / 2e-6));
  CHECK(sol.na_qubit == doctest::Approx(0.5 * 600e-9 / 1e-6));
  CHECK(sol.spacing_qubit == doctest::Approx(4e-6));
}

TEST_CASE("range checks") {
  CHECK_ERROR(solve_design({{DesignParam::SpotChip, -1e-6}, {DesignParam::Magnification, 0.2},
                            {DesignParam::SpacingChip, 8e-6}},
                           650e-9),
              ErrorKind::Validation, "out_of_range");
  // A tiny qubit spot needs NA above 1.
  CHECK_ERROR(solve_design({{DesignParam::SpotChip, 2e-6}, {DesignParam::Magnification, 0.01},
                            {DesignParam::SpacingChip, 8e-6}},
                           650e-9),
              ErrorKind::Validation, "out_of_range");
  CHECK_ERROR(solve_design({{DesignParam::SpotChip, 2e-6}, {DesignParam::SpotChip, 2e-6},
                            {DesignParam::SpacingChip, 8e-6}},
                           650e-9),
              ErrorKind::Validation, "invalid_known_set");
  CHECK_ERROR(solve_design({{DesignParam::SpotChip, 2e-6}}, 650e-9), ErrorKind::Validation, "invalid_known_set");
}

TEST_CASE("names and json") {
  for (auto p : kAllDesignParams) CHECK(design_param_from_string(to_string(p)) == p);
  CHECK_ERROR(design_param_from_string("zoom"), ErrorKind::Validation, "unknown_parameter");
  const auto ref = reference();
  const auto back = design_from_json(design_to_json(ref));
  for (auto p : kAllDesignParams) CHECK(back.get(p) == ref.get(p));
  CHECK(back.wavelength == ref.wavelength);
  CHECK(design_table(ref).find("na_q") != std::string::npos);
}

TEST_CASE("pitch ratio against the ion chain") {
  const auto chain = physical_positions(IonChainSpec{8, 138 * 1.66053906660e-27, 34e3});
  auto p = reference();
  p.spacing_chip = 6.0 * chain.min_gap();
  auto check = check_pitch_ratio(p, chain);
  CHECK(check.ratio == doctest::Approx(6.0));
  CHECK(check.in_band);
  p.spacing_chip = 11.0 * chain.min_gap();
  CHECK_FALSE(check_pitch_ratio(p, chain).in_band);
  p.spacing_chip = 4.0 * chain.min_gap();
  CHECK_FALSE(check_pitch_ratio(p, chain).in_band);
}

}
