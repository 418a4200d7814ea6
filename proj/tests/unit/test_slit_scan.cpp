#include <cmath>
#include <numbers>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "ionguide/slit_scan.hpp"

using namespace ionguide;

namespace {

// Two Gaussians of 1/e^2 radius w at a and b on a uniform grid, plus a pedestal.
Profile1D two_peaks(double lo, double hi, double h, double a, double b, double w, double pedestal) {
  Profile1D p;
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / h)) + 1;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = lo + static_cast<double>(k) * h;
    p.positions.push_back(x);
    p.values.push_back(std::exp(-2 * (x - a) * (x - a) / (w * w)) + std::exp(-2 * (x - b) * (x - b) / (w * w)) +
                       pedestal);
  }
  return p;
}

// Top-hat average of exp(-2 x^2 / w^2) over [p - s/2, p + s/2].
double gaussian_slit(double p, double s, double w) {
  const double c = std::sqrt(2.0) / w;
  return std::sqrt(std::numbers::pi / 2) * w / (2 * s) * (std::erf(c * (p + s / 2)) - std::erf(c * (p - s / 2)));
}

ScanTrace as_trace(const Profile1D& p, double slit, double step) {
  ScanTrace t;
  t.positions = p.positions;
  t.values = p.values;
  t.slit_width = slit;
  t.step = step;
  return t;
}

double pipeline_db(const std::vector<std::pair<double, double>>& segments, const std::vector<double>& gains) {
  const auto truth = two_peaks(-150e-6, 450e-6, 0.25e-6, 0.0, 300e-6, 12e-6, 3e-5);
  std::vector<Profile1D> scans;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    auto t = simulate_scan(truth, 5e-6, 1e-6, segments[s].first, segments[s].second);
    for (auto& v : t.values) v *= gains[s];
    scans.push_back(t.profile());
  }
  const auto st = stitch_scans(scans, 40e-6);
  const auto d = deconvolve(as_trace(st.composite, 5e-6, 1e-6));
  ExtractOptions opts;
  opts.n_points = 200;
  return extract_crosstalk(d.profile, 0.0, 300e-6, opts).value_db;
}

}  // namespace

TEST_SUITE("slit_scan") {

TEST_CASE("top-hat kernel") {
  for (double slit : {5e-6, 4e-6, 2.5e-6, 1e-6}) {
    const auto k = tophat_kernel(slit, 1e-6);
    CHECK(k.size() % 2 == 1);
    CHECK(std::accumulate(k.begin(), k.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    for (std::size_t i = 0; i < k.size(); ++i) CHECK(k[i] == doctest::Approx(k[k.size() - 1 - i]));
  }
  const auto k5 = tophat_kernel(5e-6, 1e-6);
  CHECK(k5.size() == 5);
  CHECK(k5[0] == doctest::Approx(0.2));
  const auto k4 = tophat_kernel(4e-6, 1e-6);
  CHECK(k4.size() == 5);
  CHECK(k4[0] == doctest::Approx(0.125));
}

TEST_CASE("simulate matches the analytic slit average") {
  const double w = 8e-6;
  const auto p = two_peaks(-60e-6, 60e-6, 0.05e-6, 0.0, 1.0, w, 0.0);  // second peak far away
  const auto t = simulate_scan(p, 5e-6, 1e-6, -40e-6, 40e-6);
  CHECK(t.positions.size() == 81);
  double err = 0.0;
  for (std::size_t k = 0; k < t.values.size(); ++k)
    err = std::max(err, std::abs(t.values[k] - gaussian_slit(t.positions[k], 5e-6, w)));
  CHECK(err < 3e-5);  // linear interpolation of the profile
}

TEST_CASE("simulate preserves the integral and a constant") {
  const auto p = two_peaks(-100e-6, 100e-6, 0.25e-6, -20e-6, 20e-6, 6e-6, 0.0);
  const auto t = simulate_scan(p, 5e-6, 0.25e-6);
  CHECK(t.profile().integral() == doctest::Approx(p.integral()).epsilon(1e-6));
  Profile1D flat{p.positions, std::vector<double>(p.positions.size(), 3.0)};
  const auto tf = simulate_scan(flat, 5e-6, 1e-6, -90e-6, 90e-6);
  for (double v : tf.values) CHECK(v == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("simulate is linear in the profile") {
  auto a = two_peaks(-50e-6, 50e-6, 0.5e-6, -10e-6, 10e-6, 5e-6, 0.0);
  auto b = two_peaks(-50e-6, 50e-6, 0.5e-6, 0.0, 30e-6, 3e-6, 1e-3);
  Profile1D c = a;
  for (std::size_t k = 0; k < c.values.size(); ++k) c.values[k] = 2 * a.values[k] + 0.5 * b.values[k];
  const auto ta = simulate_scan(a, 4e-6, 1e-6, -40e-6, 40e-6);
  const auto tb = simulate_scan(b, 4e-6, 1e-6, -40e-6, 40e-6);
  const auto tc = simulate_scan(c, 4e-6, 1e-6, -40e-6, 40e-6);
  for (std::size_t k = 0; k < tc.values.size(); ++k)
    CHECK(tc.values[k] == doctest::Approx(2 * ta.values[k] + 0.5 * tb.values[k]).epsilon(1e-12));
}

TEST_CASE("noise is seeded") {
  const auto p = two_peaks(-50e-6, 50e-6, 0.5e-6, -10e-6, 10e-6, 5e-6, 0.0);
  NoiseModel n;
  n.floor_db = -30.0;
  n.proportional_sigma = 0.01;
  n.seed = 42;
  const auto a = simulate_scan(p, 5e-6, 1e-6, n);
  const auto b = simulate_scan(p, 5e-6, 1e-6, n);
  CHECK(a.values == b.values);
  REQUIRE(a.noise_floor);
  n.seed = 43;
  CHECK(simulate_scan(p, 5e-6, 1e-6, n).values != a.values);
}

TEST_CASE("coarse profile is rejected") {
  const auto p = two_peaks(-50e-6, 50e-6, 2e-6, -10e-6, 10e-6, 5e-6, 0.0);
  CHECK_ERROR(simulate_scan(p, 5e-6, 1e-6), ErrorKind::Validation, "sampling_too_coarse");
}

TEST_CASE("stitching undoes exact gain steps") {
  const auto truth = two_peaks(-100e-6, 400e-6, 0.25e-6, 0.0, 200e-6, 10e-6, 1e-4);
  const auto full = simulate_scan(truth, 5e-6, 1e-6, -80e-6, 380e-6);
  // Index ranges into the full trace, so overlaps hold identical samples.
  const std::vector<std::pair<std::size_t, std::size_t>> seg{{0, 120}, {50, 320}, {240, 460}};
  const std::vector<double> gain{1.0, 0.79, 1.7};
  std::vector<Profile1D> scans;
  for (std::size_t s = 0; s < 3; ++s) {
    Profile1D p;
    for (std::size_t k = seg[s].first; k <= seg[s].second; ++k) {
      p.positions.push_back(full.positions[k]);
      p.values.push_back(full.values[k] * gain[s]);
    }
    scans.push_back(p);
  }
  const auto st = stitch_scans(scans, 20e-6);
  REQUIRE(st.composite.values.size() == full.values.size());
  CHECK(st.gains[1] == doctest::Approx(1 / 0.79).epsilon(1e-12));
  CHECK(st.gains[2] == doctest::Approx(1 / 1.7).epsilon(1e-12));
  double err = 0.0;
  for (std::size_t k = 0; k < full.values.size(); ++k)
    err = std::max(err, std::abs(st.composite.values[k] / full.values[k] - 1.0));
  CHECK(err < 1e-12);
}

TEST_CASE("stitching errors") {
  const auto truth = two_peaks(-100e-6, 400e-6, 0.25e-6, 0.0, 200e-6, 10e-6, 1e-4);
  const auto a = simulate_scan(truth, 5e-6, 1e-6, -80e-6, 40e-6).profile();
  const auto b = simulate_scan(truth, 5e-6, 1e-6, -30e-6, 240e-6).profile();
  const auto far = simulate_scan(truth, 5e-6, 1e-6, 100e-6, 240e-6).profile();
  const auto off = simulate_scan(truth, 5e-6, 1e-6, -29.5e-6, 240e-6).profile();
  const auto flat = simulate_scan(truth, 5e-6, 1e-6, 220e-6, 380e-6).profile();
  CHECK_ERROR(stitch_scans({b, a}, 10e-6), ErrorKind::Validation, "unordered_scans");
  CHECK_ERROR(stitch_scans({a, far}, 10e-6), ErrorKind::Validation, "insufficient_overlap");
  CHECK_ERROR(stitch_scans({a, b}, 100e-6), ErrorKind::Validation, "insufficient_overlap");
  CHECK_ERROR(stitch_scans({a, off}, 10e-6), ErrorKind::Validation, "grid_mismatch");
  CHECK_ERROR(stitch_scans({b, flat}, 10e-6), ErrorKind::Validation, "no_peak_in_overlap");
}

TEST_CASE("deconvolution sharpens and conserves") {
  const auto truth = two_peaks(-60e-6, 60e-6, 0.25e-6, -8e-6, 8e-6, 3e-6, 0.0);
  const auto t = simulate_scan(truth, 5e-6, 1e-6, -50e-6, 50e-6);
  DeconvolutionOptions opts;
  opts.iterations = 2000;
  opts.residual_tolerance = 1e-5;
  const auto d = deconvolve(t, opts);
  CHECK(d.converged);
  CHECK(d.residual <= 1e-5);
  const double sum_t = std::accumulate(t.values.begin(), t.values.end(), 0.0);
  const double sum_d = std::accumulate(d.profile.values.begin(), d.profile.values.end(), 0.0);
  CHECK(sum_d == doctest::Approx(sum_t).epsilon(1e-3));
  const double peak_t = *std::max_element(t.values.begin(), t.values.end());
  const double peak_d = *std::max_element(d.profile.values.begin(), d.profile.values.end());
  CHECK(peak_d > peak_t);
  CHECK(std::abs(peak_d - 1.0) < std::abs(peak_t - 1.0));
  for (double v : d.profile.values) CHECK(v >= 0.0);
}

TEST_CASE("deconvolving a flat trace is the identity") {
  ScanTrace t;
  for (int k = 0; k < 50; ++k) {
    t.positions.push_back(k * 1e-6);
    t.values.push_back(2.5);
  }
  t.slit_width = 5e-6;
  t.step = 1e-6;
  const auto d = deconvolve(t);
  CHECK(d.converged);
  for (double v : d.profile.values) CHECK(v == doctest::Approx(2.5));
}

TEST_CASE("peak location with parabolic refinement") {
  const auto p = two_peaks(-20e-6, 20e-6, 1e-6, 0.3e-6, 100.0, 6e-6, 0.0);
  const auto [x, h] = locate_peak(p, 2e-6);
  CHECK(x == doctest::Approx(0.3e-6).epsilon(0.05));
  CHECK(h == doctest::Approx(1.0).epsilon(1e-3));
  CHECK_ERROR(locate_peak(p, 15e-6), ErrorKind::Validation, "peak_not_found");
}

TEST_CASE("crosstalk of a known pedestal") {
  const double ped = 1e-4;
  const auto p = two_peaks(-50e-6, 550e-6, 1e-6, 0.0, 500e-6, 10e-6, ped);
  ExtractOptions opts;
  opts.n_points = 100;
  const auto r = extract_crosstalk(p, 1e-6, 499e-6, opts);
  CHECK(r.value_db == doctest::Approx(10 * std::log10(ped / (1 + ped))).epsilon(1e-6));
  CHECK(r.uncertainty_db < 1e-9);
  CHECK_FALSE(r.floor_limited);
  CHECK(r.window.first == doctest::Approx(200.5e-6).epsilon(1e-3));
  CHECK(r.n_window_points == 100);

  const auto zero = two_peaks(-50e-6, 550e-6, 1e-6, 0.0, 500e-6, 10e-6, 0.0);
  const auto z = extract_crosstalk(zero, 0.0, 500e-6, opts);
  CHECK(z.floor_limited);
  CHECK(z.value_db == -150.0);

  opts.n_points = 600;
  CHECK_ERROR(extract_crosstalk(p, 0.0, 500e-6, opts), ErrorKind::Validation, "window_too_small");

  opts.n_points = 100;
  opts.noise_floor = 2 * ped;
  CHECK(extract_crosstalk(p, 0.0, 500e-6, opts).floor_limited);
}

TEST_CASE("one segment and three segments agree") {
  const double one = pipeline_db({{-100e-6, 400e-6}}, {1.0});
  const double three = pipeline_db({{-100e-6, 60e-6}, {-40e-6, 340e-6}, {260e-6, 400e-6}}, {1.0, 0.79, 1.3});
  CHECK(std::abs(one - three) < 0.2);
  CHECK(one == doctest::Approx(10 * std::log10(3e-5)).epsilon(0.02));
}

TEST_CASE("fiber-scan background ratio") {
  ScalarField2D plane(FieldGrid::centered(201, 201, 0.5e-6, 0.5e-6), 650e-9);
  const double bg = std::pow(10.0, -4.0);
  for (std::size_t j = 0; j < 201; ++j)
    for (std::size_t i = 0; i < 201; ++i) {
      const double x = plane.grid().x(i), y = plane.grid().y(j);
      plane.at(i, j) = std::sqrt(std::exp(-2 * (x * x + y * y) / 4e-12) + bg);
    }
  const auto r = fiber_scan_background_ratio(plane, {0, 0}, {19.75e-6, 45.25e-6, -45.25e-6, 45.25e-6}, 10e-6);
  CHECK(r.value_db == doctest::Approx(10 * std::log10(bg / (1 + bg))).epsilon(1e-6));
  CHECK(r.n_points == 51 * 181);
  CHECK_ERROR(fiber_scan_background_ratio(plane, {0, 0}, {5e-6, 45e-6, -45e-6, 45e-6}, 10e-6),
              ErrorKind::Validation, "region_overlap");
}

TEST_CASE("csv round trips") {
  TempDir dir("slit");
  const auto p = two_peaks(-50e-6, 50e-6, 0.5e-6, -10e-6, 10e-6, 5e-6, 1e-7);
  auto t = simulate_scan(p, 5e-6, 1e-6);
  t.slit_height = 1.6e-3;
  t.modulation_hz = 28.1e3;
  t.noise_floor = 1e-6;
  write_trace(t, dir / "t.csv");
  const auto back = read_trace(dir / "t.csv");
  REQUIRE(back.values.size() == t.values.size());
  for (std::size_t k = 0; k < t.values.size(); ++k) {
    CHECK(back.values[k] == doctest::Approx(t.values[k]).epsilon(1e-11));
    CHECK(back.positions[k] == doctest::Approx(t.positions[k]).epsilon(1e-11));
  }
  CHECK(back.slit_width == doctest::Approx(5e-6));
  CHECK(back.step == doctest::Approx(1e-6));
  CHECK(back.slit_height == doctest::Approx(1.6e-3));
  CHECK(back.modulation_hz == doctest::Approx(28.1e3));
  REQUIRE(back.noise_floor);
  CHECK(*back.noise_floor == doctest::Approx(1e-6));

  write_profile_csv(p, dir / "p.csv");
  CHECK(read_profile_csv(dir / "p.csv").values.size() == p.values.size());
  CHECK_ERROR(read_profile_csv(dir / "missing.csv"), ErrorKind::Io, "read_failed");
  CHECK_ERROR(read_trace(dir / "p.csv"), ErrorKind::Io, "read_failed");
}

}
