#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "ionguide/pipeline.hpp"

using namespace ionguide;
namespace fs = std::filesystem;

namespace {

ScenarioConfig small() {
  ScenarioConfig c;
  c.n_ions = 3;
  c.grid_dx = c.grid_dy = 25e-9;
  c.facet_margin = 20e-6;
  return c;
}

template <class F>
Stage failing_stage(F&& f) {
  try {
    f();
  } catch (const StageError& e) {
    return e.stage();
  }
  FAIL("no stage error");
  return Stage::Config;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("scenario json round trip and strict keys") {
  ScenarioConfig c = small();
  c.metrology.enabled = true;
  c.metrology.pedestal_db = -50.8;
  c.metrology.gain_drift = {1.0, 0.79};
  c.metrology.noise.floor_db = -70.0;
  c.integration_radius = 0.5e-6;
  c.layout = LayoutMode::Explicit;
  c.explicit_positions = {-1e-4, 0.0, 1e-4};
  const auto j = scenario_to_json(c);
  CHECK(scenario_to_json(scenario_from_json(j)) == j);

  auto bad = j;
  bad["imaging"]["zoom"] = 3;
  CHECK_ERROR(scenario_from_json(bad), ErrorKind::Validation, "config_unknown_key");
  bad = j;
  bad["channels"]["layout"] = "spiral";
  CHECK_ERROR(scenario_from_json(bad), ErrorKind::Validation, "config_value");
  bad = j;
  bad["ion_chain"]["n_ions"] = "eight";
  CHECK_ERROR(scenario_from_json(bad), ErrorKind::Validation, "config_type");
}

TEST_CASE("config hash ignores the output directory") {
  ScenarioConfig a = small(), b = small();
  b.output_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.pitch_factor = 6.0;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("segment planning") {
  const std::vector<double> peaks{1e-3, 3e-3, 5e-3, 7e-3};
  const auto segs = plan_segments(peaks, 0.0, 8e-3, 4e-3, 0.5e-3);
  REQUIRE(segs.size() >= 2);
  CHECK(segs.front().first == 0.0);
  CHECK(segs.back().second == 8e-3);
  for (std::size_t s = 0; s < segs.size(); ++s) {
    CHECK(segs[s].second - segs[s].first <= 4e-3 + 1e-12);
    if (s) {
      const double lo = segs[s].first, hi = segs[s - 1].second;
      CHECK(hi - lo == doctest::Approx(0.5e-3));
      bool anchored = false;
      for (double p : peaks) anchored |= p > lo && p < hi;
      CHECK(anchored);
    }
  }
  CHECK(plan_segments(peaks, 0.0, 8e-3, 10e-3, 0.5e-3).size() == 1);
  CHECK_ERROR(plan_segments({1e-3, 9e-3}, 0.0, 10e-3, 4e-3, 0.5e-3), ErrorKind::Validation, "segmentation");
}

TEST_CASE("delivery on a three-ion chain") {
  const auto r = run_delivery_scenario(small());
  REQUIRE(r.channel_positions.size() == 3);
  CHECK(r.channel_positions[2] == doctest::Approx(5.0 * r.chain.positions[2]));
  CHECK(r.crosstalk.size() == 3);
  CHECK(r.report["worst_nearest_neighbor_db"].get<double>() < -50.0);
  CHECK(r.report["pitch"]["ratio"].get<double>() == doctest::Approx(5.0));
  CHECK(r.integration_radius == doctest::Approx(650e-9 * 0.2 / (2 * 0.55)));
  // Symmetric chain, symmetric crosstalk.
  CHECK(r.crosstalk[0][1] == doctest::Approx(r.crosstalk[2][1]).epsilon(1e-3));
}

TEST_CASE("layout modes") {
  auto c = small();
  c.layout = LayoutMode::InverseMagnification;
  c.imaging.magnification = 0.5;
  auto r = run_delivery_scenario(c);
  CHECK(r.channel_positions[0] == doctest::Approx(r.chain.positions[0] / 0.5));
  c = small();
  c.layout = LayoutMode::Explicit;
  c.explicit_positions = {-80e-6, 0.0, 80e-6};
  r = run_delivery_scenario(c);
  CHECK(r.targets[0].first == doctest::Approx(-80e-6 * 0.2));
}

TEST_CASE("failures carry their stage") {
  auto c = small();
  c.n_clad = 2.0199;
  c.n_core = 2.02;
  CHECK(failing_stage([&] { run_delivery_scenario(c); }) == Stage::Mode);
  c = small();
  c.n_ions = 0;
  CHECK(failing_stage([&] { run_delivery_scenario(c); }) == Stage::Config);
  c = small();
  c.layout = LayoutMode::Explicit;
  c.explicit_positions = {0.0, -1e-5};
  CHECK(failing_stage([&] { run_delivery_scenario(c); }) == Stage::Layout);
  c = small();
  c.facet_dx = 1e-6;
  CHECK(failing_stage([&] { run_delivery_scenario(c); }) == Stage::Imaging);
  c = small();
  c.metrology.enabled = true;
  c.metrology.window_points = 100000;
  const auto d = run_delivery_scenario(c);
  CHECK(failing_stage([&] { run_metrology_scenario(c, &d); }) == Stage::Extract);
}

TEST_CASE("full run writes the artifact set") {
  TempDir dir("pipeline");
  auto c = small();
  c.output_dir = dir.path.string();
  c.metrology.enabled = true;
  c.metrology.pedestal_db = -45.0;
  c.metrology.lead = 5e-3;
  c.metrology.gain_drift = {1.0, 0.79, 1.1};
  const auto out = run_scenario(c);
  CHECK(out.artifact_dir == (dir.path / config_hash(c)).string());
  for (const char* f : {"scenario.json", "facet_mode.csv", "ion_chain.csv", "crosstalk.json", "ion_plane_line.csv",
                        "ion_plane_intensity.csv", "profile.csv", "scan_0.csv", "scan_0.csv.json", "composite.csv",
                        "deconvolved.csv", "metrology.json", "report.json"})
    CHECK_MESSAGE(fs::exists(fs::path(out.artifact_dir) / f), f);
  const auto& m = out.report["metrology"];
  CHECK(m["segments"].size() == 4);
  CHECK(m["stitch_gains"][1].get<double>() == doctest::Approx(1 / 0.79).epsilon(0.01));
  const double db = m["crosstalk"]["value_db"].get<double>();
  CHECK(std::abs(db - (-45.0)) < 1.0);

  // The stored scenario reproduces the same directory.
  const auto again = load_scenario((fs::path(out.artifact_dir) / "scenario.json").string());
  CHECK(config_hash(again) == config_hash(c));
}

TEST_CASE("recorded traces") {
  TempDir dir("recorded");
  auto c = small();
  c.metrology.enabled = true;
  c.metrology.pedestal_db = -40.0;
  const auto d = run_delivery_scenario(c);
  const auto synth = run_metrology_scenario(c, &d);
  std::vector<std::string> paths;
  for (std::size_t s = 0; s < synth.scans.size(); ++s) {
    paths.push_back(dir / ("s" + std::to_string(s) + ".csv"));
    write_trace(synth.scans[s], paths.back());
  }
  auto r = c;
  r.metrology.recorded_traces = paths;
  for (double x : d.channel_positions) r.metrology.peak_hints.push_back(x * c.metrology.magnification);
  const auto rec = run_metrology_scenario(r, nullptr);
  CHECK(rec.report["source"] == "recorded");
  CHECK(rec.crosstalk.value_db == doctest::Approx(synth.crosstalk.value_db).epsilon(1e-6));
}

TEST_CASE("one channel gives the 1x1 zero matrix") {
  auto c = small();
  c.n_ions = 1;
  const auto r = run_delivery_scenario(c);
  REQUIRE(r.crosstalk.size() == 1);
  CHECK(r.crosstalk[0] == std::vector<double>{0.0});
}

TEST_CASE("nearly coincident channels approach 0 dB") {
  auto c = small();
  c.n_ions = 2;
  c.layout = LayoutMode::Explicit;
  c.explicit_positions = {0.0, 1e-9};
  const auto r = run_delivery_scenario(c);
  CHECK(std::abs(r.crosstalk[0][1]) < 0.01);
}

TEST_CASE("reports are reproducible") {
  TempDir a("det_a"), b("det_b");
  auto c = small();
  c.metrology.enabled = true;
  c.metrology.pedestal_db = -45.0;
  c.metrology.noise.proportional_sigma = 0.01;
  c.metrology.noise.seed = 11;
  c.output_dir = a.path.string();
  const auto ra = run_scenario(c);
  c.output_dir = b.path.string();
  const auto rb = run_scenario(c);
  CHECK(ra.report.dump() == rb.report.dump());
  std::ifstream fa(fs::path(ra.artifact_dir) / "report.json"), fb(fs::path(rb.artifact_dir) / "report.json");
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);
}

}
