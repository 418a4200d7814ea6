#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "ionguide/ionguide.h"
#include "json.hpp"

using nlohmann::json;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  ig_string_free(s);
  return out;
}

}  // namespace

TEST_SUITE("c_api") {

TEST_CASE("version and config") {
  CHECK(std::strlen(ig_version()) > 0);
  ig_config* cfg = nullptr;
  REQUIRE(ig_config_default(&cfg) == IG_OK);
  char* s = nullptr;
  REQUIRE(ig_config_to_json(cfg, &s) == IG_OK);
  const auto j = json::parse(take(s));
  CHECK(j["output_format"] == "table");
  ig_waveguide g;
  REQUIRE(ig_config_waveguide(cfg, &g) == IG_OK);
  CHECK(g.core_width == doctest::Approx(500e-9));
  CHECK(g.n_core == doctest::Approx(2.02));
  ig_config_free(cfg);

  CHECK(ig_config_from_json("{\"bogus\": 1}", &cfg) == IG_ERR_VALIDATION);
  CHECK(std::string(ig_last_error_code()) == "config_unknown_key");
  CHECK(ig_config_from_json("{not json", &cfg) == IG_ERR_VALIDATION);
  CHECK(ig_config_load("/nonexistent/cfg.json", &cfg) == IG_ERR_IO);
  CHECK(ig_config_from_json("{\"output_format\": \"json\"}", &cfg) == IG_OK);
  ig_config_free(cfg);
}

TEST_CASE("null arguments") {
  CHECK(ig_config_default(nullptr) == IG_ERR_VALIDATION);
  CHECK(std::string(ig_last_error_code()) == "null_argument");
  CHECK(ig_solve_modes(nullptr, nullptr, IG_TE, 1, nullptr) == IG_ERR_VALIDATION);
  ig_config_free(nullptr);
  ig_field_free(nullptr);
  ig_trace_free(nullptr);
  ig_mode_set_free(nullptr);
  ig_string_free(nullptr);
}

TEST_CASE("modes") {
  const ig_waveguide g{400e-9, 150e-9, 2.02, 1.457, 650e-9};
  const ig_grid_resolution r{25e-9, 25e-9, 2e-6};
  ig_mode_set* set = nullptr;
  REQUIRE(ig_solve_modes(&g, &r, IG_TE, 3, &set) == IG_OK);
  REQUIRE(ig_mode_set_count(set) >= 1);
  double n = 0.0;
  REQUIRE(ig_mode_set_n_eff(set, 0, &n) == IG_OK);
  CHECK(n > 1.457);
  CHECK(ig_mode_set_n_eff(set, 99, &n) == IG_ERR_VALIDATION);
  ig_field* f = nullptr;
  REQUIRE(ig_mode_set_field(set, 0, &f) == IG_OK);
  double p = 0.0;
  ig_field_power(f, &p);
  CHECK(p == doctest::Approx(1.0));
  char* s = nullptr;
  REQUIRE(ig_mode_set_summary_json(set, &s) == IG_OK);
  CHECK(json::parse(take(s))[0]["n_eff"].get<double>() == n);
  ig_field_free(f);
  ig_mode_set_free(set);

  const ig_waveguide bad{400e-9, 150e-9, 1.0, 1.457, 650e-9};
  CHECK(ig_solve_modes(&bad, &r, IG_TE, 1, &set) == IG_ERR_VALIDATION);
  CHECK(std::string(ig_last_error_code()) == "invalid_geometry");
}

TEST_CASE("ion chain and design") {
  const ig_ion_chain_spec spec{4, 138 * 1.66053906660e-27, 34e3, 1.602176634e-19};
  std::vector<double> pos(4);
  double l = 0.0;
  REQUIRE(ig_ion_chain_positions(&spec, pos.data(), &l) == IG_OK);
  CHECK(pos[0] == doctest::Approx(-pos[3]));
  CHECK(l > 0.0);
  double ratio = 0.0;
  int in_band = 0;
  REQUIRE(ig_design_pitch_check(6 * (pos[2] - pos[1]), pos.data(), 4, 5, 10, &ratio, &in_band) == IG_OK);
  CHECK(ratio == doctest::Approx(6.0));
  CHECK(in_band == 1);
  char* s = nullptr;
  REQUIRE(ig_ion_chain_csv(&spec, &s) == IG_OK);
  CHECK(take(s).rfind("index,u,x_m", 0) == 0);

  REQUIRE(ig_design_solve(R"({"w_c": 2e-6, "M": 0.2, "s_c": 1e-5})", 650e-9, 1 / M_PI, &s) == IG_OK);
  const auto d = json::parse(take(s));
  CHECK(d["w_q"].get<double>() == doctest::Approx(0.4e-6));
  CHECK(ig_design_solve(R"({"w_c": 2e-6, "w_q": 4e-7, "M": 0.3})", 650e-9, 1 / M_PI, &s) == IG_ERR_VALIDATION);
  CHECK(std::string(ig_last_error_code()) == "inconsistent");
  CHECK(ig_design_solve(R"({"w_c": 2e-6})", 650e-9, 1 / M_PI, &s) == IG_ERR_VALIDATION);
}

TEST_CASE("fields and imaging") {
  TempDir dir("capi_field");
  ig_field* f = nullptr;
  REQUIRE(ig_field_gaussian(64, 64, 0.2e-6, 0.2e-6, 650e-9, 1.5e-6, 0, 0, &f) == IG_OK);
  ig_field* img = nullptr;
  REQUIRE(ig_image_field(f, 0.5, 0.55, &img) == IG_OK);
  double p_in = 0, p_out = 0;
  ig_field_power(f, &p_in);
  ig_field_power(img, &p_out);
  CHECK(p_out == doctest::Approx(p_in).epsilon(1e-10));
  size_t nx = 0, ny = 0;
  double dx = 0, dy = 0, x0 = 0, y0 = 0;
  ig_field_info(img, &nx, &ny, &dx, &dy, &x0, &y0);
  CHECK(dx == doctest::Approx(0.1e-6));
  REQUIRE(ig_field_write_csv(img, (dir / "img.csv").c_str()) == IG_OK);
  ig_field* back = nullptr;
  REQUIRE(ig_field_read_csv((dir / "img.csv").c_str(), 650e-9, &back) == IG_OK);
  double p_back = 0;
  ig_field_power(back, &p_back);
  CHECK(p_back == doctest::Approx(p_out).epsilon(1e-9));
  CHECK(ig_image_field(f, 0.5, 1.5, &img) == IG_ERR_VALIDATION);
  CHECK(ig_field_read_csv((dir / "none.csv").c_str(), 650e-9, &back) == IG_ERR_IO);
  ig_field_free(back);
  ig_field_free(img);
  ig_field_free(f);
}

TEST_CASE("scan chain through handles") {
  std::vector<double> x, v;
  for (int k = 0; k <= 2400; ++k) {
    x.push_back(-100e-6 + k * 0.25e-6);
    const double a = x.back() + 50e-6, b = x.back() - 450e-6;
    v.push_back(std::exp(-2 * a * a / 1e-10) + std::exp(-2 * b * b / 1e-10) + 1e-4);
  }
  ig_trace* prof = nullptr;
  REQUIRE(ig_trace_from_arrays(x.data(), v.data(), x.size(), 0.0, 0.25e-6, &prof) == IG_OK);
  const ig_noise none{0, 0.0, 0.0, 1};
  ig_trace* t = nullptr;
  REQUIRE(ig_scan_simulate(prof, 5e-6, 1e-6, &none, &t) == IG_OK);
  ig_trace* d = nullptr;
  int converged = 0;
  double residual = 0.0;
  REQUIRE(ig_scan_deconvolve(t, 500, 1e-6, &d, &converged, &residual) == IG_OK);
  char* s = nullptr;
  REQUIRE(ig_scan_extract(d, -50e-6, 450e-6, 100, &s) == IG_OK);
  const auto r = json::parse(take(s));
  CHECK(r["value_db"].get<double>() == doctest::Approx(-40.0).epsilon(0.01));
  const ig_trace* scans[] = {t, t};
  ig_trace* st = nullptr;
  std::vector<double> gains(2);
  CHECK(ig_scan_stitch(scans, 2, 1e-6, &st, gains.data()) == IG_OK);
  CHECK(gains[1] == doctest::Approx(1.0));
  CHECK(ig_trace_length(st) == ig_trace_length(t));
  ig_trace_free(st);
  ig_trace_free(d);
  ig_trace_free(t);
  ig_trace_free(prof);
}

TEST_CASE("scenario failures report their stage") {
  char* s = nullptr;
  int stage = -2;
  CHECK(ig_run_scenario_json(R"({"ion_chain": {"n_ions": 0}})", nullptr, &s, &stage) == IG_ERR_VALIDATION);
  CHECK(stage == IG_STAGE_CONFIG);
  CHECK(ig_run_scenario_json("{broken", nullptr, &s, &stage) != IG_OK);
  CHECK(stage == IG_STAGE_CONFIG);
  CHECK(ig_run_scenario_json(R"({"waveguide": {"n_core": 1.458, "n_clad": 1.457}})", nullptr, &s, &stage) ==
        IG_ERR_COMPUTATION);
  CHECK(stage == IG_STAGE_MODE);
}

}
