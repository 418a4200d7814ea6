#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"

using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run cli(const std::string& args) {
  static int counter = 0;
  const std::string err_path =
      (std::filesystem::temp_directory_path() / ("ionguide_cli_err_" + std::to_string(counter++))).string();
  const std::string cmd = std::string(IONGUIDE_CLI) + " " + args + " 2>" + err_path;
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream e(err_path);
  r.err.assign(std::istreambuf_iterator<char>(e), {});
  std::filesystem::remove(err_path);
  return r;
}

int lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and version on every level") {
  CHECK(cli("--help").code == 0);
  CHECK(cli("--version").code == 0);
  for (const char* sub : {"modes", "cutoff", "taper", "ionchain", "design", "image", "crosstalk", "slitscan", "run",
                          "slitscan simulate", "slitscan deconvolve", "slitscan stitch", "slitscan extract"}) {
    const auto r = cli(std::string(sub) + " --help");
    CHECK_MESSAGE(r.code == 0, sub);
    CHECK(r.out.find("Usage") != std::string::npos);
  }
}

TEST_CASE("usage errors exit 2 with one diagnostic line") {
  for (const char* args : {"ionchain --n 8 --mass-amu 138 --axial-khz 34 --bogus", "", "ionchain",
                           "ionchain --n 3 --mass 12parsecs --axial-khz 34", "design --set w_c"}) {
    const auto r = cli(args);
    CHECK_MESSAGE(r.code == 2, args);
    CHECK(lines(r.err) == 1);
    CHECK(r.err.rfind("ionguide: error kind=usage", 0) == 0);
  }
}

TEST_CASE("ionchain csv") {
  const auto r = cli("ionchain --n 8 --mass-amu 138 --axial-khz 34");
  CHECK(r.code == 0);
  CHECK(lines(r.out) == 9);
  CHECK(r.out.rfind("index,u,x_m\n", 0) == 0);
  const auto same = cli("ionchain --n 8 --mass 138amu --axial-frequency 34kHz");
  CHECK(same.out == r.out);
  const auto j = json::parse(cli("ionchain --n 8 --mass-amu 138 --axial-khz 34 --format json").out);
  CHECK(j["positions"].size() == 8);
}

TEST_CASE("validation and computation exit codes") {
  auto r = cli("ionchain --n 0 --mass-amu 138 --axial-khz 34");
  CHECK(r.code == 3);
  CHECK(r.err.find("code=invalid_chain") != std::string::npos);
  r = cli("design --set w_c=2um --set w_q=0.4um --set M=0.3");
  CHECK(r.code == 3);
  CHECK(r.err.find("code=inconsistent") != std::string::npos);
  r = cli("taper --n-core 1.458 --end-width 60nm --start-width 100nm --resolution 40nm --points 2");
  CHECK(r.code == 4);
  r = cli("slitscan extract --profile /nonexistent.csv --peak-a 0 --peak-b 1um");
  CHECK(r.code == 2);  // rejected by the existence check
}

TEST_CASE("design json re-ingests") {
  TempDir dir("cli_design");
  const auto r = cli("design --set M=0.187 --set s_c=73.4um --set w_q=2um --wavelength 650nm --format json");
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["s_q"].get<double>() == doctest::Approx(0.187 * 73.4e-6));
  CHECK(j["w_c"].get<double>() == doctest::Approx(2e-6 / 0.187));
  std::ofstream(dir / "d.json") << r.out;
  const auto again = cli("design --input " + (dir / "d.json") + " --keep w_c,s_q,na_q --format json");
  REQUIRE(again.code == 0);
  const auto k = json::parse(again.out);
  for (const char* name : {"w_c", "s_c", "na_c", "w_q", "s_q", "na_q", "M"})
    CHECK(k[name].get<double>() == doctest::Approx(j[name].get<double>()).epsilon(1e-9));
}

TEST_CASE("config file selects the output format") {
  TempDir dir("cli_cfg");
  std::ofstream(dir / "cfg.json") << R"({"output_format": "json"})";
  const auto r = cli("--config " + (dir / "cfg.json") + " ionchain --n 2 --mass-amu 40 --axial-khz 1000");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["positions"].size() == 2);
  std::ofstream(dir / "bad.json") << R"({"output_format": "xml"})";
  CHECK(cli("--config " + (dir / "bad.json") + " ionchain --n 2 --mass-amu 40 --axial-khz 1000").code == 3);
}

TEST_CASE("slitscan round trip through files") {
  TempDir dir("cli_scan");
  {
    std::ofstream p(dir / "p.csv");
    p << "position_um,intensity\n";
    for (int k = 0; k <= 2400; ++k) {
      const double x = -100 + k * 0.25;
      p << x << ',' << std::exp(-2 * (x + 50) * (x + 50) / 100) + std::exp(-2 * (x - 450) * (x - 450) / 100) + 1e-4
        << '\n';
    }
  }
  REQUIRE(cli("slitscan simulate --profile " + (dir / "p.csv") + " --slit 5um --step 1um --out " + (dir / "t.csv"))
              .code == 0);
  CHECK(std::filesystem::exists(dir / "t.csv.json"));
  REQUIRE(cli("slitscan deconvolve --trace " + (dir / "t.csv") + " --out " + (dir / "d.csv")).code == 0);
  const auto r = cli("slitscan extract --profile " + (dir / "d.csv") + " --peak-a -50um --peak-b 450um --points 100 "
                     "--format json");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["value_db"].get<double>() == doctest::Approx(-40.0).epsilon(0.01));
  const auto st = cli("slitscan stitch --scan " + (dir / "t.csv") + " --scan " + (dir / "t.csv") +
                      " --min-overlap 10um --out " + (dir / "c.csv"));
  CHECK(st.code == 0);
}

TEST_CASE("image and crosstalk subcommands") {
  TempDir dir("cli_image");
  const auto r = cli("image --gaussian 2um --nx 64 --ny 64 --dx 0.25um --magnification 0.5 --na 0.6 --out " +
                     (dir / "img.csv") + " --format json");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["transmission"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  const auto x = cli("crosstalk --channel " + (dir / "img.csv") + " --target 0,0 --radius 1um --format json");
  REQUIRE(x.code == 0);
  CHECK(json::parse(x.out)["crosstalk_db"][0][0].get<double>() == 0.0);
  CHECK(cli("crosstalk --channel " + (dir / "img.csv")).code == 2);
}

TEST_CASE("run exits with the failing stage") {
  TempDir dir("cli_run");
  std::ofstream(dir / "bad.json") << R"({"ion_chain": {"n_ions": 0}})";
  const auto r = cli("run " + (dir / "bad.json"));
  CHECK(r.code == 10);
  CHECK(r.err.find("stage=config") != std::string::npos);
  std::ofstream(dir / "mode.json") << R"({"waveguide": {"n_core": 1.458, "n_clad": 1.457}})";
  CHECK(cli("run " + (dir / "mode.json")).code == 11);
  std::ofstream(dir / "ok.json") << R"({"ion_chain": {"n_ions": 2}, "output_dir": ")" << dir.path.string()
                                 << R"("})";
  const auto ok = cli("run " + (dir / "ok.json") + " --format json");
  REQUIRE(ok.code == 0);
  const auto j = json::parse(ok.out);
  CHECK(std::filesystem::exists(std::filesystem::path(j["artifact_dir"].get<std::string>()) / "report.json"));
}

}
