// ionguide command-line front end. Links only the C interface.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ionguide/ionguide.h"
#include "json.hpp"
#include "units.hpp"

namespace {

using nlohmann::json;
using units::Dimension;

constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitComputation = 4;
constexpr int kExitIo = 5;
constexpr int kExitInternal = 1;
constexpr int kExitStageBase = 10;

struct Failure {
  int exit_code;
  std::string kind;
  std::string code;
  std::string message;
  std::string stage;
};

const char* stage_name(int s) {
  static const char* names[] = {"config",  "mode",    "taper",  "chain",      "layout",  "imaging",  "crosstalk",
                                "profile", "scan",    "stitch", "deconvolve", "extract", "artifacts"};
  return s >= 0 && s < 13 ? names[s] : "none";
}

[[noreturn]] void raise_status(ig_status st) {
  switch (st) {
    case IG_ERR_VALIDATION: throw Failure{kExitValidation, "validation", ig_last_error_code(), ig_last_error(), ""};
    case IG_ERR_COMPUTATION: throw Failure{kExitComputation, "computation", ig_last_error_code(), ig_last_error(), ""};
    case IG_ERR_IO: throw Failure{kExitIo, "io", ig_last_error_code(), ig_last_error(), ""};
    default: throw Failure{kExitInternal, "internal", ig_last_error_code(), ig_last_error(), ""};
  }
}

void check(ig_status st) {
  if (st != IG_OK) raise_status(st);
}

[[noreturn]] void usage_error(const std::string& msg) { throw Failure{kExitUsage, "usage", "bad_argument", msg, ""}; }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out;
}

void print_diagnostic(const Failure& f) {
  std::cerr << "ionguide: error kind=" << f.kind << " code=" << (f.code.empty() ? "unknown" : f.code);
  if (!f.stage.empty()) std::cerr << " stage=" << f.stage;
  std::cerr << " exit=" << f.exit_code << " message=\"" << escape(f.message) << "\"\n";
}

struct StringDeleter {
  void operator()(char* s) const { ig_string_free(s); }
};
using OwnedString = std::unique_ptr<char, StringDeleter>;

struct ConfigDeleter {
  void operator()(ig_config* c) const { ig_config_free(c); }
};
struct ModeSetDeleter {
  void operator()(ig_mode_set* m) const { ig_mode_set_free(m); }
};
struct FieldDeleter {
  void operator()(ig_field* f) const { ig_field_free(f); }
};
struct TraceDeleter {
  void operator()(ig_trace* t) const { ig_trace_free(t); }
};
using Config = std::unique_ptr<ig_config, ConfigDeleter>;
using ModeSet = std::unique_ptr<ig_mode_set, ModeSetDeleter>;
using Field = std::unique_ptr<ig_field, FieldDeleter>;
using Trace = std::unique_ptr<ig_trace, TraceDeleter>;

std::string take(char* s) {
  OwnedString owner(s);
  return s ? std::string(s) : std::string{};
}

double quantity(const std::string& text, Dimension dim) {
  try {
    return units::parse(text, dim);
  } catch (const units::UnitError& e) {
    usage_error(e.what());
  }
}

std::vector<double> quantity_list(const std::string& text, Dimension dim, std::size_t expected) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(quantity(item, dim));
  if (expected && out.size() != expected)
    usage_error("'" + text + "' must hold " + std::to_string(expected) + " comma-separated values");
  return out;
}

enum class Format { Table, Csv, Json };

struct Context {
  std::string config_path;
  std::string format_flag;
  Config config;
  Format format = Format::Table;

  const ig_config* cfg() {
    if (!config) {
      ig_config* c = nullptr;
      check(config_path.empty() ? ig_config_default(&c) : ig_config_load(config_path.c_str(), &c));
      config.reset(c);
    }
    return config.get();
  }

  json config_json() {
    char* s = nullptr;
    check(ig_config_to_json(cfg(), &s));
    return json::parse(take(s));
  }

  void resolve_format() {
    std::string f = format_flag.empty() ? config_json().value("output_format", "table") : format_flag;
    if (f == "table") format = Format::Table;
    else if (f == "csv") format = Format::Csv;
    else if (f == "json") format = Format::Json;
    else usage_error("--format must be table, csv or json");
  }
};

ig_polarization polarization(const std::string& s) {
  if (s == "TE" || s == "te") return IG_TE;
  if (s == "TM" || s == "tm") return IG_TM;
  usage_error("--pol must be TE or TM");
}

// Waveguide and grid options shared by the mode-solving subcommands.
struct GuideOptions {
  std::optional<std::string> width, thickness, wavelength, resolution, margin;
  std::optional<double> n_core, n_clad;
  std::string pol = "TE";

  void add(CLI::App* app, bool with_width = true) {
    if (with_width) app->add_option("--width", width, "core width (e.g. 500nm)");
    app->add_option("--thickness", thickness, "core thickness (e.g. 150nm)");
    app->add_option("--wavelength", wavelength, "vacuum wavelength (e.g. 650nm)");
    app->add_option("--n-core", n_core, "core index");
    app->add_option("--n-clad", n_clad, "cladding index");
    app->add_option("--pol", pol, "TE or TM")->capture_default_str();
    app->add_option("--resolution", resolution, "grid spacing (e.g. 20nm)");
    app->add_option("--margin", margin, "cladding margin around the core (e.g. 2um)");
  }

  void apply(Context& ctx, ig_waveguide& g, ig_grid_resolution& r) const {
    check(ig_config_waveguide(ctx.cfg(), &g));
    check(ig_config_resolution(ctx.cfg(), &r));
    if (width) g.core_width = quantity(*width, Dimension::Length);
    if (thickness) g.core_thickness = quantity(*thickness, Dimension::Length);
    if (wavelength) g.wavelength = quantity(*wavelength, Dimension::Length);
    if (n_core) g.n_core = *n_core;
    if (n_clad) g.n_clad = *n_clad;
    if (resolution) r.dx = r.dy = quantity(*resolution, Dimension::Length);
    if (margin) r.margin = quantity(*margin, Dimension::Length);
  }
};

// ---- modes ----

struct ModesCmd {
  GuideOptions guide;
  std::size_t max_modes = 4;
  std::string field_prefix;

  void run(Context& ctx) {
    ig_waveguide g;
    ig_grid_resolution r;
    guide.apply(ctx, g, r);
    ig_mode_set* raw = nullptr;
    check(ig_solve_modes(&g, &r, polarization(guide.pol), max_modes, &raw));
    ModeSet set(raw);
    char* s = nullptr;
    check(ig_mode_set_summary_json(set.get(), &s));
    const json summary = json::parse(take(s));
    for (std::size_t i = 0; !field_prefix.empty() && i < ig_mode_set_count(set.get()); ++i) {
      ig_field* f = nullptr;
      check(ig_mode_set_field(set.get(), i, &f));
      Field field(f);
      check(ig_field_write_csv(field.get(), (field_prefix + "_" + std::to_string(i) + ".csv").c_str()));
    }
    if (ctx.format == Format::Json) {
      std::cout << summary.dump(2) << "\n";
    } else if (ctx.format == Format::Csv) {
      std::cout << "mode_index,polarization,n_eff,mfd_x,mfd_y\n";
      for (const auto& m : summary)
        std::printf("%d,%s,%.10f,%.6e,%.6e\n", m["mode_index"].get<int>(),
                    m["polarization"].get<std::string>().c_str(), m["n_eff"].get<double>(),
                    m["MFD_x"].get<double>(), m["MFD_y"].get<double>());
    } else {
      std::printf("guided %s modes: %zu\n", guide.pol.c_str(), summary.size());
      std::printf("%-5s %-12s %-10s %-10s\n", "mode", "n_eff", "MFD_x/nm", "MFD_y/nm");
      for (const auto& m : summary)
        std::printf("%-5d %-12.8f %-10.1f %-10.1f\n", m["mode_index"].get<int>(), m["n_eff"].get<double>(),
                    m["MFD_x"].get<double>() * 1e9, m["MFD_y"].get<double>() * 1e9);
    }
  }
};

// ---- cutoff ----

struct CutoffCmd {
  GuideOptions guide;
  bool slab = false;
  std::optional<std::string> tolerance;

  void run(Context& ctx) {
    ig_waveguide g;
    ig_grid_resolution r;
    guide.apply(ctx, g, r);
    const auto pol = polarization(guide.pol);
    double value = 0.0;
    const char* what = slab ? "slab_cutoff_thickness" : "cutoff_width";
    if (slab) {
      check(ig_slab_cutoff(g.n_core, g.n_clad, g.wavelength, r.dy, r.margin, pol, &value));
    } else {
      const double tol = tolerance ? quantity(*tolerance, Dimension::Length) : 0.0;
      check(ig_single_mode_cutoff(&g, &r, pol, tol, &value));
    }
    if (ctx.format == Format::Json)
      std::cout << json{{what, value}, {"polarization", guide.pol}}.dump(2) << "\n";
    else if (ctx.format == Format::Csv)
      std::printf("quantity,value\n%s,%.9e\n", what, value);
    else
      std::printf("%s %s: %.2f nm\n", guide.pol.c_str(), what, value * 1e9);
  }
};

// ---- taper ----

struct TaperCmd {
  GuideOptions guide;
  std::optional<std::string> start_width, end_width, length;
  std::size_t segments = 0;
  std::size_t points = 5;
  bool adiabatic = false;
  double safety = 0.0;

  void run(Context& ctx) {
    ig_waveguide g;
    ig_grid_resolution r;
    guide.apply(ctx, g, r);
    const auto cfg = ctx.config_json()["defaults"];
    ig_taper t{cfg["taper_start_width"].get<double>(), cfg["taper_end_width"].get<double>(),
               cfg["taper_length"].get<double>(), cfg["taper_segments"].get<std::size_t>()};
    if (start_width) t.start_width = quantity(*start_width, Dimension::Length);
    if (end_width) t.end_width = quantity(*end_width, Dimension::Length);
    if (length) t.length = quantity(*length, Dimension::Length);
    if (segments) t.segments = segments;
    if (points < 2) usage_error("--points must be at least 2");
    std::vector<double> widths;
    for (std::size_t i = 0; i < points; ++i)
      widths.push_back(t.start_width + (t.end_width - t.start_width) * static_cast<double>(i) /
                                           static_cast<double>(points - 1));
    const auto pol = polarization(guide.pol);
    char* s = nullptr;
    check(ig_taper_sweep(&g, &r, pol, widths.data(), widths.size(), &s));
    json out{{"sweep", json::parse(take(s))}};
    if (adiabatic) {
      const double alpha = safety > 0.0 ? safety : ctx.config_json()["tolerances"]["adiabatic_safety"].get<double>();
      check(ig_taper_adiabaticity(&g, &r, pol, &t, alpha, &s));
      out["adiabaticity"] = json::parse(take(s));
    }
    if (ctx.format == Format::Json) {
      std::cout << out.dump(2) << "\n";
      return;
    }
    if (ctx.format == Format::Csv) std::cout << "width,mfd_x,mfd_y,n_eff\n";
    else std::printf("%-10s %-10s %-10s %-12s\n", "width/nm", "MFD_x/nm", "MFD_y/nm", "n_eff");
    for (const auto& p : out["sweep"]) {
      if (ctx.format == Format::Csv)
        std::printf("%.6e,%.6e,%.6e,%.10f\n", p["width"].get<double>(), p["mfd_x"].get<double>(),
                    p["mfd_y"].get<double>(), p["n_eff"].get<double>());
      else
        std::printf("%-10.1f %-10.1f %-10.1f %-12.8f\n", p["width"].get<double>() * 1e9,
                    p["mfd_x"].get<double>() * 1e9, p["mfd_y"].get<double>() * 1e9, p["n_eff"].get<double>());
    }
    if (adiabatic && ctx.format == Format::Table) {
      const auto& a = out["adiabaticity"];
      std::printf("adiabatic: %s (worst ratio %.3f at z = %.2f um)\n", a["pass"].get<bool>() ? "pass" : "fail",
                  a["worst_ratio"].get<double>(), a["worst_position"].get<double>() * 1e6);
    }
  }
};

// ---- ionchain ----

struct IonChainCmd {
  std::size_t n = 0;
  std::optional<double> mass_amu, axial_khz;
  std::optional<std::string> mass, axial;
  double charge_e = 1.0;

  ig_ion_chain_spec spec(Context& ctx) const {
    const auto c = ctx.config_json()["constants"];
    ig_ion_chain_spec s{n, 0.0, 0.0, charge_e * c["elementary_charge"].get<double>()};
    if (mass_amu) s.mass = *mass_amu * c["atomic_mass_unit"].get<double>();
    else if (mass) s.mass = quantity(*mass, Dimension::Mass);
    else usage_error("one of --mass-amu or --mass is required");
    if (axial_khz) s.axial_frequency = *axial_khz * 1e3;
    else if (axial) s.axial_frequency = quantity(*axial, Dimension::Frequency);
    else usage_error("one of --axial-khz or --axial-frequency is required");
    return s;
  }

  void run(Context& ctx) {
    const auto s = spec(ctx);
    if (ctx.format == Format::Json) {
      std::vector<double> pos(s.n_ions);
      double l = 0.0;
      check(ig_ion_chain_positions(&s, pos.data(), &l));
      std::cout << json{{"length_scale", l}, {"positions", pos}}.dump(2) << "\n";
      return;
    }
    char* csv = nullptr;
    check(ig_ion_chain_csv(&s, &csv));
    std::cout << take(csv);
  }
};

// ---- design ----

Dimension design_dimension(const std::string& name) {
  if (name == "M" || name == "m" || name.rfind("na", 0) == 0 || name == "magnification") return Dimension::Dimensionless;
  return Dimension::Length;
}

struct DesignCmd {
  std::vector<std::string> sets;
  std::optional<std::string> wavelength;
  double na_constant = 0.0;
  std::string input;
  std::string keep;
  std::optional<std::size_t> chain_n;
  double chain_mass_amu = 138.0;
  double chain_axial_khz = 34.0;

  void run(Context& ctx) {
    const auto cfg = ctx.config_json();
    json known = json::object();
    double lambda = cfg["defaults"]["wavelength"].get<double>();
    if (!input.empty()) {
      std::ifstream in(input);
      if (!in) throw Failure{kExitIo, "io", "read_failed", "cannot open '" + input + "'", ""};
      json full;
      try {
        in >> full;
      } catch (const json::exception& e) {
        throw Failure{kExitIo, "io", "bad_format", e.what(), ""};
      }
      if (full.contains("wavelength")) lambda = full["wavelength"].get<double>();
      std::stringstream ss(keep);
      std::string name;
      while (std::getline(ss, name, ',')) {
        if (!full.contains(name)) usage_error("'" + name + "' is not in " + input);
        known[name] = full[name];
      }
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) usage_error("--set expects name=value, got '" + s + "'");
      const std::string name = s.substr(0, eq);
      known[name] = quantity(s.substr(eq + 1), design_dimension(name));
    }
    if (wavelength) lambda = quantity(*wavelength, Dimension::Length);
    const double c = na_constant > 0.0 ? na_constant : cfg["defaults"]["na_spot_constant"].get<double>();
    char* s = nullptr;
    check(ig_design_solve(known.dump().c_str(), lambda, c, &s));
    json out = json::parse(take(s));

    if (chain_n) {
      ig_ion_chain_spec spec{*chain_n, chain_mass_amu * cfg["constants"]["atomic_mass_unit"].get<double>(),
                             chain_axial_khz * 1e3, cfg["constants"]["elementary_charge"].get<double>()};
      std::vector<double> pos(*chain_n);
      check(ig_ion_chain_positions(&spec, pos.data(), nullptr));
      double ratio = 0.0;
      int in_band = 0;
      check(ig_design_pitch_check(out["s_c"].get<double>(), pos.data(), pos.size(),
                                  cfg["tolerances"]["pitch_band_low"].get<double>(),
                                  cfg["tolerances"]["pitch_band_high"].get<double>(), &ratio, &in_band));
      out["pitch_ratio"] = ratio;
      out["pitch_in_band"] = in_band != 0;
    }

    if (ctx.format == Format::Json) {
      std::cout << out.dump(2) << "\n";
    } else if (ctx.format == Format::Csv) {
      std::cout << "name,value\n";
      for (auto it = out.begin(); it != out.end(); ++it) std::cout << it.key() << ',' << it.value() << "\n";
    } else {
      const char* order[] = {"w_c", "s_c", "na_c", "w_q", "s_q", "na_q", "M"};
      for (const char* k : order) {
        const double v = out[k].get<double>();
        const bool len = design_dimension(k) == Dimension::Length;
        std::printf("%-6s %14.6g %s\n", k, len ? v * 1e6 : v, len ? "um" : "");
      }
      std::printf("%-6s %14.6g nm\n", "lambda", out["wavelength"].get<double>() * 1e9);
      if (out.contains("pitch_ratio"))
        std::printf("pitch ratio %.3f (%s)\n", out["pitch_ratio"].get<double>(),
                    out["pitch_in_band"].get<bool>() ? "in band" : "out of band");
    }
  }
};

// ---- image ----

struct ImageCmd {
  std::string in;
  std::optional<std::string> gaussian, dx, wavelength;
  std::size_t nx = 256, ny = 256;
  double magnification = 1.0;
  double na = 0.5;
  std::string out, intensity_out;

  void run(Context& ctx) {
    const double lambda = wavelength ? quantity(*wavelength, Dimension::Length)
                                     : ctx.config_json()["defaults"]["wavelength"].get<double>();
    ig_field* raw = nullptr;
    if (!in.empty()) {
      check(ig_field_read_csv(in.c_str(), lambda, &raw));
    } else if (gaussian) {
      const double w = quantity(*gaussian, Dimension::Length);
      const double step = dx ? quantity(*dx, Dimension::Length) : lambda / (4.0 * na);
      check(ig_field_gaussian(nx, ny, step, step, lambda, w, 0.0, 0.0, &raw));
    } else {
      usage_error("one of --in or --gaussian is required");
    }
    Field input(raw);
    check(ig_image_field(input.get(), magnification, na, &raw));
    Field output(raw);
    if (!out.empty()) check(ig_field_write_csv(output.get(), out.c_str()));
    if (!intensity_out.empty()) check(ig_field_write_intensity_csv(output.get(), intensity_out.c_str()));
    double p_in = 0.0, p_out = 0.0;
    check(ig_field_power(input.get(), &p_in));
    check(ig_field_power(output.get(), &p_out));
    std::size_t onx = 0, ony = 0;
    double odx = 0.0, ody = 0.0;
    check(ig_field_info(output.get(), &onx, &ony, &odx, &ody, nullptr, nullptr));
    const json j{{"input_power", p_in}, {"output_power", p_out},   {"transmission", p_out / p_in},
                 {"nx", onx},           {"ny", ony},               {"dx", odx},
                 {"dy", ody},           {"magnification", magnification}, {"numerical_aperture", na}};
    if (ctx.format == Format::Json) std::cout << j.dump(2) << "\n";
    else if (ctx.format == Format::Csv)
      std::printf("input_power,output_power,transmission\n%.12e,%.12e,%.12f\n", p_in, p_out, p_out / p_in);
    else
      std::printf("transmission %.10f  output grid %zux%zu at %.4g nm\n", p_out / p_in, onx, ony, odx * 1e9);
  }
};

// ---- crosstalk ----

struct CrosstalkCmd {
  std::vector<std::string> channels, targets;
  std::optional<std::string> radius, wavelength;
  double floor_db = -150.0;
  std::string fiber;
  std::optional<std::string> peak, region, exclusion;

  void run(Context& ctx) {
    const double lambda = wavelength ? quantity(*wavelength, Dimension::Length)
                                     : ctx.config_json()["defaults"]["wavelength"].get<double>();
    if (!fiber.empty()) return run_fiber(ctx, lambda);
    if (channels.empty()) usage_error("give --channel fields or --fiber");
    if (channels.size() != targets.size()) usage_error("one --target per --channel is required");
    if (!radius) usage_error("--radius is required");
    std::vector<Field> fields;
    std::vector<const ig_field*> ptrs;
    std::vector<double> xy;
    for (std::size_t k = 0; k < channels.size(); ++k) {
      ig_field* f = nullptr;
      check(ig_field_read_csv(channels[k].c_str(), lambda, &f));
      fields.emplace_back(f);
      ptrs.push_back(f);
      const auto t = quantity_list(targets[k], Dimension::Length, 2);
      xy.insert(xy.end(), t.begin(), t.end());
    }
    const std::size_t n = channels.size();
    std::vector<double> m(n * n);
    check(ig_crosstalk_matrix(ptrs.data(), n, xy.data(), quantity(*radius, Dimension::Length), floor_db, m.data()));
    if (ctx.format == Format::Json) {
      json rows = json::array();
      for (std::size_t i = 0; i < n; ++i) rows.push_back(std::vector<double>(m.begin() + i * n, m.begin() + (i + 1) * n));
      std::cout << json{{"crosstalk_db", rows}}.dump(2) << "\n";
      return;
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j)
        std::printf(ctx.format == Format::Csv ? (j ? ",%.4f" : "%.4f") : "%9.2f", m[i * n + j]);
      std::printf("\n");
    }
  }

  void run_fiber(Context& ctx, double lambda) {
    if (!peak || !region || !exclusion) usage_error("--fiber needs --peak, --region and --exclusion");
    ig_field* f = nullptr;
    check(ig_field_read_csv(fiber.c_str(), lambda, &f));
    Field plane(f);
    const auto p = quantity_list(*peak, Dimension::Length, 2);
    const auto r = quantity_list(*region, Dimension::Length, 4);
    double db = 0.0, unc = 0.0;
    int below = 0;
    check(ig_fiber_background_ratio(plane.get(), p[0], p[1], r[0], r[1], r[2], r[3],
                                    quantity(*exclusion, Dimension::Length), &db, &unc, &below));
    const json j{{"value_db", below ? json("below_floor") : json(db)}, {"uncertainty_db", unc},
                 {"below_floor", below != 0}};
    if (ctx.format == Format::Json) std::cout << j.dump(2) << "\n";
    else if (ctx.format == Format::Csv) std::printf("value_db,uncertainty_db\n%.4f,%.4f\n", db, unc);
    else if (below) std::printf("background below measurement floor\n");
    else std::printf("background %.2f(%.2f) dB\n", db, unc);
  }
};

// ---- slitscan ----

void emit_trace(const ig_trace* t, const std::string& out, bool as_trace) {
  if (!out.empty()) {
    check(as_trace ? ig_trace_write(t, out.c_str()) : ig_profile_write(t, out.c_str()));
    return;
  }
  const std::size_t n = ig_trace_length(t);
  std::vector<double> x(n), v(n);
  check(ig_trace_data(t, x.data(), v.data()));
  std::cout << "position_um,intensity\n";
  for (std::size_t i = 0; i < n; ++i) std::printf("%.9g,%.12g\n", x[i] * 1e6, v[i]);
}

struct SimulateCmd {
  std::string profile, out;
  std::string slit = "5um", step = "1um";
  std::optional<double> floor_db;
  double sigma = 0.0;
  unsigned long long seed = 1;

  void run(Context&) {
    ig_trace* raw = nullptr;
    check(ig_profile_read(profile.c_str(), &raw));
    Trace p(raw);
    ig_noise noise{floor_db ? 1 : 0, floor_db.value_or(0.0), sigma, seed};
    check(ig_scan_simulate(p.get(), quantity(slit, Dimension::Length), quantity(step, Dimension::Length), &noise, &raw));
    Trace t(raw);
    emit_trace(t.get(), out, true);
  }
};

struct DeconvolveCmd {
  std::string trace, out;
  int iterations = 0;
  double tolerance = 0.0;

  void run(Context& ctx) {
    const auto tol = ctx.config_json()["tolerances"];
    ig_trace* raw = nullptr;
    check(ig_trace_read(trace.c_str(), &raw));
    Trace t(raw);
    int converged = 0;
    double residual = 0.0;
    check(ig_scan_deconvolve(t.get(), iterations > 0 ? iterations : tol["deconvolution_iterations"].get<int>(),
                             tolerance > 0.0 ? tolerance : tol["deconvolution_residual"].get<double>(), &raw,
                             &converged, &residual));
    Trace p(raw);
    if (!converged)
      std::cerr << "ionguide: warning code=not_converged residual=" << residual << "\n";
    emit_trace(p.get(), out, false);
  }
};

struct StitchCmd {
  std::vector<std::string> scans;
  std::string min_overlap = "1mm";
  std::string out;
  bool traces = true;

  void run(Context& ctx) {
    std::vector<Trace> owned;
    std::vector<const ig_trace*> ptrs;
    for (const auto& s : scans) {
      ig_trace* raw = nullptr;
      check(traces ? ig_trace_read(s.c_str(), &raw) : ig_profile_read(s.c_str(), &raw));
      owned.emplace_back(raw);
      ptrs.push_back(raw);
    }
    std::vector<double> gains(scans.size());
    ig_trace* raw = nullptr;
    check(ig_scan_stitch(ptrs.data(), ptrs.size(), quantity(min_overlap, Dimension::Length), &raw, gains.data()));
    Trace composite(raw);
    emit_trace(composite.get(), out, traces);
    if (!out.empty()) {
      if (ctx.format == Format::Json) std::cout << json{{"gains", gains}}.dump(2) << "\n";
      else
        for (std::size_t i = 0; i < gains.size(); ++i) std::printf("scan %zu gain %.9f\n", i, gains[i]);
    }
  }
};

struct ExtractCmd {
  std::string profile;
  std::string peak_a, peak_b;
  std::size_t points = 0;

  void run(Context& ctx) {
    ig_trace* raw = nullptr;
    check(ig_profile_read(profile.c_str(), &raw));
    Trace p(raw);
    const std::size_t n = points ? points : ctx.config_json()["tolerances"]["window_points"].get<std::size_t>();
    char* s = nullptr;
    check(ig_scan_extract(p.get(), quantity(peak_a, Dimension::Length), quantity(peak_b, Dimension::Length), n, &s));
    const json r = json::parse(take(s));
    if (ctx.format == Format::Table)
      std::printf("crosstalk %.2f(%.2f) dB%s\n", r["value_db"].get<double>(), r["uncertainty_db"].get<double>(),
                  r["floor_limited"].get<bool>() ? " [floor-limited]" : "");
    else if (ctx.format == Format::Csv)
      std::printf("value_db,uncertainty_db,floor_limited\n%.4f,%.4f,%d\n", r["value_db"].get<double>(),
                  r["uncertainty_db"].get<double>(), r["floor_limited"].get<bool>() ? 1 : 0);
    else
      std::cout << r.dump(2) << "\n";
  }
};

// ---- run ----

struct RunCmd {
  std::string scenario;

  void run(Context& ctx) {
    char* s = nullptr;
    int stage = IG_STAGE_NONE;
    const ig_status st = ig_run_scenario_file(scenario.c_str(), ctx.cfg(), &s, &stage);
    if (st != IG_OK) {
      try {
        raise_status(st);
      } catch (Failure& f) {
        if (stage != IG_STAGE_NONE) {
          f.exit_code = kExitStageBase + stage;
          f.stage = stage_name(stage);
        }
        throw;
      }
    }
    const json r = json::parse(take(s));
    if (ctx.format == Format::Json) {
      std::cout << r.dump(2) << "\n";
      return;
    }
    const auto& d = r["delivery"];
    std::printf("artifacts %s\n", r["artifact_dir"].get<std::string>().c_str());
    std::printf("facet n_eff %.6f\n", d["facet_mode"]["n_eff"].get<double>());
    std::printf("worst nearest-neighbour crosstalk %.2f dB (target %.1f dB: %s)\n",
                d["worst_nearest_neighbor_db"].get<double>(), d["target_db"].get<double>(),
                d["meets_target"].get<bool>() ? "met" : "missed");
    if (r.contains("metrology")) {
      const auto& c = r["metrology"]["crosstalk"];
      std::printf("metrology crosstalk %.2f(%.2f) dB%s\n", c["value_db"].get<double>(),
                  c["uncertainty_db"].get<double>(), c["floor_limited"].get<bool>() ? " [floor-limited]" : "");
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ionguide: waveguide delivery and slit-scan metrology toolkit"};
  app.set_version_flag("--version", std::string(ig_version()));
  app.require_subcommand(1);
  app.fallthrough();
  Context ctx;
  app.add_option("--config", ctx.config_path, "global JSON config")->check(CLI::ExistingFile);
  app.add_option("--format", ctx.format_flag, "table, csv or json");

  ModesCmd modes;
  auto* c_modes = app.add_subcommand("modes", "guided modes of a rectangular waveguide");
  modes.guide.add(c_modes);
  c_modes->add_option("--max-modes", modes.max_modes, "modes to request")->capture_default_str();
  c_modes->add_option("--field-out", modes.field_prefix, "write fields to PREFIX_<i>.csv");

  CutoffCmd cutoff;
  auto* c_cutoff = app.add_subcommand("cutoff", "single-mode cutoff width (or slab thickness)");
  cutoff.guide.add(c_cutoff, false);
  c_cutoff->add_flag("--slab", cutoff.slab, "cutoff thickness of the symmetric slab instead");
  c_cutoff->add_option("--tolerance", cutoff.tolerance, "bisection bracket width");

  TaperCmd taper;
  auto* c_taper = app.add_subcommand("taper", "mode size along the inverse taper");
  taper.guide.add(c_taper, false);
  c_taper->add_option("--start-width", taper.start_width, "wide end");
  c_taper->add_option("--end-width", taper.end_width, "tip width");
  c_taper->add_option("--length", taper.length, "taper length");
  c_taper->add_option("--segments", taper.segments, "segments for the adiabaticity check");
  c_taper->add_option("--points", taper.points, "sweep points")->capture_default_str();
  c_taper->add_flag("--adiabatic", taper.adiabatic, "run the adiabaticity check");
  c_taper->add_option("--safety", taper.safety, "adiabaticity safety factor");

  IonChainCmd chain;
  auto* c_chain = app.add_subcommand("ionchain", "equilibrium positions of a linear ion chain");
  c_chain->add_option("--n", chain.n, "number of ions")->required();
  c_chain->add_option("--mass-amu", chain.mass_amu, "ion mass in amu");
  c_chain->add_option("--mass", chain.mass, "ion mass with unit (e.g. 138amu)");
  c_chain->add_option("--axial-khz", chain.axial_khz, "axial secular frequency in kHz");
  c_chain->add_option("--axial-frequency", chain.axial, "axial secular frequency with unit (e.g. 34khz)");
  c_chain->add_option("--charge-e", chain.charge_e, "charge in elementary charges")->capture_default_str();

  DesignCmd design;
  auto* c_design = app.add_subcommand("design", "complete the 7-parameter design from 3 knowns");
  c_design->add_option("--set", design.sets, "name=value, name in w_c s_c na_c w_q s_q na_q M");
  c_design->add_option("--wavelength", design.wavelength, "wavelength (e.g. 650nm)");
  c_design->add_option("--na-constant", design.na_constant, "C in NA = C lambda / w");
  c_design->add_option("--input", design.input, "full design JSON to take knowns from")->check(CLI::ExistingFile);
  c_design->add_option("--keep", design.keep, "comma-separated names kept from --input");
  c_design->add_option("--chain-n", design.chain_n, "also check s_c against an ion chain of N ions");
  c_design->add_option("--chain-mass-amu", design.chain_mass_amu, "ion mass for the pitch check")->capture_default_str();
  c_design->add_option("--chain-axial-khz", design.chain_axial_khz, "axial frequency for the pitch check")
      ->capture_default_str();

  ImageCmd image;
  auto* c_image = app.add_subcommand("image", "ideal 4f imaging of a facet field");
  c_image->add_option("--in", image.in, "field CSV (x,y,re,im)")->check(CLI::ExistingFile);
  c_image->add_option("--gaussian", image.gaussian, "synthesize a Gaussian of this 1/e^2 radius instead");
  c_image->add_option("--nx", image.nx, "Gaussian grid columns")->capture_default_str();
  c_image->add_option("--ny", image.ny, "Gaussian grid rows")->capture_default_str();
  c_image->add_option("--dx", image.dx, "Gaussian grid spacing (default lambda/(4 NA))");
  c_image->add_option("--wavelength", image.wavelength, "wavelength");
  c_image->add_option("--magnification", image.magnification, "|M|")->capture_default_str();
  c_image->add_option("--na", image.na, "object-side NA")->capture_default_str();
  c_image->add_option("--out", image.out, "output field CSV");
  c_image->add_option("--intensity-out", image.intensity_out, "output intensity CSV");

  CrosstalkCmd xt;
  auto* c_xt = app.add_subcommand("crosstalk", "disc-integrated crosstalk matrix or fiber-scan background");
  c_xt->add_option("--channel", xt.channels, "single-channel field CSV (repeat)");
  c_xt->add_option("--target", xt.targets, "x,y target for the matching channel (repeat)");
  c_xt->add_option("--radius", xt.radius, "integration radius");
  c_xt->add_option("--wavelength", xt.wavelength, "wavelength tag for the fields");
  c_xt->add_option("--floor-db", xt.floor_db, "clamp for vanishing ratios")->capture_default_str();
  c_xt->add_option("--fiber", xt.fiber, "intensity plane CSV for a background ratio")->check(CLI::ExistingFile);
  c_xt->add_option("--peak", xt.peak, "x,y of the peak");
  c_xt->add_option("--region", xt.region, "x0,x1,y0,y1 background rectangle");
  c_xt->add_option("--exclusion", xt.exclusion, "exclusion radius around the peak");

  auto* c_scan = app.add_subcommand("slitscan", "scanning-slit metrology");
  c_scan->require_subcommand(1);
  SimulateCmd sim;
  auto* c_sim = c_scan->add_subcommand("simulate", "convolve a profile with the slit");
  c_sim->add_option("--profile", sim.profile, "profile CSV (position_um,intensity)")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--slit", sim.slit, "slit width")->capture_default_str();
  c_sim->add_option("--step", sim.step, "stage step")->capture_default_str();
  c_sim->add_option("--floor-db", sim.floor_db, "additive noise floor below the peak");
  c_sim->add_option("--sigma", sim.sigma, "proportional noise");
  c_sim->add_option("--seed", sim.seed, "noise seed")->capture_default_str();
  c_sim->add_option("--out", sim.out, "trace CSV (sidecar written next to it)");
  DeconvolveCmd dec;
  auto* c_dec = c_scan->add_subcommand("deconvolve", "remove the slit from a trace");
  c_dec->add_option("--trace", dec.trace, "trace CSV with sidecar")->required()->check(CLI::ExistingFile);
  c_dec->add_option("--iterations", dec.iterations, "iteration cap");
  c_dec->add_option("--tolerance", dec.tolerance, "relative L2 residual target");
  c_dec->add_option("--out", dec.out, "profile CSV");
  StitchCmd st;
  auto* c_st = c_scan->add_subcommand("stitch", "join overlapping scans");
  c_st->add_option("--scan", st.scans, "trace CSV (repeat, in order)")->required()->check(CLI::ExistingFile);
  c_st->add_option("--min-overlap", st.min_overlap, "minimum overlap")->capture_default_str();
  c_st->add_flag("!--profiles", st.traces, "inputs are plain profiles without sidecars");
  c_st->add_option("--out", st.out, "composite CSV");
  ExtractCmd ex;
  auto* c_ex = c_scan->add_subcommand("extract", "crosstalk between two peaks");
  c_ex->add_option("--profile", ex.profile, "profile CSV")->required()->check(CLI::ExistingFile);
  c_ex->add_option("--peak-a", ex.peak_a, "reference peak position")->required();
  c_ex->add_option("--peak-b", ex.peak_b, "neighbouring peak position")->required();
  c_ex->add_option("--points", ex.points, "window points");

  RunCmd run;
  auto* c_run = app.add_subcommand("run", "run a scenario config");
  c_run->add_option("scenario", run.scenario, "scenario JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    return app.exit(CLI::CallForHelp());
  } catch (const CLI::CallForAllHelp&) {
    return app.exit(CLI::CallForAllHelp());
  } catch (const CLI::CallForVersion&) {
    std::cout << ig_version() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    print_diagnostic({kExitUsage, "usage", "bad_usage", e.what(), ""});
    return kExitUsage;
  }

  try {
    ctx.resolve_format();
    if (c_modes->parsed()) modes.run(ctx);
    else if (c_cutoff->parsed()) cutoff.run(ctx);
    else if (c_taper->parsed()) taper.run(ctx);
    else if (c_chain->parsed()) chain.run(ctx);
    else if (c_design->parsed()) design.run(ctx);
    else if (c_image->parsed()) image.run(ctx);
    else if (c_xt->parsed()) xt.run(ctx);
    else if (c_sim->parsed()) sim.run(ctx);
    else if (c_dec->parsed()) dec.run(ctx);
    else if (c_st->parsed()) st.run(ctx);
    else if (c_ex->parsed()) ex.run(ctx);
    else if (c_run->parsed()) run.run(ctx);
  } catch (const Failure& f) {
    print_diagnostic(f);
    return f.exit_code;
  } catch (const json::exception& e) {
    print_diagnostic({kExitInternal, "internal", "bad_json", e.what(), ""});
    return kExitInternal;
  }
  return 0;
}
