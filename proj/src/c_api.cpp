#include "ionguide/ionguide.h"

#include <cstring>
#include <new>
#include <string>

#include "ionguide/beam_train.hpp"
#include "ionguide/config.hpp"
#include "ionguide/design_solver.hpp"
#include "ionguide/ion_chain.hpp"
#include "ionguide/mode_solver.hpp"
#include "ionguide/pipeline.hpp"
#include "ionguide/slit_scan.hpp"
#include "ionguide/taper.hpp"

struct ig_config {
  ionguide::GlobalConfig cfg;
};

struct ig_mode_set {
  std::vector<ionguide::GuidedMode> modes;
};

struct ig_field {
  ionguide::ScalarField2D field;
};

struct ig_trace {
  ionguide::ScanTrace trace;
};

namespace {

using namespace ionguide;
using nlohmann::json;

thread_local std::string g_error;
thread_local std::string g_code;

ig_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::Validation: return IG_ERR_VALIDATION;
    case ErrorKind::Computation: return IG_ERR_COMPUTATION;
    case ErrorKind::Io: return IG_ERR_IO;
  }
  return IG_ERR_INTERNAL;
}

template <typename F>
ig_status guard(F&& f) {
  try {
    f();
    g_error.clear();
    g_code.clear();
    return IG_OK;
  } catch (const Error& e) {
    g_error = e.what();
    g_code = e.code();
    return status_of(e.kind());
  } catch (const json::exception& e) {
    g_error = e.what();
    g_code = "bad_json";
    return IG_ERR_VALIDATION;
  } catch (const std::bad_alloc&) {
    g_error = "out of memory";
    g_code = "out_of_memory";
    return IG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_error = e.what();
    g_code = "internal";
    return IG_ERR_INTERNAL;
  } catch (...) {
    g_error = "unknown failure";
    g_code = "internal";
    return IG_ERR_INTERNAL;
  }
}

template <typename... P>
void require(const P*... ptrs) {
  if (((ptrs == nullptr) || ...)) fail_validation("null_argument", "a required pointer argument is null");
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

Polarization pol_of(ig_polarization p) {
  if (p == IG_TE) return Polarization::TE;
  if (p == IG_TM) return Polarization::TM;
  fail_validation("invalid_polarization", "polarization must be IG_TE or IG_TM");
}

WaveguideGeometry geom_of(const ig_waveguide* g) {
  return {g->core_width, g->core_thickness, g->n_core, g->n_clad, g->wavelength};
}

GridResolution res_of(const ig_grid_resolution* r) { return {r->dx, r->dy, r->margin}; }

IonChainSpec spec_of(const ig_ion_chain_spec* s) { return {s->n_ions, s->mass, s->axial_frequency, s->charge}; }

const GlobalConfig& config_or_default(const ig_config* c) {
  static const GlobalConfig defaults;
  return c ? c->cfg : defaults;
}

ig_status run_scenario_with(const std::string& source, bool from_file, const ig_config* cfg, char** report_json,
                            int* failed_stage) {
  if (failed_stage) *failed_stage = IG_STAGE_NONE;
  return guard([&] {
    require(report_json);
    try {
      ScenarioConfig sc;
      try {
        sc = from_file ? load_scenario(source) : scenario_from_json(json::parse(source));
      } catch (const StageError&) {
        throw;
      } catch (const Error& e) {
        throw StageError(Stage::Config, e);
      } catch (const json::exception& e) {
        throw StageError(Stage::Config, Error(ErrorKind::Io, "bad_format", e.what()));
      }
      auto out = run_scenario(sc, config_or_default(cfg));
      out.report["artifact_dir"] = out.artifact_dir;
      *report_json = dup(out.report.dump(2));
    } catch (const StageError& e) {
      if (failed_stage) *failed_stage = static_cast<int>(e.stage());
      throw;
    }
  });
}

}  // namespace

extern "C" {

void ig_string_free(char* s) { std::free(s); }

const char* ig_version(void) { return IONGUIDE_VERSION; }

const char* ig_last_error(void) { return g_error.c_str(); }

const char* ig_last_error_code(void) { return g_code.c_str(); }

ig_status ig_config_default(ig_config** out) {
  return guard([&] {
    require(out);
    *out = new ig_config{};
  });
}

ig_status ig_config_load(const char* path, ig_config** out) {
  return guard([&] {
    require(path, out);
    auto cfg = load_config(path);
    *out = new ig_config{std::move(cfg)};
  });
}

ig_status ig_config_from_json(const char* text, ig_config** out) {
  return guard([&] {
    require(text, out);
    auto cfg = config_from_json(json::parse(text));
    cfg.validate();
    *out = new ig_config{std::move(cfg)};
  });
}

ig_status ig_config_to_json(const ig_config* cfg, char** json_out) {
  return guard([&] {
    require(cfg, json_out);
    *json_out = dup(config_to_json(cfg->cfg).dump(2));
  });
}

ig_status ig_config_waveguide(const ig_config* cfg, ig_waveguide* out) {
  return guard([&] {
    require(out);
    const auto& c = config_or_default(cfg);
    *out = {c.defaults.core_width, c.defaults.core_thickness, c.core_index(), c.clad_index(), c.defaults.wavelength};
  });
}

ig_status ig_config_resolution(const ig_config* cfg, ig_grid_resolution* out) {
  return guard([&] {
    require(out);
    const auto& c = config_or_default(cfg);
    *out = {c.defaults.grid_resolution, c.defaults.grid_resolution, c.defaults.grid_margin};
  });
}

void ig_config_free(ig_config* cfg) { delete cfg; }

ig_status ig_solve_modes(const ig_waveguide* geom, const ig_grid_resolution* res, ig_polarization pol,
                         size_t max_modes, ig_mode_set** out) {
  return guard([&] {
    require(geom, res, out);
    const auto g = geom_of(geom);
    auto modes = solve_modes(g, res_of(res).grid_for(g.core_width, g.core_thickness), pol_of(pol), max_modes);
    *out = new ig_mode_set{std::move(modes)};
  });
}

size_t ig_mode_set_count(const ig_mode_set* set) { return set ? set->modes.size() : 0; }

ig_status ig_mode_set_n_eff(const ig_mode_set* set, size_t index, double* n_eff) {
  return guard([&] {
    require(set, n_eff);
    if (index >= set->modes.size()) fail_validation("index_out_of_range", "mode index out of range");
    *n_eff = set->modes[index].n_eff;
  });
}

ig_status ig_mode_set_field(const ig_mode_set* set, size_t index, ig_field** out) {
  return guard([&] {
    require(set, out);
    if (index >= set->modes.size()) fail_validation("index_out_of_range", "mode index out of range");
    *out = new ig_field{set->modes[index].field};
  });
}

ig_status ig_mode_set_summary_json(const ig_mode_set* set, char** json_out) {
  return guard([&] {
    require(set, json_out);
    json j = json::array();
    for (const auto& m : set->modes) j.push_back(mode_summary(m));
    *json_out = dup(j.dump(2));
  });
}

void ig_mode_set_free(ig_mode_set* set) { delete set; }

ig_status ig_single_mode_cutoff(const ig_waveguide* templ, const ig_grid_resolution* res, ig_polarization pol,
                                double tolerance, double* width) {
  return guard([&] {
    require(templ, res, width);
    CutoffOptions opts;
    if (tolerance > 0.0) opts.tolerance = tolerance;
    *width = single_mode_cutoff_width(geom_of(templ), res_of(res), pol_of(pol), opts);
  });
}

ig_status ig_slab_cutoff(double n_core, double n_clad, double wavelength, double dy, double margin,
                         ig_polarization pol, double* thickness) {
  return guard([&] {
    require(thickness);
    *thickness = slab_cutoff_thickness(n_core, n_clad, wavelength, dy, margin, pol_of(pol));
  });
}

ig_status ig_coupled_pair(const ig_waveguide* geom, const ig_grid_resolution* res, ig_polarization pol,
                          double separation, double length, ig_coupling* out) {
  return guard([&] {
    require(geom, res, out);
    const auto c = coupled_pair_crosstalk(geom_of(geom), res_of(res), pol_of(pol), separation, length);
    *out = {c.n_even, c.n_odd, c.kappa, c.cross_power};
  });
}

ig_status ig_taper_sweep(const ig_waveguide* templ, const ig_grid_resolution* res, ig_polarization pol,
                         const double* widths, size_t n_widths, char** json_out) {
  return guard([&] {
    require(templ, res, widths, json_out);
    const std::vector<double> w(widths, widths + n_widths);
    const auto g = geom_of(templ);
    double widest = 0.0;
    for (double x : w) widest = std::max(widest, x);
    if (!(widest > 0.0)) fail_validation("invalid_geometry", "taper widths must be positive");
    const auto sweep = taper_sweep(g, w, res_of(res).grid_for(widest, g.core_thickness), pol_of(pol));
    json j = json::array();
    for (const auto& p : sweep)
      j.push_back({{"width", p.width}, {"mfd_x", p.mfd.mfd_x}, {"mfd_y", p.mfd.mfd_y}, {"n_eff", p.n_eff}});
    *json_out = dup(j.dump(2));
  });
}

ig_status ig_taper_adiabaticity(const ig_waveguide* templ, const ig_grid_resolution* res, ig_polarization pol,
                                const ig_taper* taper, double safety_factor, char** json_out) {
  return guard([&] {
    require(templ, res, taper, json_out);
    TaperProfile p;
    p.start_width = taper->start_width;
    p.end_width = taper->end_width;
    p.length = taper->length;
    p.n_segments = taper->segments;
    const auto g = geom_of(templ);
    const auto r = adiabaticity_check(p, g, res_of(res).grid_for(p.start_width, g.core_thickness), safety_factor,
                                      pol_of(pol));
    json seg = json::array();
    for (const auto& s : r.segments)
      seg.push_back({{"z", s.z}, {"width", s.width}, {"n_eff", s.n_eff}, {"ratio", s.ratio}});
    *json_out = dup(json{{"pass", r.pass},
                         {"worst_ratio", r.worst_ratio},
                         {"worst_position", r.worst_position},
                         {"segments", seg}}
                        .dump(2));
  });
}

ig_status ig_ion_length_scale(const ig_ion_chain_spec* spec, double* length_scale) {
  return guard([&] {
    require(spec, length_scale);
    *length_scale = ionguide::length_scale(spec_of(spec));
  });
}

ig_status ig_ion_chain_positions(const ig_ion_chain_spec* spec, double* positions, double* length_scale) {
  return guard([&] {
    require(spec, positions);
    const auto c = physical_positions(spec_of(spec));
    std::copy(c.positions.begin(), c.positions.end(), positions);
    if (length_scale) *length_scale = c.length_scale;
  });
}

ig_status ig_ion_chain_csv(const ig_ion_chain_spec* spec, char** csv_out) {
  return guard([&] {
    require(spec, csv_out);
    *csv_out = dup(chain_csv(physical_positions(spec_of(spec))));
  });
}

ig_status ig_design_solve(const char* known_json, double wavelength, double na_spot_constant, char** json_out) {
  return guard([&] {
    require(known_json, json_out);
    const auto j = json::parse(known_json);
    if (!j.is_object()) fail_validation("invalid_known_set", "known parameters must be a JSON object");
    KnownSet known;
    for (auto it = j.begin(); it != j.end(); ++it)
      known.emplace_back(design_param_from_string(it.key()), it.value().get<double>());
    DesignSolverOptions opts;
    if (na_spot_constant > 0.0) opts.na_spot_constant = na_spot_constant;
    *json_out = dup(design_to_json(solve_design(known, wavelength, opts)).dump(2));
  });
}

ig_status ig_design_pitch_check(double spacing_chip, const double* ion_positions, size_t n, double band_low,
                                double band_high, double* ratio, int* in_band) {
  return guard([&] {
    require(ion_positions, ratio);
    IonChain chain;
    chain.positions.assign(ion_positions, ion_positions + n);
    DesignParameters p;
    p.spacing_chip = spacing_chip;
    const auto r = check_pitch_ratio(p, chain, band_low, band_high);
    *ratio = r.ratio;
    if (in_band) *in_band = r.in_band ? 1 : 0;
  });
}

ig_status ig_field_read_csv(const char* path, double wavelength, ig_field** out) {
  return guard([&] {
    require(path, out);
    *out = new ig_field{read_field_csv(path, wavelength)};
  });
}

ig_status ig_field_write_csv(const ig_field* f, const char* path) {
  return guard([&] {
    require(f, path);
    write_field_csv(f->field, path);
  });
}

ig_status ig_field_write_intensity_csv(const ig_field* f, const char* path) {
  return guard([&] {
    require(f, path);
    write_intensity_csv(f->field, path);
  });
}

ig_status ig_field_gaussian(size_t nx, size_t ny, double dx, double dy, double wavelength, double waist, double cx,
                            double cy, ig_field** out) {
  return guard([&] {
    require(out);
    if (nx < 2 || ny < 2 || !(dx > 0.0) || !(dy > 0.0) || !(waist > 0.0) || !(wavelength > 0.0))
      fail_validation("invalid_field", "Gaussian needs a 2x2 grid, positive spacing, waist and wavelength");
    ScalarField2D f(FieldGrid::centered(nx, ny, dx, dy), wavelength);
    const auto& g = f.grid();
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const double r2 = std::pow(g.x(i) - cx, 2) + std::pow(g.y(j) - cy, 2);
        f.at(i, j) = std::exp(-r2 / (waist * waist));
      }
    *out = new ig_field{std::move(f)};
  });
}

ig_status ig_field_info(const ig_field* f, size_t* nx, size_t* ny, double* dx, double* dy, double* x0, double* y0) {
  return guard([&] {
    require(f);
    const auto& g = f->field.grid();
    if (nx) *nx = g.nx;
    if (ny) *ny = g.ny;
    if (dx) *dx = g.dx;
    if (dy) *dy = g.dy;
    if (x0) *x0 = g.x0;
    if (y0) *y0 = g.y0;
  });
}

ig_status ig_field_power(const ig_field* f, double* power) {
  return guard([&] {
    require(f, power);
    *power = f->field.power();
  });
}

void ig_field_free(ig_field* f) { delete f; }

ig_status ig_image_field(const ig_field* f, double magnification, double numerical_aperture, ig_field** out) {
  return guard([&] {
    require(f, out);
    *out = new ig_field{image_field(f->field, {magnification, numerical_aperture})};
  });
}

ig_status ig_compose_facet(const ig_field* mode, const double* positions, size_t n, double dx, double margin,
                           int coherent, ig_field** out) {
  return guard([&] {
    require(mode, positions, out);
    ChannelLayout layout;
    layout.positions.assign(positions, positions + n);
    layout.mode = mode->field;
    const auto grid = layout_grid(layout, dx, dx, margin);
    *out = new ig_field{
        compose_facet_field(layout, grid, coherent ? Summation::Coherent : Summation::Incoherent)};
  });
}

ig_status ig_crosstalk_matrix(const ig_field* const* per_channel, size_t n, const double* targets_xy, double radius,
                              double floor_db, double* matrix_out) {
  return guard([&] {
    require(per_channel, targets_xy, matrix_out);
    std::vector<std::pair<double, double>> targets;
    std::vector<std::vector<double>> powers;
    for (size_t k = 0; k < n; ++k) targets.emplace_back(targets_xy[2 * k], targets_xy[2 * k + 1]);
    for (size_t k = 0; k < n; ++k) {
      require(per_channel[k]);
      powers.push_back(disc_powers(per_channel[k]->field, targets, radius));
    }
    const auto m = crosstalk_from_powers(powers, floor_db);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) matrix_out[i * n + j] = m[i][j];
  });
}

ig_status ig_fiber_background_ratio(const ig_field* plane, double peak_x, double peak_y, double x0, double x1,
                                    double y0, double y1, double exclusion_radius, double* value_db,
                                    double* uncertainty_db, int* below_floor) {
  return guard([&] {
    require(plane, value_db);
    const auto r = fiber_scan_background_ratio(plane->field, {peak_x, peak_y}, {x0, x1, y0, y1}, exclusion_radius);
    *value_db = r.value_db;
    if (uncertainty_db) *uncertainty_db = r.uncertainty_db;
    if (below_floor) *below_floor = r.below_floor ? 1 : 0;
  });
}

ig_status ig_profile_read(const char* csv_path, ig_trace** out) {
  return guard([&] {
    require(csv_path, out);
    auto p = read_profile_csv(csv_path);
    p.validate();
    ScanTrace t;
    t.positions = std::move(p.positions);
    t.values = std::move(p.values);
    *out = new ig_trace{std::move(t)};
  });
}

ig_status ig_profile_write(const ig_trace* t, const char* csv_path) {
  return guard([&] {
    require(t, csv_path);
    write_profile_csv(t->trace.profile(), csv_path);
  });
}

ig_status ig_trace_read(const char* csv_path, ig_trace** out) {
  return guard([&] {
    require(csv_path, out);
    *out = new ig_trace{read_trace(csv_path)};
  });
}

ig_status ig_trace_write(const ig_trace* t, const char* csv_path) {
  return guard([&] {
    require(t, csv_path);
    if (t->trace.slit_width > 0.0) write_trace(t->trace, csv_path);
    else write_profile_csv(t->trace.profile(), csv_path);
  });
}

ig_status ig_trace_from_arrays(const double* positions, const double* values, size_t n, double slit_width,
                               double step, ig_trace** out) {
  return guard([&] {
    require(positions, values, out);
    ScanTrace t;
    t.positions.assign(positions, positions + n);
    t.values.assign(values, values + n);
    t.slit_width = slit_width;
    t.step = step;
    if (slit_width > 0.0) t.validate();
    else t.profile().validate();
    *out = new ig_trace{std::move(t)};
  });
}

size_t ig_trace_length(const ig_trace* t) { return t ? t->trace.values.size() : 0; }

ig_status ig_trace_data(const ig_trace* t, double* positions, double* values) {
  return guard([&] {
    require(t);
    if (positions) std::copy(t->trace.positions.begin(), t->trace.positions.end(), positions);
    if (values) std::copy(t->trace.values.begin(), t->trace.values.end(), values);
  });
}

void ig_trace_free(ig_trace* t) { delete t; }

ig_status ig_scan_simulate(const ig_trace* profile, double slit_width, double step, const ig_noise* noise,
                           ig_trace** out) {
  return guard([&] {
    require(profile, out);
    NoiseModel nm;
    if (noise) {
      if (noise->has_floor) nm.floor_db = noise->floor_db;
      nm.proportional_sigma = noise->proportional_sigma;
      nm.seed = noise->seed;
    }
    *out = new ig_trace{simulate_scan(profile->trace.profile(), slit_width, step, nm)};
  });
}

ig_status ig_scan_deconvolve(const ig_trace* trace, int iterations, double residual_tolerance, ig_trace** out,
                             int* converged, double* residual) {
  return guard([&] {
    require(trace, out);
    DeconvolutionOptions opts;
    if (iterations > 0) opts.iterations = iterations;
    if (residual_tolerance > 0.0) opts.residual_tolerance = residual_tolerance;
    auto r = deconvolve(trace->trace, opts);
    ScanTrace t;
    t.positions = std::move(r.profile.positions);
    t.values = std::move(r.profile.values);
    if (converged) *converged = r.converged ? 1 : 0;
    if (residual) *residual = r.residual;
    *out = new ig_trace{std::move(t)};
  });
}

ig_status ig_scan_stitch(const ig_trace* const* scans, size_t n, double min_overlap, ig_trace** out,
                         double* gains_out) {
  return guard([&] {
    require(scans, out);
    std::vector<Profile1D> profiles;
    for (size_t k = 0; k < n; ++k) {
      require(scans[k]);
      profiles.push_back(scans[k]->trace.profile());
    }
    auto r = stitch_scans(profiles, min_overlap);
    ScanTrace t;
    if (n > 0) {
      t = scans[0]->trace;
    }
    t.positions = std::move(r.composite.positions);
    t.values = std::move(r.composite.values);
    if (gains_out) std::copy(r.gains.begin(), r.gains.end(), gains_out);
    *out = new ig_trace{std::move(t)};
  });
}

ig_status ig_scan_extract(const ig_trace* profile, double peak_a, double peak_b, size_t n_points, char** json_out) {
  return guard([&] {
    require(profile, json_out);
    ExtractOptions opts;
    if (n_points > 0) opts.n_points = n_points;
    opts.noise_floor = profile->trace.noise_floor;
    *json_out = dup(report_to_json(extract_crosstalk(profile->trace.profile(), peak_a, peak_b, opts)).dump(2));
  });
}

ig_status ig_run_scenario_file(const char* path, const ig_config* cfg, char** report_json, int* failed_stage) {
  if (!path) return guard([] { fail_validation("null_argument", "scenario path is null"); });
  return run_scenario_with(path, true, cfg, report_json, failed_stage);
}

ig_status ig_run_scenario_json(const char* text, const ig_config* cfg, char** report_json, int* failed_stage) {
  if (!text) return guard([] { fail_validation("null_argument", "scenario JSON is null"); });
  return run_scenario_with(text, false, cfg, report_json, failed_stage);
}

}  // extern "C"
