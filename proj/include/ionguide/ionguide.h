/* ionguide C interface. All lengths in metres, frequencies in hertz. */
#ifndef IONGUIDE_H
#define IONGUIDE_H

#include <stddef.h>

#if defined(_WIN32)
#  if defined(IONGUIDE_BUILDING)
#    define IG_API __declspec(dllexport)
#  else
#    define IG_API __declspec(dllimport)
#  endif
#else
#  define IG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ig_status {
  IG_OK = 0,
  IG_ERR_VALIDATION = 1,
  IG_ERR_COMPUTATION = 2,
  IG_ERR_IO = 3,
  IG_ERR_INTERNAL = 4
} ig_status;

typedef enum ig_polarization { IG_TE = 0, IG_TM = 1 } ig_polarization;

/* Scenario stages, reported by ig_run_scenario on failure. */
typedef enum ig_stage {
  IG_STAGE_NONE = -1,
  IG_STAGE_CONFIG = 0,
  IG_STAGE_MODE,
  IG_STAGE_TAPER,
  IG_STAGE_CHAIN,
  IG_STAGE_LAYOUT,
  IG_STAGE_IMAGING,
  IG_STAGE_CROSSTALK,
  IG_STAGE_PROFILE,
  IG_STAGE_SCAN,
  IG_STAGE_STITCH,
  IG_STAGE_DECONVOLVE,
  IG_STAGE_EXTRACT,
  IG_STAGE_ARTIFACTS
} ig_stage;

typedef struct ig_config ig_config;
typedef struct ig_mode_set ig_mode_set;
typedef struct ig_field ig_field;
typedef struct ig_trace ig_trace;

typedef struct ig_waveguide {
  double core_width;
  double core_thickness;
  double n_core;
  double n_clad;
  double wavelength;
} ig_waveguide;

typedef struct ig_grid_resolution {
  double dx;
  double dy;
  double margin;
} ig_grid_resolution;

typedef struct ig_taper {
  double start_width;
  double end_width;
  double length;
  size_t segments;
} ig_taper;

typedef struct ig_ion_chain_spec {
  size_t n_ions;
  double mass;            /* kg */
  double axial_frequency; /* Hz */
  double charge;          /* C */
} ig_ion_chain_spec;

typedef struct ig_coupling {
  double n_even;
  double n_odd;
  double kappa;
  double cross_power;
} ig_coupling;

typedef struct ig_noise {
  int has_floor;
  double floor_db;
  double proportional_sigma;
  unsigned long long seed;
} ig_noise;

/* Strings returned through char** are owned by the caller. */
IG_API void ig_string_free(char* s);
IG_API const char* ig_version(void);

/* Message and short code of the last failure on this thread. */
IG_API const char* ig_last_error(void);
IG_API const char* ig_last_error_code(void);

/* Global configuration (constants, materials, tolerances, defaults). */
IG_API ig_status ig_config_default(ig_config** out);
IG_API ig_status ig_config_load(const char* path, ig_config** out);
IG_API ig_status ig_config_from_json(const char* json, ig_config** out);
IG_API ig_status ig_config_to_json(const ig_config* cfg, char** json_out);
/* Default facet waveguide from the config's materials and design defaults. */
IG_API ig_status ig_config_waveguide(const ig_config* cfg, ig_waveguide* out);
IG_API ig_status ig_config_resolution(const ig_config* cfg, ig_grid_resolution* out);
IG_API void ig_config_free(ig_config* cfg);

/* Mode solving. */
IG_API ig_status ig_solve_modes(const ig_waveguide* geom, const ig_grid_resolution* res, ig_polarization pol,
                                size_t max_modes, ig_mode_set** out);
IG_API size_t ig_mode_set_count(const ig_mode_set* set);
IG_API ig_status ig_mode_set_n_eff(const ig_mode_set* set, size_t index, double* n_eff);
IG_API ig_status ig_mode_set_field(const ig_mode_set* set, size_t index, ig_field** out);
IG_API ig_status ig_mode_set_summary_json(const ig_mode_set* set, char** json_out);
IG_API void ig_mode_set_free(ig_mode_set* set);

IG_API ig_status ig_single_mode_cutoff(const ig_waveguide* templ, const ig_grid_resolution* res, ig_polarization pol,
                                       double tolerance, double* width);
IG_API ig_status ig_slab_cutoff(double n_core, double n_clad, double wavelength, double dy, double margin,
                                ig_polarization pol, double* thickness);
IG_API ig_status ig_coupled_pair(const ig_waveguide* geom, const ig_grid_resolution* res, ig_polarization pol,
                                 double separation, double length, ig_coupling* out);

/* Taper. Results as JSON. */
IG_API ig_status ig_taper_sweep(const ig_waveguide* templ, const ig_grid_resolution* res, ig_polarization pol,
                                const double* widths, size_t n_widths, char** json_out);
IG_API ig_status ig_taper_adiabaticity(const ig_waveguide* templ, const ig_grid_resolution* res, ig_polarization pol,
                                       const ig_taper* taper, double safety_factor, char** json_out);

/* Ion chain. positions must hold n_ions values. */
IG_API ig_status ig_ion_length_scale(const ig_ion_chain_spec* spec, double* length_scale);
IG_API ig_status ig_ion_chain_positions(const ig_ion_chain_spec* spec, double* positions, double* length_scale);
IG_API ig_status ig_ion_chain_csv(const ig_ion_chain_spec* spec, char** csv_out);

/* Design. known_json maps three names (w_c s_c na_c w_q s_q na_q M) to SI values. */
IG_API ig_status ig_design_solve(const char* known_json, double wavelength, double na_spot_constant, char** json_out);
IG_API ig_status ig_design_pitch_check(double spacing_chip, const double* ion_positions, size_t n, double band_low,
                                       double band_high, double* ratio, int* in_band);

/* Fields. */
IG_API ig_status ig_field_read_csv(const char* path, double wavelength, ig_field** out);
IG_API ig_status ig_field_write_csv(const ig_field* f, const char* path);
IG_API ig_status ig_field_write_intensity_csv(const ig_field* f, const char* path);
/* exp(-r^2 / w^2) amplitude, i.e. 1/e^2 intensity radius w. */
IG_API ig_status ig_field_gaussian(size_t nx, size_t ny, double dx, double dy, double wavelength, double waist,
                                   double cx, double cy, ig_field** out);
IG_API ig_status ig_field_info(const ig_field* f, size_t* nx, size_t* ny, double* dx, double* dy, double* x0,
                               double* y0);
IG_API ig_status ig_field_power(const ig_field* f, double* power);
IG_API void ig_field_free(ig_field* f);

IG_API ig_status ig_image_field(const ig_field* f, double magnification, double numerical_aperture, ig_field** out);
/* Translated copies of `mode` composed on a covering grid (incoherent unless coherent != 0). */
IG_API ig_status ig_compose_facet(const ig_field* mode, const double* positions, size_t n, double dx, double margin,
                                  int coherent, ig_field** out);
/* targets_xy holds n (x, y) pairs; matrix_out holds n*n row-major dB values. */
IG_API ig_status ig_crosstalk_matrix(const ig_field* const* per_channel, size_t n, const double* targets_xy,
                                     double radius, double floor_db, double* matrix_out);
IG_API ig_status ig_fiber_background_ratio(const ig_field* plane, double peak_x, double peak_y, double x0, double x1,
                                           double y0, double y1, double exclusion_radius, double* value_db,
                                           double* uncertainty_db, int* below_floor);

/* Scan traces and profiles. */
IG_API ig_status ig_profile_read(const char* csv_path, ig_trace** out);
IG_API ig_status ig_profile_write(const ig_trace* t, const char* csv_path);
IG_API ig_status ig_trace_read(const char* csv_path, ig_trace** out);
IG_API ig_status ig_trace_write(const ig_trace* t, const char* csv_path);
IG_API ig_status ig_trace_from_arrays(const double* positions, const double* values, size_t n, double slit_width,
                                      double step, ig_trace** out);
IG_API size_t ig_trace_length(const ig_trace* t);
IG_API ig_status ig_trace_data(const ig_trace* t, double* positions, double* values);
IG_API void ig_trace_free(ig_trace* t);

IG_API ig_status ig_scan_simulate(const ig_trace* profile, double slit_width, double step, const ig_noise* noise,
                                  ig_trace** out);
IG_API ig_status ig_scan_deconvolve(const ig_trace* trace, int iterations, double residual_tolerance, ig_trace** out,
                                    int* converged, double* residual);
/* gains_out may be null or hold n values. */
IG_API ig_status ig_scan_stitch(const ig_trace* const* scans, size_t n, double min_overlap, ig_trace** out,
                                double* gains_out);
IG_API ig_status ig_scan_extract(const ig_trace* profile, double peak_a, double peak_b, size_t n_points,
                                 char** json_out);

/* Scenario runner. On failure *failed_stage names the stage; the report
   JSON includes "artifact_dir". cfg may be null for defaults. */
IG_API ig_status ig_run_scenario_file(const char* path, const ig_config* cfg, char** report_json, int* failed_stage);
IG_API ig_status ig_run_scenario_json(const char* json, const ig_config* cfg, char** report_json, int* failed_stage);

#ifdef __cplusplus
}
#endif

#endif
