#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ionguide/field.hpp"
#include "json.hpp"

namespace ionguide {

struct Profile1D {
  std::vector<double> positions;  // m, uniform step
  std::vector<double> values;     // linear intensity, >= 0

  void validate() const;
  double step() const;
  double integral() const;  // sum * step
};

struct ScanTrace {
  std::vector<double> positions;
  std::vector<double> values;
  double slit_width = 0.0;    // m
  double slit_height = 0.0;   // m, metadata
  double step = 0.0;          // m
  double modulation_hz = 0.0; // metadata
  std::optional<double> noise_floor;

  void validate() const;
  Profile1D profile() const { return {positions, values}; }
};

struct NoiseModel {
  // Additive noise uniform in [0, 2 L] where L sits floor_db below the
  // trace maximum; disabled when floor_db is unset.
  std::optional<double> floor_db;
  double proportional_sigma = 0.0;  // relative Gaussian noise
  std::uint64_t seed = 1;
};

// Scan positions run from `start` to `stop` (inclusive within step/1e6);
// the profile is zero outside its range.
ScanTrace simulate_scan(const Profile1D& profile, double slit_width, double step, double start, double stop,
                        const NoiseModel& noise = {});
// Full range: every slit position that overlaps the profile.
ScanTrace simulate_scan(const Profile1D& profile, double slit_width, double step, const NoiseModel& noise = {});

// Unit-sum top-hat over the trace sampling with fractional end weights.
std::vector<double> tophat_kernel(double slit_width, double step);

// Kernel applied with per-sample renormalisation at the edges.
std::vector<double> convolve_tophat(const std::vector<double>& values, const std::vector<double>& kernel);

struct DeconvolutionOptions {
  int iterations = 500;
  double residual_tolerance = 1e-6;  // relative L2
};

struct DeconvolutionResult {
  Profile1D profile;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

// Richardson-Lucy with the slit kernel, seeded with the trace mean.
DeconvolutionResult deconvolve(const ScanTrace& trace, const DeconvolutionOptions& opts = {});

struct StitchReport {
  Profile1D composite;
  std::vector<double> gains;  // per input, first is 1
};

// Later scans are scaled onto the composite by exp(mean log ratio) over the
// overlap's peak region (samples >= half the overlap maximum, contiguous
// around it). Overlapping samples are averaged.
StitchReport stitch_scans(const std::vector<Profile1D>& scans, double min_overlap);

struct CrosstalkReport {
  double value_db = 0.0;
  double uncertainty_db = 0.0;
  double peak_position = 0.0;
  double peak_height = 0.0;
  double other_peak_position = 0.0;
  std::pair<double, double> window{0.0, 0.0};
  std::size_t n_window_points = 0;
  bool floor_limited = false;
};

struct ExtractOptions {
  std::size_t n_points = 1000;
  int search_steps = 3;
  std::optional<double> noise_floor;  // absolute intensity
  double numerical_floor_db = -150.0;
};

// Peak hints are refined to the local maximum within +-search_steps and a
// parabolic vertex.
std::pair<double, double> locate_peak(const Profile1D& profile, double hint, int search_steps = 3);

CrosstalkReport extract_crosstalk(const Profile1D& profile, double peak_a, double peak_b,
                                  const ExtractOptions& opts = {});

nlohmann::json report_to_json(const CrosstalkReport& r);

struct Rect {
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
};

struct BackgroundRatio {
  double value_db = 0.0;  // -inf when the background is exactly zero
  double uncertainty_db = 0.0;
  std::size_t n_points = 0;
  bool below_floor = false;
};

// Unnormalised comparison of the mean |E|^2 in `region` to the peak
// (largest sample within exclusion_radius of `peak`).
BackgroundRatio fiber_scan_background_ratio(const ScalarField2D& plane, std::pair<double, double> peak,
                                            const Rect& region, double exclusion_radius);

// Trace files: CSV `position_um,intensity` plus sidecar JSON
// {slit_width_um, step_um, slit_height_mm, modulation_hz} at <csv>.json.
ScanTrace read_trace(const std::string& csv_path);
ScanTrace read_trace(const std::string& csv_path, const std::string& sidecar_path);
void write_trace(const ScanTrace& trace, const std::string& csv_path);
Profile1D read_profile_csv(const std::string& path);
void write_profile_csv(const Profile1D& profile, const std::string& path);
std::string sidecar_path_for(const std::string& csv_path);

}  // namespace ionguide
