#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ionguide/beam_train.hpp"
#include "ionguide/config.hpp"
#include "ionguide/error.hpp"
#include "ionguide/ion_chain.hpp"
#include "ionguide/mode_solver.hpp"
#include "ionguide/slit_scan.hpp"
#include "ionguide/taper.hpp"
#include "json.hpp"

namespace ionguide {

enum class Stage {
  Config,
  Mode,
  Taper,
  Chain,
  Layout,
  Imaging,
  Crosstalk,
  Profile,
  Scan,
  Stitch,
  Deconvolve,
  Extract,
  Artifacts,
};

std::string_view to_string(Stage s);

// Any failure inside a scenario, tagged with the one stage that raised it.
class StageError : public Error {
 public:
  StageError(Stage stage, const Error& inner)
      : Error(inner.kind(), inner.code(), std::string(to_string(stage)) + ": " + inner.what()), stage_(stage) {}
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

enum class LayoutMode { PitchFactor, InverseMagnification, Explicit };

struct MetrologySettings {
  bool enabled = false;
  double magnification = 50.0;
  double numerical_aperture = 0.55;
  double slit_width = 5e-6;
  double step = 1e-6;
  double slit_height = 1.6e-3;
  double modulation_hz = 28.1e3;
  double segment_length = 10e-3;
  double segment_overlap = 2e-3;
  double lead = 1e-3;  // scan range beyond the outer peaks
  std::vector<double> gain_drift{1.0};
  std::optional<double> pedestal_db;
  NoiseModel noise;
  std::vector<std::size_t> peak_pair;  // channel indices; default central pair
  std::size_t window_points = 1000;
  double single_mode_margin = 10e-6;  // chip-plane half extent of the single-spot image
  std::vector<std::string> recorded_traces;
  std::vector<double> peak_hints;  // m, required with recorded traces
};

struct ScenarioConfig {
  // Facet waveguide; the core width is the taper end width.
  double core_thickness = 150e-9;
  double wavelength = 650e-9;
  std::optional<double> n_core;
  std::optional<double> n_clad;
  Polarization polarization = Polarization::TE;
  double grid_dx = 20e-9;
  double grid_dy = 20e-9;
  double grid_margin = 2e-6;

  TaperProfile taper;
  bool check_adiabaticity = false;

  std::size_t n_ions = 8;
  double ion_mass_amu = 138.0;
  double axial_frequency = 34e3;
  double ion_charge_e = 1.0;

  LayoutMode layout = LayoutMode::PitchFactor;
  double pitch_factor = 5.0;
  std::vector<double> explicit_positions;

  ImagingSystemSpec imaging{0.2, 0.55};
  Summation summation = Summation::Incoherent;
  double facet_dx = 0.0;  // 0: lambda / (8 NA)
  double facet_margin = 30e-6;
  std::optional<double> integration_radius;
  double crosstalk_target_db = -50.0;

  MetrologySettings metrology;
  std::string output_dir = "scenario_out";

  void validate() const;
};

ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);
ScenarioConfig load_scenario(const std::string& path);

// 16 hex digits of FNV-1a over the canonical config dump.
std::string config_hash(const ScenarioConfig& cfg);

struct DeliveryResult {
  GuidedMode facet_mode;
  IonChain chain;
  std::vector<double> channel_positions;            // facet plane
  std::vector<std::pair<double, double>> targets;   // ion plane
  ScalarField2D ion_plane_intensity;                // incoherent sum, samples = sqrt(I)
  DbMatrix crosstalk;
  double integration_radius = 0.0;
  nlohmann::json report;
};

struct MetrologyResult {
  Profile1D profile;  // synthetic image-plane truth, empty for recorded traces
  std::vector<ScanTrace> scans;
  StitchReport stitched;
  DeconvolutionResult deconvolved;
  CrosstalkReport crosstalk;
  nlohmann::json report;
};

DeliveryResult run_delivery_scenario(const ScenarioConfig& cfg, const GlobalConfig& global = {});

// Uses `delivery` for the synthetic profile; may be null with recorded traces.
MetrologyResult run_metrology_scenario(const ScenarioConfig& cfg, const DeliveryResult* delivery,
                                       const GlobalConfig& global = {});

// Scan windows whose overlaps are centred on peaks.
std::vector<std::pair<double, double>> plan_segments(const std::vector<double>& peaks, double start, double stop,
                                                     double segment_length, double overlap);

struct ScenarioOutcome {
  std::string artifact_dir;
  nlohmann::json report;
};

// Delivery, then metrology when enabled; artifacts under output_dir/<hash>.
ScenarioOutcome run_scenario(const ScenarioConfig& cfg, const GlobalConfig& global = {});

}  // namespace ionguide
