#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace ionguide {

// CODATA 2018 values. Everything else in the library reads constants from here.
struct PhysicalConstants {
  double elementary_charge = 1.602176634e-19;     // C
  double vacuum_permittivity = 8.8541878128e-12;  // F/m
  double atomic_mass_unit = 1.66053906660e-27;    // kg
  double speed_of_light = 299792458.0;            // m/s
};

// A refractive index is only meaningful at the wavelength it was tabulated for.
struct MaterialIndex {
  std::string name;
  double index = 1.0;
  double wavelength = 0.0;  // m, validity tag
};

struct Tolerances {
  double cutoff_width = 5e-9;          // m, bisection bracket width
  double refinement = 1e-4;            // |dn_eff| allowed under grid doubling
  double adiabatic_safety = 1.0;       // alpha in the taper criterion
  int deconvolution_iterations = 500;
  double deconvolution_residual = 1e-6;  // relative L2
  int window_points = 1000;
  double pitch_band_low = 5.0;
  double pitch_band_high = 10.0;
  double numerical_floor_db = -150.0;
  double crosstalk_target_db = -50.0;
};

struct DesignDefaults {
  double core_width = 500e-9;
  double core_thickness = 150e-9;
  double wavelength = 650e-9;
  double grid_resolution = 10e-9;
  double grid_margin = 2e-6;
  double taper_start_width = 500e-9;
  double taper_end_width = 125e-9;
  double taper_length = 100e-6;
  int taper_segments = 64;
  // NA = na_spot_constant * wavelength / w, w the 1/e^2 intensity radius.
  double na_spot_constant = 0.31830988618379067;
  double propagation_loss_db_per_cm = 1.7;
  double bend_loss_db_per_90 = 0.1;
};

struct GlobalConfig {
  PhysicalConstants constants;
  std::vector<MaterialIndex> materials{{"Si3N4", 2.02, 650e-9}, {"SiO2", 1.457, 650e-9}};
  Tolerances tolerances;
  DesignDefaults defaults;
  std::string core_material = "Si3N4";
  std::string clad_material = "SiO2";
  std::string db_convention = "10log10_intensity";
  std::string output_format = "table";  // table | csv | json

  const MaterialIndex& material(const std::string& name) const;
  double core_index() const { return material(core_material).index; }
  double clad_index() const { return material(clad_material).index; }

  void validate() const;
};

// Unknown keys are rejected; missing keys keep their defaults.
GlobalConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const GlobalConfig& cfg);
GlobalConfig load_config(const std::string& path);

}  // namespace ionguide
