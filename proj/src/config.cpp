#include "ionguide/config.hpp"

#include <cmath>
#include <fstream>

#include "ionguide/error.hpp"

namespace ionguide {

using nlohmann::json;

namespace {

template <typename T>
void read_if_present(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      fail_validation("config_type", std::string("config key '") + key + "': " + e.what());
    }
  }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const char* where) {
  if (!obj.is_object()) fail_validation("config_type", std::string(where) + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) fail_validation("config_unknown_key", std::string("unknown key '") + key + "' in " + where);
  }
}

}  // namespace

const MaterialIndex& GlobalConfig::material(const std::string& name) const {
  for (const auto& m : materials)
    if (m.name == name) return m;
  fail_validation("unknown_material", "material '" + name + "' is not in the constants table");
}

void GlobalConfig::validate() const {
  for (const auto& m : materials) {
    if (!(m.index >= 1.0) || !std::isfinite(m.index))
      fail_validation("config_value", "material '" + m.name + "' has index < 1");
    if (!(m.wavelength > 0.0))
      fail_validation("config_value", "material '" + m.name + "' lacks a wavelength validity tag");
  }
  (void)material(core_material);
  (void)material(clad_material);
  if (db_convention != "10log10_intensity")
    fail_validation("config_value", "only the 10log10_intensity dB convention is supported");
  if (output_format != "table" && output_format != "csv" && output_format != "json")
    fail_validation("config_value", "output_format must be table, csv or json");
  if (!(tolerances.pitch_band_low > 0.0 && tolerances.pitch_band_low <= tolerances.pitch_band_high))
    fail_validation("config_value", "pitch band must satisfy 0 < low <= high");
  if (tolerances.deconvolution_iterations < 1 || tolerances.window_points < 2)
    fail_validation("config_value", "iteration and window counts must be positive");
  if (!(defaults.na_spot_constant > 0.0)) fail_validation("config_value", "na_spot_constant must be positive");
}

GlobalConfig config_from_json(const json& j) {
  GlobalConfig cfg;
  reject_unknown(j,
                 {"constants", "materials", "tolerances", "defaults", "core_material", "clad_material",
                  "db_convention", "output_format"},
                 "config");
  if (auto it = j.find("constants"); it != j.end()) {
    reject_unknown(*it, {"elementary_charge", "vacuum_permittivity", "atomic_mass_unit", "speed_of_light"},
                   "constants");
    read_if_present(*it, "elementary_charge", cfg.constants.elementary_charge);
    read_if_present(*it, "vacuum_permittivity", cfg.constants.vacuum_permittivity);
    read_if_present(*it, "atomic_mass_unit", cfg.constants.atomic_mass_unit);
    read_if_present(*it, "speed_of_light", cfg.constants.speed_of_light);
  }
  if (auto it = j.find("materials"); it != j.end()) {
    if (!it->is_array()) fail_validation("config_type", "materials must be an array");
    cfg.materials.clear();
    for (const auto& m : *it) {
      reject_unknown(m, {"name", "index", "wavelength"}, "materials[]");
      MaterialIndex mi;
      read_if_present(m, "name", mi.name);
      read_if_present(m, "index", mi.index);
      read_if_present(m, "wavelength", mi.wavelength);
      cfg.materials.push_back(mi);
    }
  }
  if (auto it = j.find("tolerances"); it != j.end()) {
    auto& t = cfg.tolerances;
    reject_unknown(*it,
                   {"cutoff_width", "refinement", "adiabatic_safety", "deconvolution_iterations",
                    "deconvolution_residual", "window_points", "pitch_band_low", "pitch_band_high",
                    "numerical_floor_db", "crosstalk_target_db"},
                   "tolerances");
    read_if_present(*it, "cutoff_width", t.cutoff_width);
    read_if_present(*it, "refinement", t.refinement);
    read_if_present(*it, "adiabatic_safety", t.adiabatic_safety);
    read_if_present(*it, "deconvolution_iterations", t.deconvolution_iterations);
    read_if_present(*it, "deconvolution_residual", t.deconvolution_residual);
    read_if_present(*it, "window_points", t.window_points);
    read_if_present(*it, "pitch_band_low", t.pitch_band_low);
    read_if_present(*it, "pitch_band_high", t.pitch_band_high);
    read_if_present(*it, "numerical_floor_db", t.numerical_floor_db);
    read_if_present(*it, "crosstalk_target_db", t.crosstalk_target_db);
  }
  if (auto it = j.find("defaults"); it != j.end()) {
    auto& d = cfg.defaults;
    reject_unknown(*it,
                   {"core_width", "core_thickness", "wavelength", "grid_resolution", "grid_margin",
                    "taper_start_width", "taper_end_width", "taper_length", "taper_segments", "na_spot_constant",
                    "propagation_loss_db_per_cm", "bend_loss_db_per_90"},
                   "defaults");
    read_if_present(*it, "core_width", d.core_width);
    read_if_present(*it, "core_thickness", d.core_thickness);
    read_if_present(*it, "wavelength", d.wavelength);
    read_if_present(*it, "grid_resolution", d.grid_resolution);
    read_if_present(*it, "grid_margin", d.grid_margin);
    read_if_present(*it, "taper_start_width", d.taper_start_width);
    read_if_present(*it, "taper_end_width", d.taper_end_width);
    read_if_present(*it, "taper_length", d.taper_length);
    read_if_present(*it, "taper_segments", d.taper_segments);
    read_if_present(*it, "na_spot_constant", d.na_spot_constant);
    read_if_present(*it, "propagation_loss_db_per_cm", d.propagation_loss_db_per_cm);
    read_if_present(*it, "bend_loss_db_per_90", d.bend_loss_db_per_90);
  }
  read_if_present(j, "core_material", cfg.core_material);
  read_if_present(j, "clad_material", cfg.clad_material);
  read_if_present(j, "db_convention", cfg.db_convention);
  read_if_present(j, "output_format", cfg.output_format);
  cfg.validate();
  return cfg;
}

json config_to_json(const GlobalConfig& cfg) {
  json materials = json::array();
  for (const auto& m : cfg.materials)
    materials.push_back({{"name", m.name}, {"index", m.index}, {"wavelength", m.wavelength}});
  const auto& t = cfg.tolerances;
  const auto& d = cfg.defaults;
  return {
      {"constants",
       {{"elementary_charge", cfg.constants.elementary_charge},
        {"vacuum_permittivity", cfg.constants.vacuum_permittivity},
        {"atomic_mass_unit", cfg.constants.atomic_mass_unit},
        {"speed_of_light", cfg.constants.speed_of_light}}},
      {"materials", materials},
      {"tolerances",
       {{"cutoff_width", t.cutoff_width},
        {"refinement", t.refinement},
        {"adiabatic_safety", t.adiabatic_safety},
        {"deconvolution_iterations", t.deconvolution_iterations},
        {"deconvolution_residual", t.deconvolution_residual},
        {"window_points", t.window_points},
        {"pitch_band_low", t.pitch_band_low},
        {"pitch_band_high", t.pitch_band_high},
        {"numerical_floor_db", t.numerical_floor_db},
        {"crosstalk_target_db", t.crosstalk_target_db}}},
      {"defaults",
       {{"core_width", d.core_width},
        {"core_thickness", d.core_thickness},
        {"wavelength", d.wavelength},
        {"grid_resolution", d.grid_resolution},
        {"grid_margin", d.grid_margin},
        {"taper_start_width", d.taper_start_width},
        {"taper_end_width", d.taper_end_width},
        {"taper_length", d.taper_length},
        {"taper_segments", d.taper_segments},
        {"na_spot_constant", d.na_spot_constant},
        {"propagation_loss_db_per_cm", d.propagation_loss_db_per_cm},
        {"bend_loss_db_per_90", d.bend_loss_db_per_90}}},
      {"core_material", cfg.core_material},
      {"clad_material", cfg.clad_material},
      {"db_convention", cfg.db_convention},
      {"output_format", cfg.output_format},
  };
}

GlobalConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("config_open", "cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail_io("config_parse", "cannot parse config file '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

}  // namespace ionguide
