#include "ionguide/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace ionguide {

using nlohmann::json;

namespace {

template <typename F>
auto staged(Stage stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  } catch (const json::exception& e) {
    throw StageError(stage, Error(ErrorKind::Validation, "config_type", e.what()));
  }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) fail_validation("config_type", where + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      fail_validation("config_unknown_key", "unknown key '" + key + "' in " + where);
}

template <typename T>
void get(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end() && !it->is_null()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      fail_validation("config_type", std::string("scenario key '") + key + "': " + e.what());
    }
  }
}

template <typename T>
void get(const json& obj, const char* key, std::optional<T>& out) {
  if (auto it = obj.find(key); it != obj.end() && !it->is_null()) {
    T v{};
    get(obj, key, v);
    out = v;
  }
}

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string layout_name(LayoutMode m) {
  switch (m) {
    case LayoutMode::PitchFactor: return "pitch_factor";
    case LayoutMode::InverseMagnification: return "inverse_magnification";
    case LayoutMode::Explicit: return "explicit";
  }
  return "?";
}

double facet_spacing(const ScenarioConfig& cfg) {
  return cfg.facet_dx > 0.0 ? cfg.facet_dx : cfg.wavelength / (8.0 * cfg.imaging.numerical_aperture);
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) fail_io("write_failed", "cannot write '" + p.string() + "'");
  out << text;
  if (!out) fail_io("write_failed", "error while writing '" + p.string() + "'");
}

// Every stride-th sample in both directions.
ScalarField2D decimate(const ScalarField2D& f, std::size_t stride) {
  const auto& g = f.grid();
  FieldGrid d{(g.nx + stride - 1) / stride, (g.ny + stride - 1) / stride, g.dx * static_cast<double>(stride),
              g.dy * static_cast<double>(stride), g.x0, g.y0};
  ScalarField2D out(d, f.wavelength());
  for (std::size_t j = 0; j < d.ny; ++j)
    for (std::size_t i = 0; i < d.nx; ++i) out.at(i, j) = f.at(i * stride, j * stride);
  return out;
}

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Config: return "config";
    case Stage::Mode: return "mode";
    case Stage::Taper: return "taper";
    case Stage::Chain: return "chain";
    case Stage::Layout: return "layout";
    case Stage::Imaging: return "imaging";
    case Stage::Crosstalk: return "crosstalk";
    case Stage::Profile: return "profile";
    case Stage::Scan: return "scan";
    case Stage::Stitch: return "stitch";
    case Stage::Deconvolve: return "deconvolve";
    case Stage::Extract: return "extract";
    case Stage::Artifacts: return "artifacts";
  }
  return "unknown";
}

void ScenarioConfig::validate() const {
  if (!(core_thickness > 0.0) || !(wavelength > 0.0))
    fail_validation("invalid_geometry", "core thickness and wavelength must be positive");
  if (!(grid_dx > 0.0) || !(grid_dy > 0.0) || !(grid_margin > 0.0))
    fail_validation("invalid_grid", "mode grid spacing and margin must be positive");
  taper.validate();
  if (n_ions < 1) fail_validation("invalid_chain", "n_ions must be at least 1");
  if (!(ion_mass_amu > 0.0) || !(axial_frequency > 0.0) || !(ion_charge_e != 0.0))
    fail_validation("invalid_chain", "ion mass, charge and axial frequency must be positive");
  if (layout == LayoutMode::PitchFactor && !(pitch_factor > 0.0))
    fail_validation("invalid_layout", "pitch factor must be positive");
  if (layout == LayoutMode::Explicit && explicit_positions.empty())
    fail_validation("invalid_layout", "explicit layout needs channel positions");
  imaging.validate();
  if (facet_dx < 0.0 || !(facet_margin >= 0.0)) fail_validation("invalid_grid", "facet grid settings are negative");
  if (integration_radius && !(*integration_radius > 0.0))
    fail_validation("invalid_config", "integration radius must be positive");
  if (output_dir.empty()) fail_validation("invalid_config", "output_dir is empty");
  const auto& m = metrology;
  if (m.enabled) {
    if (!(m.magnification > 0.0) || !(m.numerical_aperture > 0.0) || m.numerical_aperture > 1.0)
      fail_validation("invalid_imaging", "metrology imaging needs M > 0 and 0 < NA <= 1");
    if (!(m.slit_width > 0.0) || !(m.step > 0.0)) fail_validation("invalid_trace", "slit width and step must be positive");
    if (!(m.segment_length > m.segment_overlap) || !(m.segment_overlap > 0.0))
      fail_validation("invalid_config", "segments must be longer than their overlap");
    if (m.gain_drift.empty()) fail_validation("invalid_config", "gain_drift needs at least one entry");
    for (double g : m.gain_drift)
      if (!(g > 0.0)) fail_validation("invalid_config", "gain_drift entries must be positive");
    if (!m.peak_pair.empty() && m.peak_pair.size() != 2)
      fail_validation("invalid_config", "peak_pair holds exactly two channel indices");
    if (!m.recorded_traces.empty() && m.peak_hints.size() < 2)
      fail_validation("invalid_config", "recorded traces need at least two peak_hints");
  }
}

ScenarioConfig scenario_from_json(const json& j) {
  ScenarioConfig c;
  reject_unknown(j, {"waveguide", "taper", "ion_chain", "channels", "imaging", "metrology", "output_dir"}, "scenario");
  if (auto it = j.find("waveguide"); it != j.end()) {
    reject_unknown(*it, {"core_thickness", "wavelength", "n_core", "n_clad", "polarization", "grid_dx", "grid_dy",
                         "grid_margin"},
                   "waveguide");
    get(*it, "core_thickness", c.core_thickness);
    get(*it, "wavelength", c.wavelength);
    get(*it, "n_core", c.n_core);
    get(*it, "n_clad", c.n_clad);
    std::string pol = to_string(c.polarization);
    get(*it, "polarization", pol);
    c.polarization = polarization_from_string(pol);
    get(*it, "grid_dx", c.grid_dx);
    get(*it, "grid_dy", c.grid_dy);
    get(*it, "grid_margin", c.grid_margin);
  }
  if (auto it = j.find("taper"); it != j.end()) {
    reject_unknown(*it, {"start_width", "end_width", "length", "segments", "check_adiabaticity"}, "taper");
    get(*it, "start_width", c.taper.start_width);
    get(*it, "end_width", c.taper.end_width);
    get(*it, "length", c.taper.length);
    get(*it, "segments", c.taper.n_segments);
    get(*it, "check_adiabaticity", c.check_adiabaticity);
  }
  if (auto it = j.find("ion_chain"); it != j.end()) {
    reject_unknown(*it, {"n_ions", "mass_amu", "axial_frequency", "charge_e"}, "ion_chain");
    get(*it, "n_ions", c.n_ions);
    get(*it, "mass_amu", c.ion_mass_amu);
    get(*it, "axial_frequency", c.axial_frequency);
    get(*it, "charge_e", c.ion_charge_e);
  }
  if (auto it = j.find("channels"); it != j.end()) {
    reject_unknown(*it, {"layout", "pitch_factor", "positions"}, "channels");
    std::string mode = layout_name(c.layout);
    get(*it, "layout", mode);
    if (mode == "pitch_factor") c.layout = LayoutMode::PitchFactor;
    else if (mode == "inverse_magnification") c.layout = LayoutMode::InverseMagnification;
    else if (mode == "explicit") c.layout = LayoutMode::Explicit;
    else fail_validation("config_value", "unknown channel layout '" + mode + "'");
    get(*it, "pitch_factor", c.pitch_factor);
    get(*it, "positions", c.explicit_positions);
  }
  if (auto it = j.find("imaging"); it != j.end()) {
    reject_unknown(*it, {"magnification", "numerical_aperture", "summation", "facet_dx", "facet_margin",
                         "integration_radius", "crosstalk_target_db"},
                   "imaging");
    get(*it, "magnification", c.imaging.magnification);
    get(*it, "numerical_aperture", c.imaging.numerical_aperture);
    std::string sum = c.summation == Summation::Incoherent ? "incoherent" : "coherent";
    get(*it, "summation", sum);
    if (sum == "incoherent") c.summation = Summation::Incoherent;
    else if (sum == "coherent") c.summation = Summation::Coherent;
    else fail_validation("config_value", "summation must be incoherent or coherent");
    get(*it, "facet_dx", c.facet_dx);
    get(*it, "facet_margin", c.facet_margin);
    get(*it, "integration_radius", c.integration_radius);
    get(*it, "crosstalk_target_db", c.crosstalk_target_db);
  }
  if (auto it = j.find("metrology"); it != j.end()) {
    auto& m = c.metrology;
    reject_unknown(*it, {"enabled", "magnification", "numerical_aperture", "slit_width", "step", "slit_height",
                         "modulation_hz", "segment_length", "segment_overlap", "lead", "gain_drift", "pedestal_db",
                         "noise", "peak_pair", "window_points", "single_mode_margin", "recorded_traces",
                         "peak_hints"},
                   "metrology");
    get(*it, "enabled", m.enabled);
    get(*it, "magnification", m.magnification);
    get(*it, "numerical_aperture", m.numerical_aperture);
    get(*it, "slit_width", m.slit_width);
    get(*it, "step", m.step);
    get(*it, "slit_height", m.slit_height);
    get(*it, "modulation_hz", m.modulation_hz);
    get(*it, "segment_length", m.segment_length);
    get(*it, "segment_overlap", m.segment_overlap);
    get(*it, "lead", m.lead);
    get(*it, "gain_drift", m.gain_drift);
    get(*it, "pedestal_db", m.pedestal_db);
    if (auto n = it->find("noise"); n != it->end()) {
      reject_unknown(*n, {"floor_db", "proportional_sigma", "seed"}, "metrology.noise");
      get(*n, "floor_db", m.noise.floor_db);
      get(*n, "proportional_sigma", m.noise.proportional_sigma);
      get(*n, "seed", m.noise.seed);
    }
    get(*it, "peak_pair", m.peak_pair);
    get(*it, "window_points", m.window_points);
    get(*it, "single_mode_margin", m.single_mode_margin);
    get(*it, "recorded_traces", m.recorded_traces);
    get(*it, "peak_hints", m.peak_hints);
  }
  get(j, "output_dir", c.output_dir);
  return c;
}

json scenario_to_json(const ScenarioConfig& c) {
  const auto& m = c.metrology;
  return {
      {"waveguide",
       {{"core_thickness", c.core_thickness},
        {"wavelength", c.wavelength},
        {"n_core", opt(c.n_core)},
        {"n_clad", opt(c.n_clad)},
        {"polarization", to_string(c.polarization)},
        {"grid_dx", c.grid_dx},
        {"grid_dy", c.grid_dy},
        {"grid_margin", c.grid_margin}}},
      {"taper",
       {{"start_width", c.taper.start_width},
        {"end_width", c.taper.end_width},
        {"length", c.taper.length},
        {"segments", c.taper.n_segments},
        {"check_adiabaticity", c.check_adiabaticity}}},
      {"ion_chain",
       {{"n_ions", c.n_ions},
        {"mass_amu", c.ion_mass_amu},
        {"axial_frequency", c.axial_frequency},
        {"charge_e", c.ion_charge_e}}},
      {"channels",
       {{"layout", layout_name(c.layout)}, {"pitch_factor", c.pitch_factor}, {"positions", c.explicit_positions}}},
      {"imaging",
       {{"magnification", c.imaging.magnification},
        {"numerical_aperture", c.imaging.numerical_aperture},
        {"summation", c.summation == Summation::Incoherent ? "incoherent" : "coherent"},
        {"facet_dx", c.facet_dx},
        {"facet_margin", c.facet_margin},
        {"integration_radius", opt(c.integration_radius)},
        {"crosstalk_target_db", c.crosstalk_target_db}}},
      {"metrology",
       {{"enabled", m.enabled},
        {"magnification", m.magnification},
        {"numerical_aperture", m.numerical_aperture},
        {"slit_width", m.slit_width},
        {"step", m.step},
        {"slit_height", m.slit_height},
        {"modulation_hz", m.modulation_hz},
        {"segment_length", m.segment_length},
        {"segment_overlap", m.segment_overlap},
        {"lead", m.lead},
        {"gain_drift", m.gain_drift},
        {"pedestal_db", opt(m.pedestal_db)},
        {"noise",
         {{"floor_db", opt(m.noise.floor_db)},
          {"proportional_sigma", m.noise.proportional_sigma},
          {"seed", m.noise.seed}}},
        {"peak_pair", m.peak_pair},
        {"window_points", m.window_points},
        {"single_mode_margin", m.single_mode_margin},
        {"recorded_traces", m.recorded_traces},
        {"peak_hints", m.peak_hints}}},
      {"output_dir", c.output_dir},
  };
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("read_failed", "cannot open scenario '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail_io("bad_format", "scenario '" + path + "': " + e.what());
  }
  return scenario_from_json(j);
}

std::string config_hash(const ScenarioConfig& cfg) {
  auto j = scenario_to_json(cfg);
  j.erase("output_dir");
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

DeliveryResult run_delivery_scenario(const ScenarioConfig& cfg, const GlobalConfig& global) {
  staged(Stage::Config, [&] {
    cfg.validate();
    global.validate();
  });
  DeliveryResult r;
  const double n_core = cfg.n_core.value_or(global.core_index());
  const double n_clad = cfg.n_clad.value_or(global.clad_index());
  const WaveguideGeometry facet{cfg.taper.end_width, cfg.core_thickness, n_core, n_clad, cfg.wavelength};
  const GridResolution res{cfg.grid_dx, cfg.grid_dy, cfg.grid_margin};
  json report;

  r.facet_mode = staged(Stage::Mode, [&] {
    auto modes = solve_modes(facet, res.grid_for(facet.core_width, facet.core_thickness), cfg.polarization, 1);
    if (modes.empty())
      fail_computation("mode_not_guided", "no guided mode at the taper end width " +
                                              std::to_string(cfg.taper.end_width * 1e9) + " nm");
    return std::move(modes.front());
  });
  report["facet_mode"] = mode_summary(r.facet_mode);
  report["facet_mode"]["core_width"] = facet.core_width;

  if (cfg.check_adiabaticity) {
    staged(Stage::Taper, [&] {
      WaveguideGeometry templ = facet;
      templ.core_width = cfg.taper.start_width;
      const auto a = adiabaticity_check(cfg.taper, templ, res.grid_for(cfg.taper.start_width, cfg.core_thickness),
                                        global.tolerances.adiabatic_safety, cfg.polarization);
      report["taper"] = {{"pass", a.pass}, {"worst_ratio", a.worst_ratio}, {"worst_position", a.worst_position}};
    });
  }

  r.chain = staged(Stage::Chain, [&] {
    IonChainSpec spec{cfg.n_ions, cfg.ion_mass_amu * global.constants.atomic_mass_unit, cfg.axial_frequency,
                      cfg.ion_charge_e * global.constants.elementary_charge};
    return physical_positions(spec, global.constants);
  });
  report["chain"] = {{"length_scale", r.chain.length_scale}, {"positions", r.chain.positions}};
  if (r.chain.positions.size() >= 2) report["chain"]["min_gap"] = r.chain.min_gap();

  const double m = cfg.imaging.magnification;
  ChannelLayout layout;
  FieldGrid grid;
  staged(Stage::Layout, [&] {
    switch (cfg.layout) {
      case LayoutMode::PitchFactor:
        for (double x : r.chain.positions) r.channel_positions.push_back(x * cfg.pitch_factor);
        break;
      case LayoutMode::InverseMagnification:
        for (double x : r.chain.positions) r.channel_positions.push_back(x / m);
        break;
      case LayoutMode::Explicit: r.channel_positions = cfg.explicit_positions; break;
    }
    if (cfg.layout == LayoutMode::Explicit)
      for (double x : r.channel_positions) r.targets.emplace_back(m * x, 0.0);
    else
      for (double x : r.chain.positions) r.targets.emplace_back(x, 0.0);
    layout.positions = r.channel_positions;
    layout.mode = r.facet_mode.field;
    layout.validate();
    const double dx = facet_spacing(cfg);
    grid = layout_grid(layout, dx, dx, cfg.facet_margin);
  });
  report["channel_positions"] = r.channel_positions;
  if (r.channel_positions.size() >= 2 && r.chain.positions.size() >= 2) {
    double chip_gap = r.channel_positions[1] - r.channel_positions[0];
    for (std::size_t i = 2; i < r.channel_positions.size(); ++i)
      chip_gap = std::min(chip_gap, r.channel_positions[i] - r.channel_positions[i - 1]);
    const double ratio = chip_gap / r.chain.min_gap();
    report["pitch"] = {{"ratio", ratio},
                       {"in_band", ratio >= global.tolerances.pitch_band_low &&
                                       ratio <= global.tolerances.pitch_band_high}};
  }

  r.integration_radius = cfg.integration_radius.value_or(cfg.imaging.default_integration_radius(cfg.wavelength));
  std::vector<std::vector<double>> powers;
  std::vector<double> intensity;
  ScalarField2D coherent;
  FieldGrid image_grid;
  for (std::size_t k = 0; k < layout.positions.size(); ++k) {
    auto img = staged(Stage::Imaging, [&] { return image_field(place_channel(layout, k, grid), cfg.imaging); });
    powers.push_back(staged(Stage::Crosstalk, [&] { return disc_powers(img, r.targets, r.integration_radius); }));
    if (k == 0) {
      image_grid = img.grid();
      intensity.assign(image_grid.size(), 0.0);
      if (cfg.summation == Summation::Coherent) coherent = ScalarField2D(image_grid, cfg.wavelength);
    }
    if (cfg.summation == Summation::Coherent) {
      coherent += img;
    } else {
      const auto s = img.samples();
      for (std::size_t n = 0; n < s.size(); ++n) intensity[n] += std::norm(s[n]);
    }
  }
  if (cfg.summation == Summation::Coherent) {
    r.ion_plane_intensity = std::move(coherent);
  } else {
    r.ion_plane_intensity = ScalarField2D(image_grid, cfg.wavelength);
    auto s = r.ion_plane_intensity.samples();
    for (std::size_t n = 0; n < s.size(); ++n) s[n] = std::sqrt(intensity[n]);
  }

  r.crosstalk = staged(Stage::Crosstalk,
                       [&] { return crosstalk_from_powers(powers, global.tolerances.numerical_floor_db); });
  const double worst = r.crosstalk.size() > 1 ? worst_nearest_neighbor_db(r.crosstalk) : global.tolerances.numerical_floor_db;
  report["imaging"] = {{"magnification", m},
                       {"numerical_aperture", cfg.imaging.numerical_aperture},
                       {"facet_dx", grid.dx},
                       {"facet_grid", {grid.nx, grid.ny}}};
  report["integration_radius"] = r.integration_radius;
  report["targets"] = json::array();
  for (const auto& [x, y] : r.targets) report["targets"].push_back({x, y});
  report["crosstalk_db"] = r.crosstalk;
  report["worst_nearest_neighbor_db"] = worst;
  report["target_db"] = cfg.crosstalk_target_db;
  report["meets_target"] = worst <= cfg.crosstalk_target_db;
  r.report = std::move(report);
  return r;
}

std::vector<std::pair<double, double>> plan_segments(const std::vector<double>& peaks, double start, double stop,
                                                     double segment_length, double overlap) {
  if (!(stop > start)) fail_validation("invalid_config", "scan range is empty");
  if (!(segment_length > overlap) || !(overlap > 0.0))
    fail_validation("invalid_config", "segments must be longer than their overlap");
  std::vector<double> p = peaks;
  std::sort(p.begin(), p.end());
  std::vector<std::pair<double, double>> segs;
  double a = start;
  while (stop - a > segment_length) {
    double anchor = 0.0;
    bool found = false;
    for (double x : p)
      if (x - 0.5 * overlap > a && x + 0.5 * overlap <= a + segment_length) {
        anchor = x;
        found = true;
      }
    if (!found)
      fail_validation("segmentation", "no peak can anchor an overlap within one segment length");
    segs.emplace_back(a, anchor + 0.5 * overlap);
    a = anchor - 0.5 * overlap;
  }
  segs.emplace_back(a, stop);
  return segs;
}

MetrologyResult run_metrology_scenario(const ScenarioConfig& cfg, const DeliveryResult* delivery,
                                       const GlobalConfig& global) {
  staged(Stage::Config, [&] {
    cfg.validate();
    global.validate();
  });
  const auto& ms = cfg.metrology;
  MetrologyResult r;
  std::vector<double> peaks;
  json report;

  if (!ms.recorded_traces.empty()) {
    peaks = ms.peak_hints;
    r.scans = staged(Stage::Scan, [&] {
      std::vector<ScanTrace> scans;
      for (const auto& path : ms.recorded_traces) scans.push_back(read_trace(path));
      return scans;
    });
    report["source"] = "recorded";
  } else {
    if (!delivery) throw StageError(Stage::Profile, Error(ErrorKind::Validation, "missing_delivery",
                                                          "synthetic metrology needs a delivery result"));
    r.profile = staged(Stage::Profile, [&] {
      // One spot imaged at the metrology magnification, integrated across y,
      // then replicated at every channel.
      ChannelLayout single;
      single.positions = {0.0};
      single.mode = delivery->facet_mode.field;
      const double dx = std::min(cfg.wavelength / (4.0 * ms.numerical_aperture),
                                 0.25 * ms.slit_width / ms.magnification);
      const auto grid = layout_grid(single, dx, dx, ms.single_mode_margin);
      const auto img = image_field(place_channel(single, 0, grid), {ms.magnification, ms.numerical_aperture});
      const auto& ig = img.grid();
      std::vector<double> line(ig.nx, 0.0);
      for (std::size_t j = 0; j < ig.ny; ++j)
        for (std::size_t i = 0; i < ig.nx; ++i) line[i] += img.intensity(i, j) * ig.dy;
      auto spot = [&](double x) {
        const double f = (x - ig.x0) / ig.dx;
        if (f < 0.0 || f > static_cast<double>(ig.nx - 1)) return 0.0;
        const auto i = std::min(static_cast<std::size_t>(f), ig.nx - 2);
        const double t = f - static_cast<double>(i);
        return (1.0 - t) * line[i] + t * line[i + 1];
      };
      for (double x : delivery->channel_positions) peaks.push_back(ms.magnification * x);
      Profile1D p;
      const double h = ig.dx;
      const double a = peaks.front() - ms.lead, b = peaks.back() + ms.lead;
      const auto n = static_cast<std::size_t>(std::ceil((b - a) / h)) + 1;
      p.positions.resize(n);
      p.values.assign(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        p.positions[k] = a + static_cast<double>(k) * h;
        for (double c : peaks) p.values[k] += spot(p.positions[k] - c);
      }
      if (ms.pedestal_db) {
        const double level = *std::max_element(p.values.begin(), p.values.end()) * std::pow(10.0, *ms.pedestal_db / 10.0);
        for (double& v : p.values) v += level;
      }
      return p;
    });
    r.scans = staged(Stage::Scan, [&] {
      const double a = r.profile.positions.front(), b = r.profile.positions.back();
      const auto segs = plan_segments(peaks, a, b, ms.segment_length, ms.segment_overlap);
      std::vector<ScanTrace> scans;
      for (std::size_t s = 0; s < segs.size(); ++s) {
        auto snap = [&](double x) { return a + std::round((x - a) / ms.step) * ms.step; };
        NoiseModel noise = ms.noise;
        noise.seed = ms.noise.seed + s;
        auto t = simulate_scan(r.profile, ms.slit_width, ms.step, snap(segs[s].first), snap(segs[s].second), noise);
        const double g = ms.gain_drift[s % ms.gain_drift.size()];
        for (double& v : t.values) v *= g;
        if (t.noise_floor) *t.noise_floor *= g;
        t.slit_height = ms.slit_height;
        t.modulation_hz = ms.modulation_hz;
        scans.push_back(std::move(t));
      }
      return scans;
    });
    report["source"] = "synthetic";
  }

  r.stitched = staged(Stage::Stitch, [&] {
    std::vector<Profile1D> profiles;
    for (const auto& t : r.scans) profiles.push_back(t.profile());
    return stitch_scans(profiles, std::max(ms.segment_overlap - 2.0 * ms.step, ms.step));
  });

  r.deconvolved = staged(Stage::Deconvolve, [&] {
    ScanTrace t = r.scans.front();
    t.positions = r.stitched.composite.positions;
    t.values = r.stitched.composite.values;
    return deconvolve(t, {global.tolerances.deconvolution_iterations, global.tolerances.deconvolution_residual});
  });

  r.crosstalk = staged(Stage::Extract, [&] {
    std::size_t ia = 0, ib = 1;
    if (!ms.peak_pair.empty()) {
      ia = ms.peak_pair[0];
      ib = ms.peak_pair[1];
    } else if (peaks.size() >= 2) {
      ia = peaks.size() / 2 - 1;
      ib = peaks.size() / 2;
    }
    if (peaks.size() < 2 || ia >= peaks.size() || ib >= peaks.size() || ia == ib)
      fail_validation("invalid_config", "crosstalk extraction needs two distinct peaks");
    ExtractOptions eo;
    eo.n_points = ms.window_points;
    eo.noise_floor = r.scans.front().noise_floor;
    eo.numerical_floor_db = global.tolerances.numerical_floor_db;
    return extract_crosstalk(r.deconvolved.profile, peaks[ia], peaks[ib], eo);
  });

  report["segments"] = json::array();
  for (const auto& t : r.scans) report["segments"].push_back({t.positions.front(), t.positions.back()});
  report["stitch_gains"] = r.stitched.gains;
  report["deconvolution"] = {{"iterations", r.deconvolved.iterations},
                             {"residual", r.deconvolved.residual},
                             {"converged", r.deconvolved.converged}};
  report["crosstalk"] = report_to_json(r.crosstalk);
  r.report = std::move(report);
  return r;
}

ScenarioOutcome run_scenario(const ScenarioConfig& cfg, const GlobalConfig& global) {
  namespace fs = std::filesystem;
  ScenarioOutcome out;
  const auto delivery = run_delivery_scenario(cfg, global);
  std::optional<MetrologyResult> metrology;
  if (cfg.metrology.enabled) metrology = run_metrology_scenario(cfg, &delivery, global);

  out.report = {{"config_hash", config_hash(cfg)}, {"delivery", delivery.report}};
  if (metrology) out.report["metrology"] = metrology->report;

  staged(Stage::Artifacts, [&] {
    const fs::path dir = fs::path(cfg.output_dir) / config_hash(cfg);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail_io("write_failed", "cannot create '" + dir.string() + "': " + ec.message());
    out.artifact_dir = dir.string();

    write_text(dir / "scenario.json", scenario_to_json(cfg).dump(2) + "\n");
    write_field_csv(delivery.facet_mode.field, (dir / "facet_mode.csv").string());
    write_chain_csv(delivery.chain, (dir / "ion_chain.csv").string());
    write_text(dir / "crosstalk.json",
               plane_summary(delivery.ion_plane_intensity, delivery.targets, delivery.integration_radius,
                             delivery.crosstalk)
                       .dump(2) +
                   "\n");

    const auto& plane = delivery.ion_plane_intensity;
    const auto& g = plane.grid();
    std::size_t row = 0;
    for (std::size_t j = 0; j < g.ny; ++j)
      if (std::abs(g.y(j)) < std::abs(g.y(row))) row = j;
    std::string line = "x,intensity\n";
    char buf[64];
    for (std::size_t i = 0; i < g.nx; ++i) {
      std::snprintf(buf, sizeof buf, "%.12g,%.12g\n", g.x(i), plane.intensity(i, row));
      line += buf;
    }
    write_text(dir / "ion_plane_line.csv", line);
    const std::size_t stride = std::max<std::size_t>(1, (std::max(g.nx, g.ny) + 511) / 512);
    write_intensity_csv(decimate(plane, stride), (dir / "ion_plane_intensity.csv").string());

    if (metrology) {
      if (!metrology->profile.values.empty()) write_profile_csv(metrology->profile, (dir / "profile.csv").string());
      for (std::size_t s = 0; s < metrology->scans.size(); ++s)
        write_trace(metrology->scans[s], (dir / ("scan_" + std::to_string(s) + ".csv")).string());
      write_profile_csv(metrology->stitched.composite, (dir / "composite.csv").string());
      write_profile_csv(metrology->deconvolved.profile, (dir / "deconvolved.csv").string());
      write_text(dir / "metrology.json", report_to_json(metrology->crosstalk).dump(2) + "\n");
    }
    write_text(dir / "report.json", out.report.dump(2) + "\n");
  });
  return out;
}

}  // namespace ionguide
