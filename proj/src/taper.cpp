#include "ionguide/taper.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ionguide/error.hpp"

namespace ionguide {

namespace {

GuidedMode fundamental_at(const WaveguideGeometry& templ, double width, const SimulationGrid& grid, Polarization pol,
                          const ModeSolverOptions& opts) {
  WaveguideGeometry g = templ;
  g.core_width = width;
  auto modes = solve_modes(g, grid, pol, 1, opts);
  if (modes.empty())
    fail_computation("mode_not_guided", "no guided " + to_string(pol) + " mode at width " + std::to_string(width * 1e9) +
                                            " nm on this grid");
  return std::move(modes.front());
}

}  // namespace

void TaperProfile::validate() const {
  if (!(end_width > 0.0) || !(start_width > end_width))
    fail_validation("invalid_taper", "taper needs start_width > end_width > 0");
  if (!(length > 0.0)) fail_validation("invalid_taper", "taper length must be positive");
  if (n_segments < 8) fail_validation("invalid_taper", "taper needs at least 8 segments");
}

double TaperProfile::width_at(double z) const {
  const double t = std::clamp(z / length, 0.0, 1.0);
  return start_width + (end_width - start_width) * t;
}

double TaperProfile::slope() const { return (start_width - end_width) / length; }

ModeFieldDiameter mfd_vs_width(const WaveguideGeometry& templ, double width, const SimulationGrid& grid,
                               Polarization pol, const ModeSolverOptions& opts) {
  if (!(width > 0.0)) fail_validation("invalid_argument", "width must be positive");
  return mode_field_diameter(fundamental_at(templ, width, grid, pol, opts).field);
}

std::vector<TaperSweepPoint> taper_sweep(const WaveguideGeometry& templ, const std::vector<double>& widths,
                                         const SimulationGrid& grid, Polarization pol, const ModeSolverOptions& opts) {
  std::vector<TaperSweepPoint> out;
  out.reserve(widths.size());
  for (double w : widths) {
    const auto mode = fundamental_at(templ, w, grid, pol, opts);
    out.push_back({w, mode_field_diameter(mode.field), mode.n_eff});
  }
  return out;
}

void write_taper_sweep_csv(const std::vector<TaperSweepPoint>& sweep, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_io("write_failed", "cannot write '" + path + "'");
  out.precision(12);
  out << "width,mfd_x,mfd_y,n_eff\n";
  for (const auto& p : sweep) out << p.width << ',' << p.mfd.mfd_x << ',' << p.mfd.mfd_y << ',' << p.n_eff << '\n';
  if (!out) fail_io("write_failed", "error while writing '" + path + "'");
}

AdiabaticityResult adiabaticity_check(const TaperProfile& profile, const WaveguideGeometry& templ,
                                      const SimulationGrid& grid, double safety_factor, Polarization pol,
                                      const ModeSolverOptions& opts) {
  profile.validate();
  templ.validate();
  if (!(safety_factor > 0.0)) fail_validation("invalid_argument", "safety factor must be positive");

  AdiabaticityResult result;
  const double dz = profile.length / static_cast<double>(profile.n_segments);
  const double half_angle = 0.5 * profile.slope();
  for (std::size_t s = 0; s < profile.n_segments; ++s) {
    AdiabaticSegment seg;
    seg.z = (static_cast<double>(s) + 0.5) * dz;
    seg.width = profile.width_at(seg.z);
    seg.n_eff = fundamental_at(templ, seg.width, grid, pol, opts).n_eff;
    seg.half_angle = half_angle;
    const double allowed = safety_factor * (seg.n_eff - templ.n_clad) * seg.width / templ.wavelength;
    seg.ratio = half_angle / allowed;
    if (seg.ratio > result.worst_ratio) {
      result.worst_ratio = seg.ratio;
      result.worst_position = seg.z;
    }
    result.segments.push_back(seg);
  }
  result.pass = result.worst_ratio <= 1.0;
  return result;
}

}  // namespace ionguide
