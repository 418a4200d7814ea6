#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ionguide/mode_solver.hpp"

namespace ionguide {

enum class TaperShape { Linear };

// Inverse taper from start_width down to end_width (the facet tip).
struct TaperProfile {
  double start_width = 500e-9;
  double end_width = 125e-9;
  double length = 100e-6;
  TaperShape shape = TaperShape::Linear;
  std::size_t n_segments = 64;

  void validate() const;
  double width_at(double z) const;
  double slope() const;  // |dw/dz|
};

ModeFieldDiameter mfd_vs_width(const WaveguideGeometry& templ, double width, const SimulationGrid& grid,
                               Polarization pol = Polarization::TE, const ModeSolverOptions& opts = {});

struct TaperSweepPoint {
  double width = 0.0;
  ModeFieldDiameter mfd;
  double n_eff = 0.0;
};

std::vector<TaperSweepPoint> taper_sweep(const WaveguideGeometry& templ, const std::vector<double>& widths,
                                         const SimulationGrid& grid, Polarization pol = Polarization::TE,
                                         const ModeSolverOptions& opts = {});

// CSV header width,mfd_x,mfd_y,n_eff
void write_taper_sweep_csv(const std::vector<TaperSweepPoint>& sweep, const std::string& path);

struct AdiabaticSegment {
  double z = 0.0;  // segment midpoint from the wide end
  double width = 0.0;
  double n_eff = 0.0;
  double half_angle = 0.0;
  double ratio = 0.0;  // half_angle / allowed half_angle
};

struct AdiabaticityResult {
  bool pass = false;
  double worst_ratio = 0.0;
  double worst_position = 0.0;
  std::vector<AdiabaticSegment> segments;
};

// Local half-angle |dw/dz|/2 against alpha * (n_eff - n_clad) * w / lambda,
// evaluated at every segment midpoint.
AdiabaticityResult adiabaticity_check(const TaperProfile& profile, const WaveguideGeometry& templ,
                                      const SimulationGrid& grid, double safety_factor = 1.0,
                                      Polarization pol = Polarization::TE, const ModeSolverOptions& opts = {});

}  // namespace ionguide
