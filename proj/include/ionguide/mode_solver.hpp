#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ionguide/field.hpp"
#include "json.hpp"

namespace ionguide {

enum class Polarization { TE, TM };

std::string to_string(Polarization p);
Polarization polarization_from_string(const std::string& s);

// Rectangular core centred on the origin, symmetric cladding.
struct WaveguideGeometry {
  double core_width = 0.0;      // m
  double core_thickness = 0.0;  // m
  double n_core = 0.0;
  double n_clad = 0.0;
  double wavelength = 0.0;  // m

  // Requires n_core >= n_clad >= 1; equal indices describe an unguided stack.
  void validate() const;
};

enum class Boundary { ZeroField };

// Uniform cell-centred sampling of [-x_extent/2, x_extent/2] x [-y_extent/2, y_extent/2].
struct SimulationGrid {
  double x_extent = 0.0;
  double y_extent = 0.0;
  std::size_t nx = 0;
  std::size_t ny = 0;
  Boundary boundary = Boundary::ZeroField;

  double dx() const { return x_extent / static_cast<double>(nx); }
  double dy() const { return y_extent / static_cast<double>(ny); }
  FieldGrid field_grid() const;

  // Smallest grid with the requested spacing that keeps `margin` of cladding
  // around a core of the given size.
  static SimulationGrid enclosing(double core_width, double core_thickness, double resolution,
                                  double margin = 2e-6);
  static SimulationGrid enclosing(double core_width, double core_thickness, double dx, double dy,
                                  double margin);
};

// Spacing and margin only; the extent follows the geometry being solved.
struct GridResolution {
  double dx = 10e-9;
  double dy = 10e-9;
  double margin = 2e-6;

  SimulationGrid grid_for(double core_width, double core_thickness) const {
    return SimulationGrid::enclosing(core_width, core_thickness, dx, dy, margin);
  }
};

struct GuidedMode {
  double n_eff = 0.0;
  Polarization polarization = Polarization::TE;
  ScalarField2D field;  // dominant transverse E component, sum |E|^2 dx dy = 1
  std::size_t mode_index = 0;
};

struct ModeSolverOptions {
  double min_margin = 2e-6;        // required cladding around every core
  bool refinement_check = false;   // re-solve at half spacing and compare
  double refinement_tolerance = 1e-4;
  double eigen_tolerance = 1e-9;  // ARPACK relative Ritz tolerance
  int max_arnoldi_iterations = 3000;
};

// Axis-aligned core rectangle (centre and size, metres).
struct CoreRect {
  double cx = 0.0;
  double cy = 0.0;
  double width = 0.0;
  double height = 0.0;
};

// Any number of identical-material rectangular cores in a uniform cladding.
struct CrossSection {
  std::vector<CoreRect> cores;
  double n_core = 0.0;
  double n_clad = 0.0;
  double wavelength = 0.0;
};

// Guided modes sorted by descending n_eff, at most max_modes of them.
std::vector<GuidedMode> solve_modes(const WaveguideGeometry& geom, const SimulationGrid& grid, Polarization pol,
                                    std::size_t max_modes, const ModeSolverOptions& opts = {});

std::vector<GuidedMode> solve_modes(const CrossSection& xs, const SimulationGrid& grid, Polarization pol,
                                    std::size_t max_modes, const ModeSolverOptions& opts = {});

// Cell-averaged relative permittivity used by the solver (row-major, x fastest).
std::vector<double> permittivity_map(const CrossSection& xs, const SimulationGrid& grid);

struct CutoffOptions {
  double tolerance = 5e-9;  // final bracket width
  double min_width = 50e-9;
  double max_width = 5e-6;
  ModeSolverOptions solver;
};

// Width at which a second guided mode of `pol` appears; bisection on width.
double single_mode_cutoff_width(const WaveguideGeometry& templ, const GridResolution& res, Polarization pol,
                                const CutoffOptions& opts = {});

struct CouplingResult {
  double n_even = 0.0;
  double n_odd = 0.0;
  double kappa = 0.0;  // 1/m
  double cross_power = 0.0;
};

// sin^2(kappa * length)
double coupled_power_fraction(double kappa, double length);

// Two identical parallel cores separated edge to edge by `separation`;
// kappa from the even/odd supermode splitting.
CouplingResult coupled_pair_crosstalk(const WaveguideGeometry& geom, const GridResolution& res, Polarization pol,
                                      double separation, double interaction_length,
                                      const ModeSolverOptions& opts = {});

// The same finite-difference discretisation reduced to a symmetric slab
// (layers normal to y). Returns guided n_eff values, descending.
std::vector<double> solve_slab_modes(double thickness, double n_core, double n_clad, double wavelength, double dy,
                                     double margin, Polarization pol);

double slab_cutoff_thickness(double n_core, double n_clad, double wavelength, double dy, double margin,
                             Polarization pol, double tolerance = 1e-9);

struct ModeFieldDiameter {
  double mfd_x = 0.0;
  double mfd_y = 0.0;
};

// 1/e^2 full widths of |E|^2 along x and y through the intensity maximum.
ModeFieldDiameter mode_field_diameter(const ScalarField2D& field);

nlohmann::json mode_summary(const GuidedMode& mode);

}  // namespace ionguide
