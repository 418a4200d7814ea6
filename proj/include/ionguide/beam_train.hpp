#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ionguide/field.hpp"
#include "json.hpp"

namespace ionguide {

enum class ImagingModel { Ideal4fPupil };

struct ImagingSystemSpec {
  double magnification = 1.0;       // |M|, image inversion ignored
  double numerical_aperture = 0.5;  // object side
  ImagingModel model = ImagingModel::Ideal4fPupil;

  void validate() const;
  // lambda / (2 NA') with NA' = NA / M the image-side aperture.
  double default_integration_radius(double wavelength) const;
};

struct ChannelLayout {
  std::vector<double> positions;  // x at the facet, m; all channels at y = channel_y
  double channel_y = 0.0;
  ScalarField2D mode;             // shared transverse field, centred on (0, 0)
  std::vector<double> powers;     // W; empty means unit power per channel

  void validate() const;
  double power(std::size_t k) const { return powers.empty() ? 1.0 : powers[k]; }
};

enum class Summation { Incoherent, Coherent };

// Grid with spacing (dx, dy) covering every channel plus `margin` beyond
// the mode extent. Sizes are even.
FieldGrid layout_grid(const ChannelLayout& layout, double dx, double dy, double margin);

// Channel k translated to its position and scaled to its power.
// Throws grid_overflow if more than 1e-6 of its power falls off the grid.
ScalarField2D place_channel(const ChannelLayout& layout, std::size_t k, const FieldGrid& grid);

// Incoherent: samples are sqrt(sum |E_k|^2), so intensities add.
ScalarField2D compose_facet_field(const ChannelLayout& layout, const FieldGrid& grid,
                                  Summation summation = Summation::Incoherent);

// Ideal 4f relay: hard circular pupil at NA/lambda, output sampled at
// M*dx with amplitude / M. Requires dx, dy <= lambda / (4 NA).
ScalarField2D image_field(const ScalarField2D& field, const ImagingSystemSpec& sys);

// Power of |E|^2 within each disc. Cells are supersampled 4x4 with
// bilinear interpolation.
std::vector<double> disc_powers(const ScalarField2D& field, const std::vector<std::pair<double, double>>& targets,
                                double radius);

using DbMatrix = std::vector<std::vector<double>>;

// Row i uses per_channel[i]; entry (i, j) = 10 log10(P_j / P_i). Ratios
// below floor_db are clamped to floor_db.
DbMatrix crosstalk_matrix(const std::vector<ScalarField2D>& per_channel,
                          const std::vector<std::pair<double, double>>& targets, double radius,
                          double floor_db = -150.0);

// Same, from disc powers already computed: powers[i][j] is channel i at target j.
DbMatrix crosstalk_from_powers(const std::vector<std::vector<double>>& powers, double floor_db = -150.0);

// Largest off-diagonal entry between neighbouring targets.
double worst_nearest_neighbor_db(const DbMatrix& m);

nlohmann::json plane_summary(const ScalarField2D& field, const std::vector<std::pair<double, double>>& targets,
                             double radius, const DbMatrix& crosstalk);

}  // namespace ionguide
