#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ionguide {

using complex = std::complex<double>;

// Uniform rectangular sampling. Sample (i, j) sits at (x0 + i*dx, y0 + j*dy).
struct FieldGrid {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double dx = 0.0;
  double dy = 0.0;
  double x0 = 0.0;
  double y0 = 0.0;

  double x(std::size_t i) const { return x0 + static_cast<double>(i) * dx; }
  double y(std::size_t j) const { return y0 + static_cast<double>(j) * dy; }
  double x_max() const { return x(nx - 1); }
  double y_max() const { return y(ny - 1); }
  std::size_t size() const { return nx * ny; }

  // Grid of nx x ny samples centred on (cx, cy).
  static FieldGrid centered(std::size_t nx, std::size_t ny, double dx, double dy, double cx = 0.0,
                            double cy = 0.0);
};

// Complex scalar field, row-major with x fastest: index = j*nx + i.
class ScalarField2D {
 public:
  ScalarField2D() = default;
  ScalarField2D(FieldGrid grid, double wavelength);

  const FieldGrid& grid() const { return grid_; }
  double wavelength() const { return wavelength_; }

  complex& at(std::size_t i, std::size_t j) { return samples_[j * grid_.nx + i]; }
  const complex& at(std::size_t i, std::size_t j) const { return samples_[j * grid_.nx + i]; }
  double intensity(std::size_t i, std::size_t j) const { return std::norm(at(i, j)); }

  std::span<complex> samples() { return samples_; }
  std::span<const complex> samples() const { return samples_; }

  // Sum |E|^2 dx dy.
  double power() const;

  // Bilinear interpolation; zero outside the sampled rectangle.
  complex sample(double x, double y) const;

  // Location of the largest |E|^2 sample.
  std::pair<std::size_t, std::size_t> argmax() const;

  ScalarField2D& operator+=(const ScalarField2D& other);
  ScalarField2D& operator*=(complex s);

 private:
  FieldGrid grid_;
  double wavelength_ = 0.0;
  std::vector<complex> samples_;
};

// Field with |E|^2 of `field` as its (real) samples.
ScalarField2D intensity_of(const ScalarField2D& field);

// Evaluate `field` on another grid by bilinear interpolation.
ScalarField2D resample(const ScalarField2D& field, const FieldGrid& target);

// CSV with header x,y,re,im (SI units). Rows ordered with x fastest.
void write_field_csv(const ScalarField2D& field, const std::string& path);
ScalarField2D read_field_csv(const std::string& path, double wavelength);

// CSV with header x,y,intensity.
void write_intensity_csv(const ScalarField2D& field, const std::string& path);

}  // namespace ionguide
