#include "ionguide/beam_train.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include "ionguide/error.hpp"

namespace ionguide {

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct Plan {
  fftw_plan p = nullptr;
  ~Plan() {
    if (p) {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(p);
    }
  }
};

fftw_complex* as_fftw(complex* p) { return reinterpret_cast<fftw_complex*>(p); }

double frequency(std::size_t k, std::size_t n, double d) {
  const auto kk = static_cast<double>(k);
  const auto nn = static_cast<double>(n);
  return (k < (n + 1) / 2 ? kk : kk - nn) / (nn * d);
}

}  // namespace

void ImagingSystemSpec::validate() const {
  if (!(magnification > 0.0) || !std::isfinite(magnification))
    fail_validation("invalid_imaging", "magnification must be positive");
  if (!(numerical_aperture > 0.0) || numerical_aperture > 1.0)
    fail_validation("invalid_imaging", "numerical aperture must lie in (0, 1]");
}

double ImagingSystemSpec::default_integration_radius(double wavelength) const {
  validate();
  return wavelength * magnification / (2.0 * numerical_aperture);
}

void ChannelLayout::validate() const {
  if (positions.empty()) fail_validation("invalid_layout", "layout has no channels");
  for (std::size_t i = 1; i < positions.size(); ++i)
    if (!(positions[i] > positions[i - 1]))
      fail_validation("invalid_layout", "channel positions must be strictly increasing");
  if (!powers.empty() && powers.size() != positions.size())
    fail_validation("invalid_layout", "one power per channel is required");
  for (double p : powers)
    if (!(p >= 0.0)) fail_validation("invalid_layout", "channel powers must be non-negative");
  if (mode.grid().nx < 2 || mode.grid().ny < 2) fail_validation("invalid_layout", "channel mode field is empty");
}

FieldGrid layout_grid(const ChannelLayout& layout, double dx, double dy, double margin) {
  layout.validate();
  if (!(dx > 0.0) || !(dy > 0.0) || !(margin >= 0.0))
    fail_validation("invalid_grid", "grid spacing must be positive and margin non-negative");
  const auto& mg = layout.mode.grid();
  const double half_x = 0.5 * (mg.x_max() - mg.x0) + margin;
  const double half_y = 0.5 * (mg.y_max() - mg.y0) + margin;
  const double span_x = layout.positions.back() - layout.positions.front() + 2.0 * half_x;
  const double cx = 0.5 * (layout.positions.back() + layout.positions.front());
  auto even = [](double n) {
    auto k = static_cast<std::size_t>(std::ceil(n));
    return std::max<std::size_t>(k + (k % 2), 2);
  };
  return FieldGrid::centered(even(span_x / dx), even(2.0 * half_y / dy), dx, dy, cx, layout.channel_y);
}

ScalarField2D place_channel(const ChannelLayout& layout, std::size_t k, const FieldGrid& grid) {
  if (k >= layout.positions.size()) fail_validation("invalid_layout", "channel index out of range");
  const auto& mode = layout.mode;
  const auto& mg = mode.grid();
  const double px = layout.positions[k];
  const double py = layout.channel_y;

  // Fraction of the mode's own samples landing outside the target rectangle.
  const double tol_x = 0.5 * grid.dx;
  const double tol_y = 0.5 * grid.dy;
  double total = 0.0;
  double outside = 0.0;
  for (std::size_t j = 0; j < mg.ny; ++j)
    for (std::size_t i = 0; i < mg.nx; ++i) {
      const double p = mode.intensity(i, j);
      total += p;
      const double x = mg.x(i) + px;
      const double y = mg.y(j) + py;
      if (x < grid.x0 - tol_x || x > grid.x_max() + tol_x || y < grid.y0 - tol_y || y > grid.y_max() + tol_y)
        outside += p;
    }
  if (!(total > 0.0)) fail_validation("invalid_layout", "channel mode carries no power");
  if (outside > 1e-6 * total)
    fail_computation("grid_overflow", "channel " + std::to_string(k) + " clips " +
                                          std::to_string(outside / total) + " of its power at the grid edge");

  ScalarField2D out(grid, mode.wavelength());
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i) out.at(i, j) = mode.sample(grid.x(i) - px, grid.y(j) - py);
  const double p = out.power();
  if (!(p > 0.0)) fail_computation("grid_overflow", "channel " + std::to_string(k) + " misses the grid");
  const double target = layout.power(k) * (1.0 - outside / total);
  out *= std::sqrt(target / p);
  return out;
}

ScalarField2D compose_facet_field(const ChannelLayout& layout, const FieldGrid& grid, Summation summation) {
  layout.validate();
  ScalarField2D sum(grid, layout.mode.wavelength());
  if (summation == Summation::Coherent) {
    for (std::size_t k = 0; k < layout.positions.size(); ++k) sum += place_channel(layout, k, grid);
    return sum;
  }
  std::vector<double> intensity(grid.size(), 0.0);
  for (std::size_t k = 0; k < layout.positions.size(); ++k) {
    const auto ch = place_channel(layout, k, grid);
    const auto s = ch.samples();
    for (std::size_t n = 0; n < s.size(); ++n) intensity[n] += std::norm(s[n]);
  }
  auto out = sum.samples();
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = std::sqrt(intensity[n]);
  return sum;
}

ScalarField2D image_field(const ScalarField2D& field, const ImagingSystemSpec& sys) {
  sys.validate();
  const auto& g = field.grid();
  const double lambda = field.wavelength();
  if (!(lambda > 0.0)) fail_validation("invalid_field", "field wavelength is not set");
  if (g.nx < 2 || g.ny < 2) fail_validation("invalid_field", "field grid must be at least 2x2");
  const double limit = lambda / (4.0 * sys.numerical_aperture);
  if (g.dx > limit * (1.0 + 1e-12) || g.dy > limit * (1.0 + 1e-12))
    fail_validation("undersampled", "grid spacing exceeds lambda/(4 NA) = " + std::to_string(limit) + " m");

  std::vector<complex> buf(field.samples().begin(), field.samples().end());
  Plan fwd, inv;
  {
    std::lock_guard lock(fftw_planner_mutex());
    const int n0 = static_cast<int>(g.ny);
    const int n1 = static_cast<int>(g.nx);
    fwd.p = fftw_plan_dft_2d(n0, n1, as_fftw(buf.data()), as_fftw(buf.data()), FFTW_FORWARD, FFTW_ESTIMATE);
    inv.p = fftw_plan_dft_2d(n0, n1, as_fftw(buf.data()), as_fftw(buf.data()), FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  if (!fwd.p || !inv.p) fail_computation("fft_failed", "FFT plan creation failed");
  fftw_execute(fwd.p);

  const double cutoff2 = std::pow(sys.numerical_aperture / lambda, 2);
  std::vector<double> fx(g.nx);
  for (std::size_t i = 0; i < g.nx; ++i) fx[i] = frequency(i, g.nx, g.dx);
  for (std::size_t j = 0; j < g.ny; ++j) {
    const double fy = frequency(j, g.ny, g.dy);
    for (std::size_t i = 0; i < g.nx; ++i)
      if (fx[i] * fx[i] + fy * fy > cutoff2) buf[j * g.nx + i] = 0.0;
  }
  fftw_execute(inv.p);

  const double m = sys.magnification;
  FieldGrid og{g.nx, g.ny, g.dx * m, g.dy * m, g.x0 * m, g.y0 * m};
  ScalarField2D out(og, lambda);
  const double scale = 1.0 / (static_cast<double>(g.nx) * static_cast<double>(g.ny) * m);
  auto o = out.samples();
  for (std::size_t n = 0; n < buf.size(); ++n) o[n] = buf[n] * scale;
  return out;
}

std::vector<double> disc_powers(const ScalarField2D& field, const std::vector<std::pair<double, double>>& targets,
                                double radius) {
  const auto& g = field.grid();
  if (!(radius >= std::max(g.dx, g.dy) * (1.0 - 1e-12)))
    fail_validation("radius_too_small", "integration radius must cover at least one grid cell");
  constexpr int kSub = 4;
  std::vector<double> out;
  out.reserve(targets.size());
  for (const auto& [tx, ty] : targets) {
    if (tx < g.x0 || tx > g.x_max() || ty < g.y0 || ty > g.y_max())
      fail_validation("target_out_of_grid", "integration target lies outside the grid");
    const auto lo_i = static_cast<long>(std::floor((tx - radius - g.x0) / g.dx)) - 1;
    const auto hi_i = static_cast<long>(std::ceil((tx + radius - g.x0) / g.dx)) + 1;
    const auto lo_j = static_cast<long>(std::floor((ty - radius - g.y0) / g.dy)) - 1;
    const auto hi_j = static_cast<long>(std::ceil((ty + radius - g.y0) / g.dy)) + 1;
    double p = 0.0;
    for (long j = lo_j; j <= hi_j; ++j)
      for (long i = lo_i; i <= hi_i; ++i)
        for (int b = 0; b < kSub; ++b)
          for (int a = 0; a < kSub; ++a) {
            const double x = g.x0 + (static_cast<double>(i) + (a + 0.5) / kSub - 0.5) * g.dx;
            const double y = g.y0 + (static_cast<double>(j) + (b + 0.5) / kSub - 0.5) * g.dy;
            if ((x - tx) * (x - tx) + (y - ty) * (y - ty) > radius * radius) continue;
            p += std::norm(field.sample(x, y));
          }
    out.push_back(p * g.dx * g.dy / (kSub * kSub));
  }
  return out;
}

DbMatrix crosstalk_from_powers(const std::vector<std::vector<double>>& powers, double floor_db) {
  const std::size_t n = powers.size();
  DbMatrix m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = powers[i];
    if (p.size() != n) fail_validation("invalid_layout", "power table must be square");
    if (!(p[i] > 0.0)) fail_computation("no_signal", "channel " + std::to_string(i) + " has no power at its target");
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      m[i][j] = p[j] > 0.0 ? std::max(10.0 * std::log10(p[j] / p[i]), floor_db) : floor_db;
    }
  }
  return m;
}

DbMatrix crosstalk_matrix(const std::vector<ScalarField2D>& per_channel,
                          const std::vector<std::pair<double, double>>& targets, double radius, double floor_db) {
  if (per_channel.size() != targets.size())
    fail_validation("invalid_layout", "one channel field per target is required");
  std::vector<std::vector<double>> powers;
  for (const auto& f : per_channel) powers.push_back(disc_powers(f, targets, radius));
  return crosstalk_from_powers(powers, floor_db);
}

double worst_nearest_neighbor_db(const DbMatrix& m) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (i > 0) worst = std::max(worst, m[i][i - 1]);
    if (i + 1 < m.size()) worst = std::max(worst, m[i][i + 1]);
  }
  return worst;
}

nlohmann::json plane_summary(const ScalarField2D& field, const std::vector<std::pair<double, double>>& targets,
                             double radius, const DbMatrix& crosstalk) {
  nlohmann::json j;
  j["peak_positions"] = nlohmann::json::array();
  for (const auto& [x, y] : targets) j["peak_positions"].push_back({x, y});
  j["peak_powers"] = disc_powers(field, targets, radius);
  j["integration_radius"] = radius;
  j["crosstalk_db"] = crosstalk;
  return j;
}

}  // namespace ionguide
