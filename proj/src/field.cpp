#include "ionguide/field.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ionguide/error.hpp"

namespace ionguide {

FieldGrid FieldGrid::centered(std::size_t nx, std::size_t ny, double dx, double dy, double cx, double cy) {
  FieldGrid g;
  g.nx = nx;
  g.ny = ny;
  g.dx = dx;
  g.dy = dy;
  g.x0 = cx - 0.5 * static_cast<double>(nx - 1) * dx;
  g.y0 = cy - 0.5 * static_cast<double>(ny - 1) * dy;
  return g;
}

ScalarField2D::ScalarField2D(FieldGrid grid, double wavelength) : grid_(grid), wavelength_(wavelength) {
  if (grid_.nx < 2 || grid_.ny < 2) fail_validation("invalid_field", "field grid must be at least 2x2");
  if (!(grid_.dx > 0.0) || !(grid_.dy > 0.0)) fail_validation("invalid_field", "field spacing must be positive");
  if (!(wavelength_ > 0.0)) fail_validation("invalid_field", "field wavelength must be positive");
  samples_.assign(grid_.size(), complex{});
}

double ScalarField2D::power() const {
  double sum = 0.0;
  for (const auto& s : samples_) sum += std::norm(s);
  return sum * grid_.dx * grid_.dy;
}

complex ScalarField2D::sample(double x, double y) const {
  const double fx = (x - grid_.x0) / grid_.dx;
  const double fy = (y - grid_.y0) / grid_.dy;
  if (fx < 0.0 || fy < 0.0 || fx > static_cast<double>(grid_.nx - 1) || fy > static_cast<double>(grid_.ny - 1))
    return {};
  const auto i = std::min(static_cast<std::size_t>(fx), grid_.nx - 2);
  const auto j = std::min(static_cast<std::size_t>(fy), grid_.ny - 2);
  const double tx = fx - static_cast<double>(i);
  const double ty = fy - static_cast<double>(j);
  return (1 - tx) * (1 - ty) * at(i, j) + tx * (1 - ty) * at(i + 1, j) + (1 - tx) * ty * at(i, j + 1) +
         tx * ty * at(i + 1, j + 1);
}

std::pair<std::size_t, std::size_t> ScalarField2D::argmax() const {
  std::size_t best = 0;
  double best_v = -1.0;
  for (std::size_t k = 0; k < samples_.size(); ++k) {
    const double v = std::norm(samples_[k]);
    if (v > best_v) {
      best_v = v;
      best = k;
    }
  }
  return {best % grid_.nx, best / grid_.nx};
}

ScalarField2D& ScalarField2D::operator+=(const ScalarField2D& other) {
  if (other.grid_.nx != grid_.nx || other.grid_.ny != grid_.ny)
    fail_validation("grid_mismatch", "cannot add fields sampled on different grids");
  for (std::size_t k = 0; k < samples_.size(); ++k) samples_[k] += other.samples_[k];
  return *this;
}

ScalarField2D& ScalarField2D::operator*=(complex s) {
  for (auto& v : samples_) v *= s;
  return *this;
}

ScalarField2D intensity_of(const ScalarField2D& field) {
  ScalarField2D out(field.grid(), field.wavelength());
  auto dst = out.samples();
  auto src = field.samples();
  for (std::size_t k = 0; k < src.size(); ++k) dst[k] = std::norm(src[k]);
  return out;
}

ScalarField2D resample(const ScalarField2D& field, const FieldGrid& target) {
  ScalarField2D out(target, field.wavelength());
  for (std::size_t j = 0; j < target.ny; ++j)
    for (std::size_t i = 0; i < target.nx; ++i) out.at(i, j) = field.sample(target.x(i), target.y(j));
  return out;
}

void write_field_csv(const ScalarField2D& field, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_io("write_failed", "cannot write '" + path + "'");
  out.precision(12);
  out << "x,y,re,im\n";
  const auto& g = field.grid();
  for (std::size_t j = 0; j < g.ny; ++j)
    for (std::size_t i = 0; i < g.nx; ++i) {
      const auto v = field.at(i, j);
      out << g.x(i) << ',' << g.y(j) << ',' << v.real() << ',' << v.imag() << '\n';
    }
  if (!out) fail_io("write_failed", "error while writing '" + path + "'");
}

void write_intensity_csv(const ScalarField2D& field, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_io("write_failed", "cannot write '" + path + "'");
  out.precision(12);
  out << "x,y,intensity\n";
  const auto& g = field.grid();
  for (std::size_t j = 0; j < g.ny; ++j)
    for (std::size_t i = 0; i < g.nx; ++i) out << g.x(i) << ',' << g.y(j) << ',' << field.intensity(i, j) << '\n';
  if (!out) fail_io("write_failed", "error while writing '" + path + "'");
}

ScalarField2D read_field_csv(const std::string& path, double wavelength) {
  std::ifstream in(path);
  if (!in) fail_io("read_failed", "cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line.rfind("x,y,re,im", 0) != 0) fail_io("bad_header", "'" + path + "' must start with header x,y,re,im");

  struct Row {
    double x, y;
    complex v;
  };
  std::vector<Row> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Row r{};
    double re = 0, im = 0;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(ss >> r.x >> c1 >> r.y >> c2 >> re >> c3 >> im) || c1 != ',' || c2 != ',' || c3 != ',')
      fail_io("bad_row", "'" + path + "' line " + std::to_string(lineno) + " is not x,y,re,im");
    r.v = {re, im};
    rows.push_back(r);
  }
  std::map<double, std::size_t> xs, ys;
  for (const auto& r : rows) {
    xs.emplace(r.x, 0);
    ys.emplace(r.y, 0);
  }
  if (xs.size() < 2 || ys.size() < 2 || xs.size() * ys.size() != rows.size())
    fail_io("not_a_grid", "'" + path + "' does not describe a complete rectangular grid");
  std::size_t k = 0;
  for (auto& [x, idx] : xs) idx = k++;
  k = 0;
  for (auto& [y, idx] : ys) idx = k++;

  FieldGrid g;
  g.nx = xs.size();
  g.ny = ys.size();
  g.x0 = xs.begin()->first;
  g.y0 = ys.begin()->first;
  g.dx = (xs.rbegin()->first - g.x0) / static_cast<double>(g.nx - 1);
  g.dy = (ys.rbegin()->first - g.y0) / static_cast<double>(g.ny - 1);
  for (const auto& [x, i] : xs)
    if (std::abs(g.x(i) - x) > 1e-6 * g.dx) fail_io("not_uniform", "'" + path + "' x samples are not uniform");
  for (const auto& [y, j] : ys)
    if (std::abs(g.y(j) - y) > 1e-6 * g.dy) fail_io("not_uniform", "'" + path + "' y samples are not uniform");

  ScalarField2D field(g, wavelength);
  for (const auto& r : rows) field.at(xs.at(r.x), ys.at(r.y)) = r.v;
  return field;
}

}  // namespace ionguide
