#include "ionguide/design_solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ionguide/error.hpp"

namespace ionguide {

namespace {

// Rows: s_q = M s_c, w_q = M w_c, na_c w_c = C lambda, na_q w_q = C lambda,
// written on log-parameters. Column order follows DesignParam.
constexpr int kConstraints[4][kDesignParamCount] = {
    {0, -1, 0, 0, 1, 0, -1},
    {-1, 0, 0, 1, 0, 0, -1},
    {1, 0, 1, 0, 0, 0, 0},
    {0, 0, 0, 1, 0, 1, 0},
};

std::size_t col(DesignParam p) { return static_cast<std::size_t>(p); }

// Fraction-free Gaussian elimination on small integer matrices.
int integer_rank(std::vector<std::vector<long long>> m) {
  const std::size_t rows = m.size();
  const std::size_t cols = rows ? m[0].size() : 0;
  std::size_t r = 0;
  for (std::size_t c = 0; c < cols && r < rows; ++c) {
    std::size_t piv = r;
    while (piv < rows && m[piv][c] == 0) ++piv;
    if (piv == rows) continue;
    std::swap(m[piv], m[r]);
    for (std::size_t i = r + 1; i < rows; ++i) {
      const long long f = m[i][c];
      if (f == 0) continue;
      for (std::size_t k = c; k < cols; ++k) m[i][k] = m[i][k] * m[r][c] - m[r][k] * f;
    }
    ++r;
  }
  return static_cast<int>(r);
}

std::vector<DesignParam> unknowns_of(const std::array<DesignParam, 3>& known) {
  std::vector<DesignParam> u;
  for (auto p : kAllDesignParams)
    if (std::find(known.begin(), known.end(), p) == known.end()) u.push_back(p);
  return u;
}

}  // namespace

std::string to_string(DesignParam p) {
  switch (p) {
    case DesignParam::SpotChip: return "w_c";
    case DesignParam::SpacingChip: return "s_c";
    case DesignParam::NaChip: return "na_c";
    case DesignParam::SpotQubit: return "w_q";
    case DesignParam::SpacingQubit: return "s_q";
    case DesignParam::NaQubit: return "na_q";
    case DesignParam::Magnification: return "M";
  }
  return "?";
}

DesignParam design_param_from_string(std::string_view name) {
  for (auto p : kAllDesignParams)
    if (name == to_string(p)) return p;
  if (name == "na_chip") return DesignParam::NaChip;
  if (name == "na_qubit") return DesignParam::NaQubit;
  if (name == "spot_chip") return DesignParam::SpotChip;
  if (name == "spot_qubit") return DesignParam::SpotQubit;
  if (name == "spacing_chip") return DesignParam::SpacingChip;
  if (name == "spacing_qubit") return DesignParam::SpacingQubit;
  if (name == "magnification" || name == "m") return DesignParam::Magnification;
  fail_validation("unknown_parameter", "unknown design parameter '" + std::string(name) + "'");
}

double DesignParameters::get(DesignParam p) const {
  switch (p) {
    case DesignParam::SpotChip: return spot_chip;
    case DesignParam::SpacingChip: return spacing_chip;
    case DesignParam::NaChip: return na_chip;
    case DesignParam::SpotQubit: return spot_qubit;
    case DesignParam::SpacingQubit: return spacing_qubit;
    case DesignParam::NaQubit: return na_qubit;
    case DesignParam::Magnification: return magnification;
  }
  return 0.0;
}

void DesignParameters::set(DesignParam p, double v) {
  switch (p) {
    case DesignParam::SpotChip: spot_chip = v; break;
    case DesignParam::SpacingChip: spacing_chip = v; break;
    case DesignParam::NaChip: na_chip = v; break;
    case DesignParam::SpotQubit: spot_qubit = v; break;
    case DesignParam::SpacingQubit: spacing_qubit = v; break;
    case DesignParam::NaQubit: na_qubit = v; break;
    case DesignParam::Magnification: magnification = v; break;
  }
}

double DesignParameters::constraint_residual(double c) const {
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); };
  return std::max({rel(spacing_qubit, magnification * spacing_chip), rel(spot_qubit, magnification * spot_chip),
                   rel(na_chip, c * wavelength / spot_chip), rel(na_qubit, c * wavelength / spot_qubit)});
}

bool DesignParameters::consistent(double rel_tol, double c) const {
  for (auto p : kAllDesignParams)
    if (!(get(p) > 0.0)) return false;
  if (na_chip > 1.0 || na_qubit > 1.0 || !(wavelength > 0.0)) return false;
  return constraint_residual(c) <= rel_tol;
}

int unknown_rank(const std::array<DesignParam, 3>& known) {
  const auto u = unknowns_of(known);
  if (u.size() != 4) fail_validation("invalid_known_set", "known parameters must be three distinct names");
  std::vector<std::vector<long long>> m(4, std::vector<long long>(4));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) m[r][c] = kConstraints[r][col(u[c])];
  return integer_rank(std::move(m));
}

bool is_independent(const std::array<DesignParam, 3>& known) { return unknown_rank(known) == 4; }

DesignParameters solve_design(const KnownSet& known, double wavelength, const DesignSolverOptions& opts) {
  if (known.size() != 3) fail_validation("invalid_known_set", "exactly three known parameters are required");
  if (!(wavelength > 0.0)) fail_validation("invalid_wavelength", "wavelength must be positive");
  if (!(opts.na_spot_constant > 0.0)) fail_validation("invalid_config", "NA-spot constant must be positive");
  std::array<DesignParam, 3> names{known[0].first, known[1].first, known[2].first};
  for (const auto& [p, v] : known) {
    if (!(v > 0.0) || !std::isfinite(v))
      fail_validation("out_of_range", to_string(p) + " must be positive and finite");
    if ((p == DesignParam::NaChip || p == DesignParam::NaQubit) && v > 1.0)
      fail_validation("out_of_range", to_string(p) + " exceeds 1");
  }
  const auto unknown = unknowns_of(names);
  if (unknown.size() != 4) fail_validation("invalid_known_set", "known parameters must be three distinct names");

  Eigen::Matrix4d a;
  Eigen::Vector4d b;
  const double log_c_lambda = std::log(opts.na_spot_constant * wavelength);
  for (int r = 0; r < 4; ++r) {
    b[r] = (r >= 2) ? log_c_lambda : 0.0;
    for (const auto& [p, v] : known) b[r] -= kConstraints[r][col(p)] * std::log(v);
    for (int c = 0; c < 4; ++c) a(r, c) = kConstraints[r][col(unknown[static_cast<std::size_t>(c)])];
  }

  if (unknown_rank(names) < 4) {
    // Dependent knowns either contradict a constraint or leave a free direction.
    const Eigen::Vector4d x = a.completeOrthogonalDecomposition().solve(b);
    const double residual = (a * x - b).cwiseAbs().maxCoeff();
    if (residual > opts.consistency_tolerance)
      fail_validation("inconsistent", "known parameters violate a design constraint");
    fail_validation("underdetermined", "known parameters are not independent under the design constraints");
  }

  const Eigen::Vector4d x = a.fullPivLu().solve(b);
  DesignParameters out;
  out.wavelength = wavelength;
  for (const auto& [p, v] : known) out.set(p, v);
  for (std::size_t c = 0; c < 4; ++c) out.set(unknown[c], std::exp(x[static_cast<Eigen::Index>(c)]));
  // Re-derive the NA values directly so the NA law holds to rounding.
  if (std::find(names.begin(), names.end(), DesignParam::NaChip) == names.end())
    out.na_chip = opts.na_spot_constant * wavelength / out.spot_chip;
  if (std::find(names.begin(), names.end(), DesignParam::NaQubit) == names.end())
    out.na_qubit = opts.na_spot_constant * wavelength / out.spot_qubit;
  for (auto p : kAllDesignParams)
    if (!(out.get(p) > 0.0) || !std::isfinite(out.get(p)))
      fail_validation("out_of_range", "solved " + to_string(p) + " is not positive");
  if (out.na_chip > 1.0) fail_validation("out_of_range", "solved na_c exceeds 1");
  if (out.na_qubit > 1.0) fail_validation("out_of_range", "solved na_q exceeds 1");
  return out;
}

PitchCheck check_pitch_ratio(const DesignParameters& params, const IonChain& chain, double band_low,
                             double band_high) {
  if (chain.positions.size() < 2) fail_validation("invalid_chain", "pitch check needs at least two ions");
  PitchCheck pc;
  pc.ratio = params.spacing_chip / chain.min_gap();
  pc.in_band = pc.ratio >= band_low && pc.ratio <= band_high;
  return pc;
}

nlohmann::json design_to_json(const DesignParameters& p) {
  nlohmann::json j;
  for (auto q : kAllDesignParams) j[to_string(q)] = p.get(q);
  j["wavelength"] = p.wavelength;
  return j;
}

DesignParameters design_from_json(const nlohmann::json& j) {
  DesignParameters p;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "wavelength") {
      p.wavelength = it.value().get<double>();
      continue;
    }
    p.set(design_param_from_string(it.key()), it.value().get<double>());
  }
  return p;
}

std::string design_table(const DesignParameters& p) {
  std::ostringstream out;
  char line[96];
  auto row = [&](const char* name, double v, const char* unit) {
    std::snprintf(line, sizeof line, "%-6s %14.6g %s\n", name, v, unit);
    out << line;
  };
  row("w_c", p.spot_chip * 1e6, "um");
  row("s_c", p.spacing_chip * 1e6, "um");
  row("na_c", p.na_chip, "");
  row("w_q", p.spot_qubit * 1e6, "um");
  row("s_q", p.spacing_qubit * 1e6, "um");
  row("na_q", p.na_qubit, "");
  row("M", p.magnification, "");
  row("lambda", p.wavelength * 1e9, "nm");
  return out.str();
}

}  // namespace ionguide
