#include "ionguide/mode_solver.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/UmfPackSupport>
#include <algorithm>
#include <arpack/arpack.hpp>
#include <cmath>
#include <mutex>
#include <numbers>
#include <random>

#include "ionguide/error.hpp"

namespace ionguide {

namespace {

// The ARPACK reverse-communication routines keep SAVE'd Fortran state.
std::mutex& arpack_mutex() {
  static std::mutex m;
  return m;
}

double overlap_1d(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

void validate_grid(const SimulationGrid& grid) {
  if (grid.nx < 16 || grid.ny < 16) fail_validation("invalid_grid", "grid needs at least 16 samples per axis");
  if (!(grid.x_extent > 0.0) || !(grid.y_extent > 0.0))
    fail_validation("invalid_grid", "grid extents must be positive");
}

void check_encloses(const CrossSection& xs, const SimulationGrid& grid, double margin) {
  // A little slack so that grids built by `enclosing` never fail on rounding.
  const double slack = 1e-12;
  for (const auto& c : xs.cores) {
    const bool ok = c.cx - c.width / 2 - margin >= -grid.x_extent / 2 - slack &&
                    c.cx + c.width / 2 + margin <= grid.x_extent / 2 + slack &&
                    c.cy - c.height / 2 - margin >= -grid.y_extent / 2 - slack &&
                    c.cy + c.height / 2 + margin <= grid.y_extent / 2 + slack;
    if (!ok) fail_validation("grid_margin", "grid must leave at least the required cladding margin around every core");
  }
}

struct Eigenpair {
  double beta2;
  Eigen::VectorXd vec;
};

using ShiftedLU = Eigen::UmfPackLU<Eigen::SparseMatrix<double>>;

// Eigenpairs of A closest to sigma, via Arnoldi on (A - sigma)^-1.
std::vector<Eigenpair> shift_invert_eigs(const ShiftedLU& lu, Eigen::Index n, double sigma, std::size_t nev_req,
                                         const ModeSolverOptions& opts) {
  using Index = Eigen::Index;

  const a_int nev = static_cast<a_int>(std::min<std::size_t>(nev_req, static_cast<std::size_t>(n - 2)));
  const a_int ncv = static_cast<a_int>(std::min<Index>(n, std::max<a_int>(2 * nev + 1, 30)));
  const a_int lworkl = 3 * ncv * ncv + 6 * ncv;

  std::vector<double> resid(static_cast<std::size_t>(n));
  std::mt19937_64 rng(0x5eedULL);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (auto& r : resid) r = uni(rng);

  std::vector<double> v(static_cast<std::size_t>(n * ncv)), workd(static_cast<std::size_t>(3 * n)),
      workl(static_cast<std::size_t>(lworkl));
  a_int iparam[11] = {};
  a_int ipntr[14] = {};
  iparam[0] = 1;
  iparam[2] = opts.max_arnoldi_iterations;
  iparam[6] = 1;
  a_int ido = 0;
  a_int info = 1;

  std::vector<double> dr(static_cast<std::size_t>(nev + 1)), di(static_cast<std::size_t>(nev + 1));
  std::vector<double> z(static_cast<std::size_t>(n * (nev + 1)));
  a_int nconv = 0;
  {
    std::lock_guard<std::mutex> lock(arpack_mutex());
    Eigen::VectorXd rhs(n);
    while (true) {
      arpack::naupd(ido, arpack::bmat::identity, static_cast<a_int>(n), arpack::which::largest_magnitude, nev,
                    opts.eigen_tolerance, resid.data(), ncv, v.data(), static_cast<a_int>(n), iparam, ipntr,
                    workd.data(), workl.data(), lworkl, info);
      if (ido != -1 && ido != 1) break;
      Eigen::Map<const Eigen::VectorXd> x(workd.data() + ipntr[0] - 1, n);
      Eigen::Map<Eigen::VectorXd> y(workd.data() + ipntr[1] - 1, n);
      rhs = x;
      y = lu.solve(rhs);
    }
    if (info < 0) fail_computation("eigensolver_failed", "ARPACK dnaupd returned error " + std::to_string(info));
    if (info == 1)
      fail_computation("eigensolver_no_convergence", "eigensolver hit its iteration cap before convergence");

    std::vector<a_int> select(static_cast<std::size_t>(ncv));
    std::vector<double> workev(static_cast<std::size_t>(3 * ncv));
    a_int rinfo = 0;
    arpack::neupd(1, arpack::howmny::ritz_vectors, select.data(), dr.data(), di.data(), z.data(),
                  static_cast<a_int>(n), 0.0, 0.0, workev.data(), arpack::bmat::identity, static_cast<a_int>(n),
                  arpack::which::largest_magnitude, nev, opts.eigen_tolerance, resid.data(), ncv, v.data(),
                  static_cast<a_int>(n), iparam, ipntr, workd.data(), workl.data(), lworkl, rinfo);
    if (rinfo != 0) fail_computation("eigensolver_failed", "ARPACK dneupd returned error " + std::to_string(rinfo));
    nconv = iparam[4];
  }

  std::vector<Eigenpair> out;
  for (a_int k = 0; k < nconv;) {
    const double theta = dr[static_cast<std::size_t>(k)];
    if (di[static_cast<std::size_t>(k)] != 0.0) {
      // Complex pairs occupy two columns; guided modes are real.
      k += 2;
      continue;
    }
    if (theta != 0.0) {
      Eigenpair ep;
      ep.beta2 = sigma + 1.0 / theta;
      ep.vec = Eigen::Map<const Eigen::VectorXd>(z.data() + k * n, n);
      out.push_back(std::move(ep));
    }
    ++k;
  }
  return out;
}

// Semi-vectorial operator for the dominant field component. Differences
// along the axis normal to that component carry the index-ratio weighting.
Eigen::SparseMatrix<double> build_operator(const std::vector<double>& eps, const SimulationGrid& grid,
                                          Polarization pol, double k0) {
  const std::size_t nx = grid.nx, ny = grid.ny;
  const double hx2 = grid.dx() * grid.dx();
  const double hy2 = grid.dy() * grid.dy();
  const bool weight_x = pol == Polarization::TE;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(nx * ny * 5);

  auto idx = [nx](std::size_t i, std::size_t j) { return static_cast<int>(j * nx + i); };
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const int a = idx(i, j);
      const double ea = eps[static_cast<std::size_t>(a)];
      double diag = k0 * k0 * ea;

      auto couple = [&](bool exists, std::size_t bi, std::size_t bj, double h2, bool weighted) {
        if (!exists) {
          diag -= 1.0 / h2;  // zero-field ghost with the same permittivity
          return;
        }
        const int b = idx(bi, bj);
        if (weighted) {
          const double eb = eps[static_cast<std::size_t>(b)];
          const double emid = 0.5 * (ea + eb);
          trips.emplace_back(a, b, eb / (emid * h2));
          diag -= ea / (emid * h2);
        } else {
          trips.emplace_back(a, b, 1.0 / h2);
          diag -= 1.0 / h2;
        }
      };
      couple(i > 0, i - 1, j, hx2, weight_x);
      couple(i + 1 < nx, i + 1, j, hx2, weight_x);
      couple(j > 0, i, j - 1, hy2, !weight_x);
      couple(j + 1 < ny, i, j + 1, hy2, !weight_x);
      trips.emplace_back(a, a, diag);
    }
  }
  const auto n = static_cast<Eigen::Index>(nx * ny);
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  m.makeCompressed();
  return m;
}

void validate_cross_section(const CrossSection& xs) {
  if (xs.cores.empty()) fail_validation("invalid_geometry", "cross-section has no cores");
  if (!(xs.wavelength > 0.0)) fail_validation("invalid_geometry", "wavelength must be positive");
  if (!(xs.n_clad >= 1.0)) fail_validation("invalid_geometry", "cladding index must be >= 1");
  if (!(xs.n_core >= xs.n_clad)) fail_validation("invalid_geometry", "core index must not be below cladding index");
  for (const auto& c : xs.cores)
    if (!(c.width > 0.0) || !(c.height > 0.0)) fail_validation("invalid_geometry", "core dimensions must be positive");
}

// Effective-index estimate of the fundamental mode, nudged towards n_core.
// It sits above the true top eigenvalue in practice, which keeps the
// shift-invert ordering intact while separating weakly guided modes from the
// cladding continuum far better than a shift at n_core does.
double shift_index(const CrossSection& xs, const SimulationGrid& grid, Polarization pol) {
  const auto& core = *std::max_element(xs.cores.begin(), xs.cores.end(), [](const CoreRect& a, const CoreRect& b) {
    return a.width * a.height < b.width * b.height;
  });
  const Polarization vertical = pol;
  const Polarization lateral = pol == Polarization::TE ? Polarization::TM : Polarization::TE;
  const auto slab = solve_slab_modes(core.height, xs.n_core, xs.n_clad, xs.wavelength, grid.dy(), 2e-6, vertical);
  if (slab.empty()) return xs.n_core;
  const auto eim = solve_slab_modes(core.width, slab.front(), xs.n_clad, xs.wavelength, grid.dx(), 2e-6, lateral);
  if (eim.empty()) return xs.n_core;
  return eim.front() + 0.02 * (xs.n_core - eim.front());
}

CrossSection single_core(const WaveguideGeometry& g) {
  return CrossSection{{CoreRect{0.0, 0.0, g.core_width, g.core_thickness}}, g.n_core, g.n_clad, g.wavelength};
}

std::size_t count_guided(const WaveguideGeometry& g, const GridResolution& res, Polarization pol,
                         const ModeSolverOptions& opts) {
  return solve_modes(g, res.grid_for(g.core_width, g.core_thickness), pol, 2, opts).size();
}

}  // namespace

std::string to_string(Polarization p) { return p == Polarization::TE ? "TE" : "TM"; }

Polarization polarization_from_string(const std::string& s) {
  if (s == "TE" || s == "te") return Polarization::TE;
  if (s == "TM" || s == "tm") return Polarization::TM;
  fail_validation("invalid_polarization", "polarization must be TE or TM, got '" + s + "'");
}

void WaveguideGeometry::validate() const {
  if (!(core_width > 0.0) || !(core_thickness > 0.0))
    fail_validation("invalid_geometry", "core width and thickness must be positive");
  if (!(wavelength > 0.0)) fail_validation("invalid_geometry", "wavelength must be positive");
  if (!(n_clad >= 1.0)) fail_validation("invalid_geometry", "cladding index must be >= 1");
  if (!(n_core >= n_clad)) fail_validation("invalid_geometry", "core index must not be below cladding index");
}

FieldGrid SimulationGrid::field_grid() const {
  return FieldGrid::centered(nx, ny, dx(), dy());
}

SimulationGrid SimulationGrid::enclosing(double core_width, double core_thickness, double resolution, double margin) {
  return enclosing(core_width, core_thickness, resolution, resolution, margin);
}

SimulationGrid SimulationGrid::enclosing(double core_width, double core_thickness, double dx, double dy,
                                         double margin) {
  if (!(dx > 0.0) || !(dy > 0.0)) fail_validation("invalid_grid", "grid spacing must be positive");
  // Even sample counts keep the core centred between samples on both axes.
  auto count = [](double extent, double h) {
    auto n = static_cast<std::size_t>(std::ceil(extent / h - 1e-9));
    if (n % 2) ++n;
    return std::max<std::size_t>(n, 16);
  };
  SimulationGrid g;
  g.nx = count(core_width + 2 * margin, dx);
  g.ny = count(core_thickness + 2 * margin, dy);
  g.x_extent = static_cast<double>(g.nx) * dx;
  g.y_extent = static_cast<double>(g.ny) * dy;
  return g;
}

std::vector<double> permittivity_map(const CrossSection& xs, const SimulationGrid& grid) {
  const double dx = grid.dx(), dy = grid.dy();
  const double e_core = xs.n_core * xs.n_core, e_clad = xs.n_clad * xs.n_clad;
  std::vector<double> eps(grid.nx * grid.ny, e_clad);
  for (std::size_t j = 0; j < grid.ny; ++j) {
    const double y0 = -grid.y_extent / 2 + static_cast<double>(j) * dy;
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const double x0 = -grid.x_extent / 2 + static_cast<double>(i) * dx;
      double fill = 0.0;
      for (const auto& c : xs.cores)
        fill += overlap_1d(x0, x0 + dx, c.cx - c.width / 2, c.cx + c.width / 2) / dx *
                overlap_1d(y0, y0 + dy, c.cy - c.height / 2, c.cy + c.height / 2) / dy;
      fill = std::min(fill, 1.0);
      eps[j * grid.nx + i] = fill * e_core + (1.0 - fill) * e_clad;
    }
  }
  return eps;
}

std::vector<GuidedMode> solve_modes(const CrossSection& xs, const SimulationGrid& grid, Polarization pol,
                                    std::size_t max_modes, const ModeSolverOptions& opts) {
  validate_cross_section(xs);
  validate_grid(grid);
  check_encloses(xs, grid, opts.min_margin);
  if (max_modes < 1) fail_validation("invalid_argument", "max_modes must be at least 1");
  if (xs.n_core == xs.n_clad) return {};

  const double k0 = 2.0 * std::numbers::pi / xs.wavelength;
  const auto eps = permittivity_map(xs, grid);
  auto op = build_operator(eps, grid, pol, k0);
  const double n_shift = shift_index(xs, grid, pol);
  const double sigma = k0 * k0 * n_shift * n_shift;
  const double clad_b2 = k0 * k0 * xs.n_clad * xs.n_clad;
  for (Eigen::Index k = 0; k < op.rows(); ++k) op.coeffRef(k, k) -= sigma;
  ShiftedLU lu;
  lu.umfpackControl()[UMFPACK_IRSTEP] = 0;
  lu.compute(op);
  if (lu.info() != Eigen::Success) fail_computation("factorization_failed", "sparse LU of the shifted operator failed");

  // Ask for few eigenpairs first; the cladding continuum converges slowly, so
  // only widen the request while every returned pair is still guided.
  std::vector<Eigenpair> pairs;
  for (std::size_t nev = std::min<std::size_t>(max_modes, 2);; nev = std::min(2 * nev, max_modes)) {
    pairs = shift_invert_eigs(lu, op.rows(), sigma, nev, opts);
    std::sort(pairs.begin(), pairs.end(), [](const Eigenpair& a, const Eigenpair& b) { return a.beta2 > b.beta2; });
    const auto guided = static_cast<std::size_t>(
        std::count_if(pairs.begin(), pairs.end(), [&](const Eigenpair& p) { return p.beta2 > clad_b2; }));
    if (guided < nev || nev == max_modes) break;
  }

  std::vector<GuidedMode> modes;
  const FieldGrid fg = grid.field_grid();
  for (auto& p : pairs) {
    if (p.beta2 <= 0.0) continue;
    const double n_eff = std::sqrt(p.beta2) / k0;
    if (!(n_eff > xs.n_clad && n_eff < xs.n_core)) continue;
    if (modes.size() == max_modes) break;

    auto& v = p.vec;
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0) v = -v;
    const double norm = std::sqrt(v.squaredNorm() * fg.dx * fg.dy);
    v /= norm;

    GuidedMode m;
    m.n_eff = n_eff;
    m.polarization = pol;
    m.mode_index = modes.size();
    m.field = ScalarField2D(fg, xs.wavelength);
    auto s = m.field.samples();
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = v[static_cast<Eigen::Index>(k)];
    modes.push_back(std::move(m));
  }

  if (opts.refinement_check && !modes.empty()) {
    SimulationGrid fine = grid;
    fine.nx *= 2;
    fine.ny *= 2;
    ModeSolverOptions inner = opts;
    inner.refinement_check = false;
    const auto fine_modes = solve_modes(xs, fine, pol, 1, inner);
    const double fine_neff = fine_modes.empty() ? xs.n_clad : fine_modes.front().n_eff;
    if (std::abs(fine_neff - modes.front().n_eff) > opts.refinement_tolerance)
      fail_computation("grid_too_coarse", "fundamental n_eff moved by " +
                                              std::to_string(std::abs(fine_neff - modes.front().n_eff)) +
                                              " under grid refinement");
  }
  return modes;
}

std::vector<GuidedMode> solve_modes(const WaveguideGeometry& geom, const SimulationGrid& grid, Polarization pol,
                                    std::size_t max_modes, const ModeSolverOptions& opts) {
  geom.validate();
  return solve_modes(single_core(geom), grid, pol, max_modes, opts);
}

double single_mode_cutoff_width(const WaveguideGeometry& templ, const GridResolution& res, Polarization pol,
                                const CutoffOptions& opts) {
  templ.validate();
  if (!(opts.tolerance > 0.0) || !(opts.min_width > 0.0) || !(opts.max_width > opts.min_width))
    fail_validation("invalid_argument", "cutoff search interval or tolerance is invalid");

  auto modes_at = [&](double w) {
    WaveguideGeometry g = templ;
    g.core_width = w;
    return count_guided(g, res, pol, opts.solver);
  };

  double lo = opts.min_width;
  if (modes_at(lo) >= 2) fail_computation("cutoff_not_found", "second mode already guided at the lower search bound");
  // Expand geometrically first so that wide (expensive) grids are only built
  // when the cutoff actually lies there.
  double hi = lo;
  while (true) {
    const double next = std::min(hi * 2.0, opts.max_width);
    if (modes_at(next) >= 2) {
      lo = hi;
      hi = next;
      break;
    }
    if (next >= opts.max_width)
      fail_computation("cutoff_not_found", "no second guided mode below the upper search bound");
    hi = next;
  }
  while (hi - lo > opts.tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (modes_at(mid) >= 2)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

double coupled_power_fraction(double kappa, double length) {
  const double s = std::sin(kappa * length);
  return s * s;
}

CouplingResult coupled_pair_crosstalk(const WaveguideGeometry& geom, const GridResolution& res, Polarization pol,
                                      double separation, double interaction_length, const ModeSolverOptions& opts) {
  geom.validate();
  if (!(separation > 0.0)) fail_validation("invalid_argument", "edge-to-edge separation must be positive");
  if (!(interaction_length >= 0.0)) fail_validation("invalid_argument", "interaction length must be non-negative");

  const double pitch = geom.core_width + separation;
  CrossSection xs{{CoreRect{-pitch / 2, 0.0, geom.core_width, geom.core_thickness},
                   CoreRect{pitch / 2, 0.0, geom.core_width, geom.core_thickness}},
                  geom.n_core,
                  geom.n_clad,
                  geom.wavelength};
  const auto grid = res.grid_for(2 * geom.core_width + separation, geom.core_thickness);
  const auto modes = solve_modes(xs, grid, pol, 4, opts);

  // Parity about x = 0 separates the supermodes.
  double n_even = 0.0, n_odd = 0.0;
  bool have_even = false, have_odd = false;
  for (const auto& m : modes) {
    const auto& f = m.field;
    const auto& g = f.grid();
    double sym = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < g.ny; ++j)
      for (std::size_t i = 0; i < g.nx; ++i) {
        sym += (f.at(i, j) * std::conj(f.at(g.nx - 1 - i, j))).real();
        norm += std::norm(f.at(i, j));
      }
    const double parity = sym / norm;
    if (parity > 0.5 && !have_even) {
      n_even = m.n_eff;
      have_even = true;
    } else if (parity < -0.5 && !have_odd) {
      n_odd = m.n_eff;
      have_odd = true;
    }
  }
  if (!have_even) fail_computation("no_supermode", "coupled pair has no guided even supermode");
  CouplingResult r;
  r.n_even = n_even;
  // A cut-off odd supermode means the pair is strongly coupled beyond this
  // model; treat it as sitting at the cladding index.
  r.n_odd = have_odd ? n_odd : geom.n_clad;
  r.kappa = std::numbers::pi * std::max(0.0, r.n_even - r.n_odd) / geom.wavelength;
  r.cross_power = coupled_power_fraction(r.kappa, interaction_length);
  return r;
}

std::vector<double> solve_slab_modes(double thickness, double n_core, double n_clad, double wavelength, double dy,
                                     double margin, Polarization pol) {
  if (!(thickness > 0.0) || !(wavelength > 0.0) || !(dy > 0.0) || !(margin > 0.0))
    fail_validation("invalid_geometry", "slab dimensions, wavelength, spacing and margin must be positive");
  if (!(n_clad >= 1.0) || !(n_core >= n_clad)) fail_validation("invalid_geometry", "need n_core >= n_clad >= 1");
  if (n_core == n_clad) return {};

  auto n = static_cast<std::size_t>(std::ceil((thickness + 2 * margin) / dy - 1e-9));
  if (n % 2) ++n;
  const double extent = static_cast<double>(n) * dy;
  const double k0 = 2.0 * std::numbers::pi / wavelength;
  std::vector<double> eps(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double y0 = -extent / 2 + static_cast<double>(j) * dy;
    const double fill = overlap_1d(y0, y0 + dy, -thickness / 2, thickness / 2) / dy;
    eps[j] = fill * n_core * n_core + (1 - fill) * n_clad * n_clad;
  }
  // TE: plain second difference. TM: weighted, symmetrised by sqrt(eps).
  const bool weighted = pol == Polarization::TM;
  const double h2 = dy * dy;
  Eigen::VectorXd diag(static_cast<Eigen::Index>(n)), off(static_cast<Eigen::Index>(n - 1));
  for (std::size_t j = 0; j < n; ++j) {
    double d = k0 * k0 * eps[j];
    for (int side : {-1, 1}) {
      const bool exists = (side < 0) ? j > 0 : j + 1 < n;
      if (!exists || !weighted) {
        d -= 1.0 / h2;
        continue;
      }
      const double eb = eps[side < 0 ? j - 1 : j + 1];
      d -= eps[j] / (0.5 * (eps[j] + eb) * h2);
    }
    diag[static_cast<Eigen::Index>(j)] = d;
    if (j + 1 < n) {
      const double ea = eps[j], eb = eps[j + 1];
      off[static_cast<Eigen::Index>(j)] = weighted ? std::sqrt(ea * eb) / (0.5 * (ea + eb) * h2) : 1.0 / h2;
    }
  }
  // Guided eigenvalues lie in (k0^2 n_clad^2, k0^2 n_core^2); locate them by
  // Sturm-sequence bisection on the symmetric tridiagonal matrix.
  auto count_above = [&](double x) {
    std::size_t below = 0;
    double d = diag[0] - x;
    if (d < 0) ++below;
    for (Eigen::Index j = 1; j < diag.size(); ++j) {
      const double prev = d == 0.0 ? 1e-300 : d;
      d = diag[j] - x - off[j - 1] * off[j - 1] / prev;
      if (d < 0) ++below;
    }
    return static_cast<std::size_t>(diag.size()) - below;
  };
  const double lo_b2 = k0 * k0 * n_clad * n_clad;
  const double hi_b2 = k0 * k0 * n_core * n_core;
  const std::size_t n_guided = count_above(lo_b2) - count_above(hi_b2);
  std::vector<double> out;
  for (std::size_t m = 1; m <= n_guided; ++m) {
    // m-th largest eigenvalue: count_above(x) >= m below it.
    double lo = lo_b2, hi = hi_b2;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (count_above(mid) >= m ? lo : hi) = mid;
    }
    out.push_back(std::sqrt(0.5 * (lo + hi)) / k0);
  }
  return out;
}

double slab_cutoff_thickness(double n_core, double n_clad, double wavelength, double dy, double margin,
                             Polarization pol, double tolerance) {
  auto modes_at = [&](double t) { return solve_slab_modes(t, n_core, n_clad, wavelength, dy, margin, pol).size(); };
  double lo = dy, hi = wavelength;
  if (modes_at(lo) >= 2) fail_computation("cutoff_not_found", "slab is multimode at the smallest thickness");
  while (modes_at(hi) < 2) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e3 * wavelength) fail_computation("cutoff_not_found", "no second slab mode found");
  }
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    (modes_at(mid) >= 2 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

ModeFieldDiameter mode_field_diameter(const ScalarField2D& field) {
  const auto& g = field.grid();
  const auto [imax, jmax] = field.argmax();
  const double peak = field.intensity(imax, jmax);
  if (!(peak > 0.0)) fail_computation("mfd_undefined", "field is identically zero");
  const double level = peak * std::exp(-2.0);

  // Distance from the peak to the 1/e^2 crossing walking along one axis.
  auto crossing = [&](std::size_t n, std::size_t start, auto value, double h) {
    double total = 0.0;
    for (int dir : {-1, 1}) {
      std::size_t k = start;
      double reach = -1.0;
      while (true) {
        const bool at_edge = dir < 0 ? k == 0 : k + 1 >= n;
        if (at_edge) break;
        const std::size_t next = dir < 0 ? k - 1 : k + 1;
        const double a = value(k), b = value(next);
        if (b <= level) {
          const double t = (a - level) / (a - b);
          const double steps = static_cast<double>(dir < 0 ? start - k : k - start);
          reach = (steps + t) * h;
          break;
        }
        k = next;
      }
      if (reach < 0.0) fail_computation("mfd_undefined", "mode intensity does not fall to 1/e^2 inside the grid");
      total += reach;
    }
    return total;
  };
  ModeFieldDiameter mfd;
  mfd.mfd_x = crossing(g.nx, imax, [&](std::size_t i) { return field.intensity(i, jmax); }, g.dx);
  mfd.mfd_y = crossing(g.ny, jmax, [&](std::size_t j) { return field.intensity(imax, j); }, g.dy);
  return mfd;
}

nlohmann::json mode_summary(const GuidedMode& mode) {
  const auto mfd = mode_field_diameter(mode.field);
  return {{"n_eff", mode.n_eff},
          {"polarization", to_string(mode.polarization)},
          {"mode_index", mode.mode_index},
          {"MFD_x", mfd.mfd_x},
          {"MFD_y", mfd.mfd_y}};
}

}  // namespace ionguide
