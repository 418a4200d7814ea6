#include "ionguide/ion_chain.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ionguide/error.hpp"

namespace ionguide {

namespace {

// Gradient of the dimensionless potential.
Eigen::VectorXd gradient(const Eigen::VectorXd& u) {
  const auto n = u.size();
  Eigen::VectorXd g = u;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = u[i] - u[j];
      g[i] -= (d > 0 ? 1.0 : -1.0) / (d * d);
    }
  return g;
}

Eigen::MatrixXd hessian(const Eigen::VectorXd& u) {
  const auto n = u.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double c = 2.0 / std::pow(std::abs(u[i] - u[j]), 3);
      h(i, i) += c;
      h(i, j) -= c;
    }
  return h;
}

bool strictly_increasing(const Eigen::VectorXd& u) {
  for (Eigen::Index i = 1; i < u.size(); ++i)
    if (!(u[i] > u[i - 1])) return false;
  return true;
}

double potential(const Eigen::VectorXd& u) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    v += 0.5 * u[i] * u[i];
    for (Eigen::Index j = i + 1; j < u.size(); ++j) v += 1.0 / std::abs(u[i] - u[j]);
  }
  return v;
}

}  // namespace

void IonChainSpec::validate() const {
  if (n_ions < 1) fail_validation("invalid_chain", "n_ions must be at least 1");
  if (n_ions > 50) fail_validation("invalid_chain", "n_ions above 50 is not supported");
  if (!(mass > 0.0)) fail_validation("invalid_chain", "ion mass must be positive");
  if (!(axial_frequency > 0.0)) fail_validation("invalid_chain", "axial frequency must be positive");
  if (!(charge != 0.0) || !std::isfinite(charge)) fail_validation("invalid_chain", "ion charge must be non-zero");
}

double IonChain::min_gap() const {
  if (positions.size() < 2) fail_validation("invalid_chain", "a gap needs at least two ions");
  double g = positions[1] - positions[0];
  for (std::size_t i = 2; i < positions.size(); ++i) g = std::min(g, positions[i] - positions[i - 1]);
  return g;
}

double length_scale(const IonChainSpec& spec, const PhysicalConstants& c) {
  spec.validate();
  const double omega = 2.0 * std::numbers::pi * spec.axial_frequency;
  return std::cbrt(spec.charge * spec.charge /
                   (4.0 * std::numbers::pi * c.vacuum_permittivity * spec.mass * omega * omega));
}

double chain_potential(const std::vector<double>& u) {
  return potential(Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size())));
}

double max_force_residual(const std::vector<double>& u) {
  const auto g = gradient(Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size())));
  return g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
}

std::vector<double> equilibrium_positions(std::size_t n_ions, const EquilibriumOptions& opts) {
  if (n_ions < 1 || n_ions > 50) fail_validation("invalid_chain", "n_ions must be in [1, 50]");
  const auto n = static_cast<Eigen::Index>(n_ions);
  Eigen::VectorXd u(n);
  for (Eigen::Index i = 0; i < n; ++i) u[i] = 0.6 * (static_cast<double>(i) - 0.5 * static_cast<double>(n - 1));
  if (n_ions == 1) return {0.0};

  // Damped Newton; the step is halved until ordering is kept and the
  // force norm drops.
  Eigen::VectorXd g = gradient(u);
  for (int it = 0; it < opts.max_iterations; ++it) {
    if (g.cwiseAbs().maxCoeff() < opts.force_tolerance) break;
    const Eigen::VectorXd step = hessian(u).ldlt().solve(-g);
    double t = 1.0;
    Eigen::VectorXd trial = u + step;
    Eigen::VectorXd g_trial;
    while (true) {
      trial = u + t * step;
      if (strictly_increasing(trial)) {
        g_trial = gradient(trial);
        if (g_trial.norm() < g.norm() || t < 1e-8) break;
      }
      t *= 0.5;
      if (t < 1e-12) fail_computation("no_convergence", "ion chain line search stalled");
    }
    u = trial;
    g = g_trial;
  }
  if (!(g.cwiseAbs().maxCoeff() < opts.force_tolerance))
    fail_computation("no_convergence", "ion chain equilibrium did not converge within the iteration cap");

  // Symmetrise: the exact minimiser is mirror symmetric.
  for (Eigen::Index i = 0; i < n / 2; ++i) {
    const double a = 0.5 * (u[n - 1 - i] - u[i]);
    u[i] = -a;
    u[n - 1 - i] = a;
  }
  if (n % 2) u[n / 2] = 0.0;
  return {u.data(), u.data() + n};
}

IonChain physical_positions(const IonChainSpec& spec, const PhysicalConstants& constants,
                            const EquilibriumOptions& opts) {
  spec.validate();
  IonChain chain;
  chain.length_scale = length_scale(spec, constants);
  chain.dimensionless_positions = equilibrium_positions(spec.n_ions, opts);
  chain.positions.reserve(spec.n_ions);
  for (double u : chain.dimensionless_positions) chain.positions.push_back(u * chain.length_scale);
  return chain;
}

std::string chain_csv(const IonChain& chain) {
  std::ostringstream out;
  out.precision(12);
  out << "index,u,x_m\n";
  for (std::size_t i = 0; i < chain.positions.size(); ++i)
    out << i << ',' << chain.dimensionless_positions[i] << ',' << chain.positions[i] << '\n';
  return out.str();
}

void write_chain_csv(const IonChain& chain, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_io("write_failed", "cannot write '" + path + "'");
  out << chain_csv(chain);
  if (!out) fail_io("write_failed", "error while writing '" + path + "'");
}

}  // namespace ionguide
