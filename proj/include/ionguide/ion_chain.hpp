#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ionguide/config.hpp"

namespace ionguide {

struct IonChainSpec {
  std::size_t n_ions = 1;
  double mass = 0.0;             // kg
  double axial_frequency = 0.0;  // Hz, secular (not angular)
  double charge = 1.602176634e-19;  // C

  void validate() const;
};

struct IonChain {
  double length_scale = 0.0;                // m
  std::vector<double> positions;            // m, centred on 0
  std::vector<double> dimensionless_positions;

  double min_gap() const;
};

struct EquilibriumOptions {
  int max_iterations = 200;
  double force_tolerance = 1e-10;
};

// (q^2 / (4 pi eps0 m w^2))^(1/3) with w = 2 pi f.
double length_scale(const IonChainSpec& spec, const PhysicalConstants& constants = {});

// Minimiser of sum u^2/2 + sum_{i<j} 1/|u_i - u_j|, ascending. 1 <= n <= 50.
std::vector<double> equilibrium_positions(std::size_t n_ions, const EquilibriumOptions& opts = {});

IonChain physical_positions(const IonChainSpec& spec, const PhysicalConstants& constants = {},
                            const EquilibriumOptions& opts = {});

// Dimensionless potential energy and force residual, exposed for checking.
double chain_potential(const std::vector<double>& u);
double max_force_residual(const std::vector<double>& u);

// CSV header index,u,x_m
void write_chain_csv(const IonChain& chain, const std::string& path);
std::string chain_csv(const IonChain& chain);

}  // namespace ionguide
