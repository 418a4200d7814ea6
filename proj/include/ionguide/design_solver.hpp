#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ionguide/ion_chain.hpp"
#include "json.hpp"

namespace ionguide {

enum class DesignParam { SpotChip, SpacingChip, NaChip, SpotQubit, SpacingQubit, NaQubit, Magnification };

inline constexpr std::size_t kDesignParamCount = 7;
inline constexpr std::array<DesignParam, kDesignParamCount> kAllDesignParams{
    DesignParam::SpotChip,  DesignParam::SpacingChip,  DesignParam::NaChip,       DesignParam::SpotQubit,
    DesignParam::SpacingQubit, DesignParam::NaQubit, DesignParam::Magnification};

// Short names: w_c s_c na_c w_q s_q na_q M
std::string to_string(DesignParam p);
DesignParam design_param_from_string(std::string_view name);

struct DesignParameters {
  double spot_chip = 0.0;
  double spacing_chip = 0.0;
  double na_chip = 0.0;
  double spot_qubit = 0.0;
  double spacing_qubit = 0.0;
  double na_qubit = 0.0;
  double magnification = 0.0;
  double wavelength = 0.0;

  double get(DesignParam p) const;
  void set(DesignParam p, double v);

  // Largest relative violation of the four constraints.
  double constraint_residual(double na_spot_constant = 0.31830988618379067) const;
  bool consistent(double rel_tol = 1e-9, double na_spot_constant = 0.31830988618379067) const;
};

using KnownSet = std::vector<std::pair<DesignParam, double>>;

struct DesignSolverOptions {
  double na_spot_constant = 0.31830988618379067;  // NA = C * lambda / w
  double consistency_tolerance = 1e-9;           // relative, for dependent known sets
};

// Rank of the constraint matrix restricted to the unknown columns; 4 means
// the three knowns determine everything.
int unknown_rank(const std::array<DesignParam, 3>& known);
bool is_independent(const std::array<DesignParam, 3>& known);

// Errors: "underdetermined", "inconsistent", "out_of_range" (validation kind).
DesignParameters solve_design(const KnownSet& known, double wavelength, const DesignSolverOptions& opts = {});

struct PitchCheck {
  double ratio = 0.0;
  bool in_band = false;
};

PitchCheck check_pitch_ratio(const DesignParameters& params, const IonChain& chain, double band_low = 5.0,
                             double band_high = 10.0);

nlohmann::json design_to_json(const DesignParameters& p);
DesignParameters design_from_json(const nlohmann::json& j);
std::string design_table(const DesignParameters& p);

}  // namespace ionguide
