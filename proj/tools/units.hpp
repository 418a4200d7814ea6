#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace units {

enum class Dimension { Length, Frequency, Mass, Dimensionless };

struct UnitError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// "650nm", "73.4 um", "34khz", "138amu", "0.187". A bare number is taken in
// SI base units (m, Hz, kg). Suffixes are case-insensitive.
double parse(std::string_view text, Dimension dim);

std::string_view name(Dimension dim);

}  // namespace units
