#include "units.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <utility>

namespace units {

namespace {

struct Suffix {
  std::string_view text;
  Dimension dim;
  double scale;
};

// Longest suffixes first so "mhz" is not read as "hz" after a stray "m".
constexpr Suffix kSuffixes[] = {
    {"khz", Dimension::Frequency, 1e3},  {"mhz", Dimension::Frequency, 1e6},
    {"ghz", Dimension::Frequency, 1e9},  {"amu", Dimension::Mass, 1.66053906660e-27},
    {"hz", Dimension::Frequency, 1.0},   {"kg", Dimension::Mass, 1.0},
    {"nm", Dimension::Length, 1e-9},     {"um", Dimension::Length, 1e-6},
    {"\xc2\xb5m", Dimension::Length, 1e-6}, {"mm", Dimension::Length, 1e-3},
    {"cm", Dimension::Length, 1e-2},     {"m", Dimension::Length, 1.0},
};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

std::string_view name(Dimension dim) {
  switch (dim) {
    case Dimension::Length: return "length";
    case Dimension::Frequency: return "frequency";
    case Dimension::Mass: return "mass";
    case Dimension::Dimensionless: return "dimensionless";
  }
  return "?";
}

double parse(std::string_view text, Dimension dim) {
  std::string s = lower(text);
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
  if (s.empty()) throw UnitError("empty quantity");

  double scale = 1.0;
  for (const auto& suf : kSuffixes) {
    if (s.size() > suf.text.size() && s.ends_with(suf.text)) {
      if (suf.dim != dim)
        throw UnitError("'" + std::string(text) + "': unit is a " + std::string(name(suf.dim)) + ", expected " +
                        std::string(name(dim)));
      scale = suf.scale;
      s.resize(s.size() - suf.text.size());
      break;
    }
  }
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || end == s.c_str() || *end != '\0' || !std::isfinite(v))
    throw UnitError("'" + std::string(text) + "' is not a number with an optional " + std::string(name(dim)) +
                    " unit");
  return v * scale;
}

}  // namespace units
