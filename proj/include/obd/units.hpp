#pragma once

// Number-with-unit parsing for command-line quantities ("150ps", "27h", "1e-12").

#include <cctype>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace obd {

/// Parses a time given with an optional unit suffix into seconds.
/// Units: s, ms, us, ns, ps, fs, min, h, d. A bare number is seconds.
inline double parse_time(std::string_view text) {
  std::string s(text);
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("'" + s + "' is not a time");
  }
  std::string unit = s.substr(used);
  while (!unit.empty() && std::isspace(static_cast<unsigned char>(unit.front()))) unit.erase(0, 1);
  static const std::pair<const char*, double> units[] = {
      {"", 1.0},      {"s", 1.0},     {"ms", 1e-3},  {"us", 1e-6},   {"ns", 1e-9},
      {"ps", 1e-12},  {"fs", 1e-15},  {"min", 60.0}, {"h", 3600.0}, {"d", 86400.0}};
  for (const auto& [name, scale] : units)
    if (unit == name) return v * scale;
  throw std::invalid_argument("unknown time unit '" + unit + "' in '" + s + "'");
}

}  // namespace obd
