#pragma once

#include <cmath>

#include "dwm/errors.hpp"

namespace dwm {

// All power math inside the library is linear milliwatts; dBm exists only at
// the config/report boundary.
template <typename T>
T dbm_to_mw(T p_dbm) {
  if (!std::isfinite(p_dbm)) throw ConfigError("dbm_to_mw: non-finite input");
  return std::pow(T(10), p_dbm / T(10));
}

template <typename T>
T mw_to_dbm(T p_mw) {
  if (!std::isfinite(p_mw) || p_mw <= T(0)) throw ConfigError("mw_to_dbm: input must be finite and > 0");
  return T(10) * std::log10(p_mw);
}

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

}  // namespace dwm
