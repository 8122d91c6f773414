#pragma once

#include <cmath>

#include "dwm/errors.hpp"

namespace dwm {

// Zeroth-order Bessel function of the first kind, used for the Jakes
// correlation coefficient rho = J0(2*pi*f_d*T_s). Contract: |x| < 1e3,
// absolute error < 1e-10 against the power-series reference.
inline double bessel_j0(double x) {
  if (!std::isfinite(x) || std::abs(x) >= 1e3) {
    throw NumericalError("bessel_j0: argument out of contract range |x| < 1e3");
  }
  return std::cyl_bessel_j(0.0, std::abs(x));  // J0 is even
}

}  // namespace dwm
