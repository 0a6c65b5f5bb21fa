#pragma once

namespace mirage {

// Error function via the Abramowitz-Stegun 7.1.26 rational approximation.
// Absolute error <= 1.5e-7; odd symmetry holds exactly.
double erf_approx(double x);

// Standard normal CDF, Phi(z) = (1 + erf(z/sqrt(2)))/2. Absolute error
// <= 1e-7 against a series evaluation of erf.
double std_normal_cdf(double z);

}  // namespace mirage
