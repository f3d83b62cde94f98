#pragma once

// Unit conventions used throughout the library:
//   time        microseconds (us)
//   length      micrometres (um)
//   rates       angular frequency, rad/us
//   C6          rad * um^6 / us
// Field amplitudes are stored Rabi-scaled (Omega_p = g * E) so that only the
// collective coupling G = g * sqrt(N) ever enters the dynamics.

#include <complex>
#include <numbers>

namespace rydpulse {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Speed of light in vacuum, um/us.
inline constexpr double kSpeedOfLight = 2.998e8;

/// First zero of the Bessel function J0.
inline constexpr double kBesselJ0FirstZero = 2.404825557695773;

/// "X MHz" (ordinary frequency) to rad/us.
constexpr double mhz_to_angular(double mhz) { return kTwoPi * mhz; }

/// C6 quoted in GHz um^6 to rad um^6 / us. When the quoted number is already
/// an angular rate no 2 pi is applied.
constexpr double c6_from_ghz_um6(double value, bool is_angular) {
  return (is_angular ? 1.0 : kTwoPi) * 1.0e3 * value;
}

}  // namespace rydpulse
