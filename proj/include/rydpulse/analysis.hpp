#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "rydpulse/propagation.hpp"
#include "rydpulse/units.hpp"

namespace rydpulse {

/// Parameters of the steady-state response of one probe component under a
/// constant interaction potential v0.
struct SusceptibilityParams {
  double delta_p = 0.0;  // one-photon detuning, rad/us
  double omega_c = 0.0;  // control Rabi frequency, rad/us
  double gamma = 1.0;
  double gamma_r = 0.0;
  double v0 = 0.0;
};

/// chi(delta) = i (gamma_r + i(delta + v0)) / [(gamma + i delta_p)(gamma_r + i(delta + v0)) + omega_c^2]
/// in units of 1/(rad/us). delta is the two-photon detuning.
cplx susceptibility(double delta, const SusceptibilityParams& params);

/// gamma * chi on a uniform two-photon-detuning axis. The two-level
/// resonance peak has imaginary part 1 in this normalization.
struct SusceptibilityCurve {
  std::vector<double> delta;
  std::vector<cplx> chi;
  SusceptibilityParams params;
};
SusceptibilityCurve susceptibility_curve(const SusceptibilityParams& params, double lo, double hi, std::size_t n);

/// Slope of Re chi against the probe frequency at two-photon detuning delta.
/// Raising the probe frequency by nu lowers both delta and delta_p by nu, so
/// this is -d/d(nu) applied through both arguments. Positive at the EIT point
/// (1 / omega_c^2) and for normal dispersion.
double dispersion_slope(const SusceptibilityParams& params, double delta = 0.0);

/// c / (1 + G^2 * dispersion_slope).
double group_velocity_analytic(const SusceptibilityParams& params, double coupling_G, double delta = 0.0);

struct TrajectoryPoint {
  double t = 0.0;
  double z_peak = 0.0;  // local propagation coordinate, um
  double v_g = 0.0;     // um/us, valid only if v_valid
  bool valid = false;   // peak found away from the tips
  bool v_valid = false;
};

/// Peak of the named magnitude history along the pulse's own propagation
/// axis, quadratic-interpolated, with an 11-sample local-quadratic
/// derivative. Empty if the field is identically zero.
std::vector<TrajectoryPoint> trajectory(const SimulationResult& result, std::string_view field, std::size_t pulse);

/// Exit over entry energy of a pulse over the whole run.
double transmission(const SimulationResult& result, std::size_t pulse);

/// Length over the delay between input and output flux centroids.
double transit_group_velocity(const SimulationResult& result, std::size_t pulse);

/// Recorded row at which two counter-propagating peaks first meet (physical
/// coordinates), considering rows where both peaks are valid. Without a
/// crossing, the row of smallest separation.
std::optional<std::size_t> closest_approach(const std::vector<TrajectoryPoint>& a,
                                            const std::vector<TrajectoryPoint>& b, double length_L);

struct G2Curve {
  std::vector<double> tau;
  std::vector<double> value;
};

/// g2(tau) ~ |E0_1(L) E_2(L - v_g tau)|^2 on the final snapshot, with the
/// pulse roles exchanged for negative tau. Positions are clamped to the grid.
G2Curve g2_estimate(const SimulationResult& result, double v_g, const std::vector<double>& tau);

/// Largest |V| seen by a pulse during the run, rad/us.
double potential_peak(const SimulationResult& result, std::size_t pulse);

/// Smallest free-reference norm after the pulse has fully entered, divided
/// by its value at that moment.
double free_norm_min_ratio(const SimulationResult& result, std::size_t pulse);

}  // namespace rydpulse
