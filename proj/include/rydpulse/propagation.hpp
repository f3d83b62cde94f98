#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rydpulse/core_model.hpp"
#include "rydpulse/potential.hpp"
#include "rydpulse/units.hpp"

namespace rydpulse {

/// Rabi-scaled field profiles of one pulse on its own propagation
/// coordinate (index 0 is the entry tip). e, p, s are the interacting
/// profiles; e0, p0, s0 the free reference evolved without interaction.
struct PulseFields {
  std::vector<cplx> e, p, s;
  std::vector<cplx> e0, p0, s0;

  explicit PulseFields(std::size_t n = 0) : e(n), p(n), s(n), e0(n), p0(n), s0(n) {}
};

struct FieldState {
  std::vector<PulseFields> pulses;
  double t = 0.0;
};

/// Coefficients of the atomic equations for one pulse.
struct AtomParams {
  double gamma = 0.0;
  double gamma_r = 0.0;
  double delta_p = 0.0;
  double delta_two = 0.0;
  double coupling_G = 0.0;
};

/// How the light field enters the RK4 stages of the atomic update.
///   per_stage: the field is re-integrated from P at every stage, so the
///              coupled atom-field system is advanced at fourth order.
///   frozen:    the field is held at its step-start value and refreshed
///              after the step (first-order operator splitting).
enum class FieldCoupling { per_stage, frozen };

using Drive = std::function<cplx(double)>;

/// c dE/dz = i G P from the entry boundary, trapezoidal in P.
void integrate_field_quasistatic(std::span<const cplx> p, cplx boundary, double coupling_G, double dz,
                                 std::span<cplx> e);

/// One RK4 step of
///   dP/dt = -(gamma + i delta_p) P + i Omega_c S + i G E
///   dS/dt = -(gamma_r + i (delta_two + V)) S + i Omega_c P
/// with Omega_c and the entry drive evaluated at the stage times. The diagonal
/// S term is integrated exactly (integrating factor), the rest with the
/// classic tableau. `potential` may be empty (V = 0). On return e holds the field consistent with the
/// updated P at t + dt.
void step_atoms_rk4(std::span<cplx> e, std::span<cplx> p, std::span<cplx> s, double t, double dt, double dz,
                    const AtomParams& atoms, const ControlSchedule& control, const Drive& drive,
                    std::span<const double> potential, FieldCoupling coupling = FieldCoupling::per_stage);

enum class TerminationStatus { completed, diverged, non_finite };
std::string_view to_string(TerminationStatus s);

/// Downsampled magnitude history on the (t, z) output grid in physical
/// coordinates, row-major with one row per recorded time.
struct FieldHistory {
  std::string name;  // "E", "P", "S", "S0", "V"
  std::size_t pulse = 0;
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  double at(std::size_t row, std::size_t col) const { return data[row * cols + col]; }
};

struct ComplexHistory {
  std::string name;
  std::size_t pulse = 0;
  std::size_t rows = 0, cols = 0;
  std::vector<cplx> data;
};

/// Per-pulse scalar diagnostics. Series are sampled on the output time axis;
/// the energy integrals use every time step.
struct PulseDiagnostics {
  std::vector<double> input_flux;       // |E(entry, t)|^2
  std::vector<double> output_flux;      // |E(exit, t)|^2
  std::vector<double> spinwave_norm;    // int |S|^2 dz / photon norm
  std::vector<double> excitation_norm;  // int (|E|^2+|P|^2+|S|^2) dz / photon norm
  std::vector<double> free_norm;        // same for the free reference
  double input_energy = 0.0;            // int |E(entry)|^2 dt
  double output_energy = 0.0;           // int |E(exit)|^2 dt
  double input_centroid = 0.0;          // flux-weighted mean time at the entry
  double output_centroid = 0.0;
  double potential_peak = 0.0;          // max |V| over z and t, rad/us
  double photon_norm = 1.0;             // c * int |E_in|^2 dt of the drive (for normalizing)
};

struct SimulationResult {
  RunConfig config;
  std::vector<double> t_axis;  // recorded times
  std::vector<double> z_axis;  // physical positions of recorded nodes
  std::vector<FieldHistory> fields;
  std::vector<ComplexHistory> complex_fields;
  std::vector<PulseDiagnostics> diagnostics;
  FieldState final_state;
  TerminationStatus status = TerminationStatus::completed;
  std::string message;
  std::size_t steps_taken = 0;
  double wall_seconds = 0.0;
  std::string kernel_hash;

  const FieldHistory* find(std::string_view name, std::size_t pulse) const;
  /// Physical z of local node j of pulse l.
  double physical_z(std::size_t pulse, double local_z) const;
};

/// Test and tooling hooks. Custom drives replace the Gaussian entry
/// envelopes; an observer sees the state after every step.
struct SimulatorHooks {
  std::vector<Drive> drives;
  std::function<void(const FieldState&)> observer;
  FieldCoupling coupling = FieldCoupling::per_stage;
  bool throw_on_divergence = true;
};

/// Runs a validated configuration with the variant and backend it names.
/// Throws NumericalError on divergence or non-finite values unless
/// hooks.throw_on_divergence is false, in which case the partial result is
/// returned with the termination status set.
SimulationResult run(const RunConfig& config, const SimulatorHooks& hooks = {});

/// Method-of-lines cross-check: full transport term with a reduced light
/// speed c_eff and first-order upwinding. Requires backend == mol.
SimulationResult run_mol_reference(const RunConfig& config, const SimulatorHooks& hooks = {});

/// Reduced dynamics with the intermediate level adiabatically eliminated.
SimulationResult run_adiabatic(const RunConfig& config, const SimulatorHooks& hooks = {});

/// Stored-spinwave summary of a run whose control switches off.
struct StorageReport {
  SimulationResult result;
  double t_stop = 0.0;                      // first recorded time with Omega_c == 0
  std::vector<double> t_after;              // recorded times >= t_stop
  std::vector<std::vector<double>> stored_norm;  // per pulse int |S|^2 dz over t_after
  std::vector<std::vector<double>> profile;      // per pulse |S(z)| at t_stop, local coordinates
  std::vector<double> asymmetry;                 // per pulse front/back metric
};

/// Front/back asymmetry of a stored wavepacket given |S| on the local
/// propagation coordinate: integral of |S|^2 ahead of the peak divided by the
/// integral behind it.
double storage_asymmetry(std::span<const double> magnitude);

StorageReport scenario_storage(const RunConfig& config, const SimulatorHooks& hooks = {});

}  // namespace rydpulse
