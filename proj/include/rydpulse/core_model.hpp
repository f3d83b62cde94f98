#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rydpulse/units.hpp"

namespace rydpulse {

enum class Geometry { counter, co };
enum class EntrySide { left, right };
enum class ControlKind { constant, tanh_switch };

/// Which equations and which potential a run evolves.
enum class ModelVariant { full, constant_v, mean_field, adiabatic, blockade };
enum class Backend { quasistatic, mol };

/// How the partner spinwave density is scaled before it enters the
/// interaction integral.
///   single_photon: |S|^2 divided by the partner's total input photon flux,
///                  i.e. a probability density per um.
///   raw:           Rabi-scaled |S|^2 used as is.
enum class NormMode { single_photon, raw };
enum class ConvolutionMethod { direct, fft };

struct MediumSpec {
  double gamma = 0.0;         // intermediate-level decay, rad/us
  double gamma_r = 0.0;       // Rydberg-level decay, rad/us
  double coupling_G = 0.0;    // collective coupling g*sqrt(N), rad/us
  double c6 = 0.0;            // rad um^6 / us
  double length_L = 0.0;      // um
  double separation_a = 0.0;  // um
  double diameter_d = 0.0;    // um
  double density_N = 0.0;     // um^-3, metadata only
  Geometry geometry = Geometry::counter;
};

struct PulseSpec {
  double omega_p_max = 0.0;  // peak Rabi frequency at the entry, rad/us
  double t_peak = 0.0;       // us
  double tau_p = 0.0;        // us
  double delta_p = 0.0;      // one-photon detuning, rad/us
  double delta_two = 0.0;    // two-photon detuning, rad/us
  EntrySide entry_side = EntrySide::left;

  /// c * integral |Omega_in(t)|^2 dt over the whole Gaussian envelope; the
  /// squared Rabi-scaled amplitude that corresponds to one photon.
  double photon_norm() const;
};

struct ControlSchedule {
  ControlKind kind = ControlKind::constant;
  double omega_c0 = 0.0;  // rad/us
  double t_off = 0.0;     // us
  double tau_c = 1.0;     // us

  /// Largest value the schedule takes for t >= 0.
  double peak() const;
  /// Antiderivative of control_at(t)^2 from 0 to t (used by the adiabatic
  /// elimination scale transformation).
  double integral_of_square(double t) const;
};

struct Grid {
  double dz = 0.0;  // node spacing, (n_z - 1) * dz == length_L
  double dt = 0.0;
  double t_end = 0.0;
  std::size_t n_z = 0;  // spatial nodes including both tips
  std::size_t n_t = 0;  // time steps
  std::size_t downsample_z = 1;
  std::size_t downsample_t = 1;

  double z_at(std::size_t j) const { return static_cast<double>(j) * dz; }
  std::size_t n_z_out() const { return (n_z - 1) / downsample_z + 1; }
  std::size_t n_t_out() const { return n_t / downsample_t + 1; }
};

struct RunOptions {
  ModelVariant variant = ModelVariant::full;
  Backend backend = Backend::quasistatic;
  NormMode norm_mode = NormMode::single_photon;
  ConvolutionMethod convolution = ConvolutionMethod::fft;
  std::size_t potential_stride = 1;
  double v0 = 0.0;                        // constant_v potential, rad/us
  std::optional<double> blockade_radius;  // um
  std::optional<double> blockade_v;       // rad/us
  std::optional<double> c_eff;            // reduced light speed for mol, um/us
  bool transverse_average = false;
  bool record_complex = false;
  bool extended_output = false;
};

/// Quantities computed from the validated specs and echoed in manifests.
struct DerivedQuantities {
  double slow_light_ratio = 0.0;  // G^2 / max Omega_c^2
  double v_g_nominal = 0.0;       // c * Omega_c^2 / G^2, um/us
};

struct RunConfig {
  MediumSpec medium;
  std::vector<PulseSpec> pulses;  // one or two
  ControlSchedule control;
  Grid grid;
  RunOptions run;
  DerivedQuantities derived;
};

/// Validates a parsed configuration document and builds the run specs.
/// Throws ConfigError on any violation.
RunConfig validate_config(const nlohmann::json& raw);

/// Inverse of validate_config: the canonical document for a run. Feeding it
/// back through validate_config reproduces the same specs.
nlohmann::json to_json(const RunConfig& config);

/// Control Rabi frequency at time t, clamped non-negative.
double control_at(const ControlSchedule& schedule, double t);

/// On-axis entry envelope Omega_p^M exp(-(t - t_p)^2 / tau_p^2).
cplx boundary_pulse(const PulseSpec& spec, double t);

std::string_view to_string(ModelVariant v);
std::string_view to_string(Backend b);
std::string_view to_string(NormMode m);
std::string_view to_string(Geometry g);
ModelVariant parse_variant(std::string_view s);
Backend parse_backend(std::string_view s);

}  // namespace rydpulse
