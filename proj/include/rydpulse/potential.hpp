#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "rydpulse/core_model.hpp"
#include "rydpulse/units.hpp"

namespace rydpulse {

/// Point-pair van der Waals shift c6 / r^6. Throws NumericalError for r <= 0.
double vdw_point(double r, double c6);

/// Geometry a kernel was built for; also the cache key.
struct KernelGeometry {
  double separation_a = 0.0;
  double diameter_d = 0.0;  // 0 selects the point-axis limit
  double dz = 0.0;
  std::size_t n_z = 0;
  double c6 = 0.0;
  unsigned quadrature_order = 32;
  bool transverse_average = false;

  bool operator==(const KernelGeometry&) const = default;
};

/// Transverse-reduced 1-D interaction kernel K(dz * m) for
/// m in [-(n_z - 1), n_z - 1]. Values are rad/us per unit line density
/// (probability per um).
class InteractionKernel {
 public:
  InteractionKernel() = default;
  InteractionKernel(KernelGeometry geometry, std::vector<double> values);

  const KernelGeometry& geometry() const { return geometry_; }
  std::size_t n_z() const { return geometry_.n_z; }
  double dz() const { return geometry_.dz; }

  /// K at offset m cells, |m| < n_z.
  double at(std::ptrdiff_t m) const { return values_[static_cast<std::size_t>(m + offset0_)]; }
  /// All 2 n_z - 1 values ordered by increasing offset.
  std::span<const double> values() const { return values_; }
  std::vector<double> offsets() const;

 private:
  KernelGeometry geometry_;
  std::vector<double> values_;
  std::ptrdiff_t offset0_ = 0;
};

/// Gauss-Legendre nodes and weights on [-1, 1].
std::pair<std::vector<double>, std::vector<double>> gauss_legendre(unsigned order);

/// Kernel value for a single longitudinal offset by direct quadrature at the
/// given order (no caching). Exposed for convergence diagnostics.
double kernel_value(const KernelGeometry& geometry, double delta_z, unsigned order);

/// Builds the kernel for a geometry by tensor Gauss-Legendre quadrature over
/// the partner's J0^2 transverse mode, checking convergence against the
/// doubled order. Results are memoized in-process and, when the environment
/// variable RYDPULSE_CACHE_DIR is set, on disk.
InteractionKernel build_kernel(const KernelGeometry& geometry);
InteractionKernel build_kernel(const MediumSpec& medium, const Grid& grid, bool transverse_average = false);

/// Scaling applied to a partner's |S|^2 before convolution.
struct DensityScale {
  NormMode mode = NormMode::single_photon;
  double photon_norm = 1.0;  // PulseSpec::photon_norm() of the partner

  double factor() const { return mode == NormMode::single_photon ? 1.0 / photon_norm : 1.0; }
};

struct PotentialField {
  std::vector<cplx> values;  // rad/us on physical coordinates
  double t = 0.0;
};

/// V(z_i) = dz * sum_j K(z_i - z_j) * density_j, direct O(n^2) summation.
/// This is the reference path for all other convolution routes.
void convolve_direct(const InteractionKernel& kernel, std::span<const double> density, std::span<double> out);

/// Nonlocal potential from the partner's free spinwave (physical coordinates).
PotentialField effective_potential(const InteractionKernel& kernel, std::span<const cplx> s0_partner,
                                   DensityScale scale, double t = 0.0);

/// Mean-field potential from the partner's interacting spinwave. Same
/// convolution core as effective_potential.
PotentialField mean_field_potential(const InteractionKernel& kernel, std::span<const cplx> s_partner,
                                    DensityScale scale, double t = 0.0);

/// Step potential of the blockade picture: v_in everywhere when the two pulse
/// positions are closer than r_b, zero otherwise.
PotentialField blockade_potential(double r_b, double v_in, std::pair<double, double> pulse_positions,
                                  std::size_t n_z, double t = 0.0);

PotentialField constant_potential(double v0, std::size_t n_z, double t = 0.0);

}  // namespace rydpulse
