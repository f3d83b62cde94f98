#include "rydpulse/potential.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

#include "rydpulse/errors.hpp"
#include "rydpulse/kernel_cache.hpp"

namespace rydpulse {

namespace {

constexpr double kConvergenceTolerance = 1e-6;

struct TransverseSamples {
  std::vector<double> dist2;   // squared transverse separation
  std::vector<double> weight;  // normalized quadrature weight
};

// Quadrature rule over the J0^2 mode of a waveguide of radius R, in polar
// coordinates about its own axis. Weights sum to one.
struct DiskRule {
  std::vector<double> x, y, w;
};

DiskRule disk_rule(double radius, unsigned order) {
  DiskRule rule;
  if (radius <= 0.0) {
    rule.x = {0.0};
    rule.y = {0.0};
    rule.w = {1.0};
    return rule;
  }
  const auto [nodes, weights] = gauss_legendre(order);
  const double j1 = std::cyl_bessel_j(1.0, kBesselJ0FirstZero);
  const double norm = kPi * radius * radius * j1 * j1;
  for (unsigned i = 0; i < order; ++i) {
    const double rho = 0.5 * radius * (nodes[i] + 1.0);
    const double j0 = std::cyl_bessel_j(0.0, kBesselJ0FirstZero * rho / radius);
    const double radial = j0 * j0 / norm * rho * 0.5 * radius * weights[i];
    for (unsigned k = 0; k < order; ++k) {
      const double phi = kPi * (nodes[k] + 1.0);
      rule.x.push_back(rho * std::cos(phi));
      rule.y.push_back(rho * std::sin(phi));
      rule.w.push_back(radial * kPi * weights[k]);
    }
  }
  return rule;
}

TransverseSamples transverse_samples(const KernelGeometry& g, unsigned order) {
  const double radius = 0.5 * g.diameter_d;
  const DiskRule partner = disk_rule(radius, order);
  const DiskRule own = g.transverse_average ? disk_rule(radius, order) : disk_rule(0.0, order);
  TransverseSamples out;
  out.dist2.reserve(partner.w.size() * own.w.size());
  out.weight.reserve(partner.w.size() * own.w.size());
  for (std::size_t i = 0; i < own.w.size(); ++i) {
    for (std::size_t k = 0; k < partner.w.size(); ++k) {
      const double dx = g.separation_a + partner.x[k] - own.x[i];
      const double dy = partner.y[k] - own.y[i];
      out.dist2.push_back(dx * dx + dy * dy);
      out.weight.push_back(own.w[i] * partner.w[k]);
    }
  }
  return out;
}

double sum_samples(const TransverseSamples& s, double dz2, double c6) {
  double acc = 0.0;
  for (std::size_t k = 0; k < s.dist2.size(); ++k) {
    const double r2 = dz2 + s.dist2[k];
    acc += s.weight[k] / (r2 * r2 * r2);
  }
  return c6 * acc;
}

void check_density(std::span<const double> density, std::size_t n_z) {
  if (density.size() != n_z) throw NumericalError("potential: density length does not match kernel grid");
}

std::vector<double> scaled_density(std::span<const cplx> s, DensityScale scale) {
  std::vector<double> dens(s.size());
  const double f = scale.factor();
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double v = std::norm(s[j]);
    if (!std::isfinite(v)) throw NumericalError("potential: non-finite spinwave at node " + std::to_string(j));
    dens[j] = f * v;
  }
  return dens;
}

PotentialField convolve_to_field(const InteractionKernel& kernel, std::span<const cplx> s, DensityScale scale,
                                 double t) {
  if (s.size() != kernel.n_z()) throw NumericalError("potential: length mismatch with kernel grid");
  const auto dens = scaled_density(s, scale);
  std::vector<double> v(s.size());
  convolve_direct(kernel, dens, v);
  PotentialField out;
  out.t = t;
  out.values.assign(v.begin(), v.end());
  return out;
}

}  // namespace

double vdw_point(double r, double c6) {
  if (!(r > 0.0)) throw NumericalError("vdw_point: zero separation is singular");
  const double r2 = r * r;
  return c6 / (r2 * r2 * r2);
}

InteractionKernel::InteractionKernel(KernelGeometry geometry, std::vector<double> values)
    : geometry_(geometry), values_(std::move(values)), offset0_(static_cast<std::ptrdiff_t>(geometry.n_z) - 1) {
  if (values_.size() != 2 * geometry_.n_z - 1) throw NumericalError("kernel: value count does not match n_z");
}

std::vector<double> InteractionKernel::offsets() const {
  std::vector<double> out(values_.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(static_cast<std::ptrdiff_t>(i) - offset0_) * geometry_.dz;
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> gauss_legendre(unsigned order) {
  std::vector<double> x(order), w(order);
  const unsigned half = (order + 1) / 2;
  for (unsigned i = 0; i < half; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (unsigned k = 1; k <= order; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = order * (z * p0 - p1) / (z * z - 1.0);
      const double step = p0 / dp;
      z -= step;
      if (std::abs(step) < 1e-15) break;
    }
    x[i] = -z;
    x[order - 1 - i] = z;
    w[i] = w[order - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

double kernel_value(const KernelGeometry& geometry, double delta_z, unsigned order) {
  if (geometry.diameter_d <= 0.0) {
    const double r2 = delta_z * delta_z + geometry.separation_a * geometry.separation_a;
    if (!(r2 > 0.0)) throw NumericalError("kernel: zero separation is singular");
    return geometry.c6 / (r2 * r2 * r2);
  }
  return sum_samples(transverse_samples(geometry, order), delta_z * delta_z, geometry.c6);
}

InteractionKernel build_kernel(const KernelGeometry& g) {
  if (g.n_z < 2 || !(g.dz > 0.0)) throw NumericalError("kernel: invalid grid");
  if (g.diameter_d > 0.0 && !(g.separation_a > 0.5 * g.diameter_d * (g.transverse_average ? 2.0 : 1.0))) {
    throw NumericalError("kernel: waveguides overlap, interaction integral is singular");
  }
  if (g.diameter_d <= 0.0 && !(g.separation_a > 0.0)) {
    throw NumericalError("kernel: point-axis kernel needs a positive separation");
  }

  static std::mutex memo_mutex;
  static std::map<std::uint64_t, InteractionKernel> memo;
  const auto key = kernel_hash(g);
  {
    std::lock_guard lock(memo_mutex);
    if (auto it = memo.find(key); it != memo.end() && it->second.geometry() == g) return it->second;
  }

  const auto cache_dir = kernel_cache_dir();
  std::filesystem::path cache_file;
  if (cache_dir) {
    cache_file = *cache_dir / ("rydk_" + kernel_hash_hex(g) + ".bin");
    if (auto cached = read_kernel_file(cache_file); cached && cached->geometry() == g) {
      std::lock_guard lock(memo_mutex);
      memo.emplace(key, *cached);
      return *cached;
    }
  }

  const std::size_t n = g.n_z;
  std::vector<double> half(n);
  if (g.diameter_d <= 0.0) {
    for (std::size_t m = 0; m < n; ++m) half[m] = kernel_value(g, static_cast<double>(m) * g.dz, 0);
  } else {
    const auto samples = transverse_samples(g, g.quadrature_order);
    const auto fine = transverse_samples(g, 2 * g.quadrature_order);
    // The integrand is sharpest at small offsets; check there and on the tail.
    for (double probe : {0.0, 0.5 * g.separation_a, g.separation_a, 3.0 * g.separation_a}) {
      const double coarse_v = sum_samples(samples, probe * probe, g.c6);
      const double fine_v = sum_samples(fine, probe * probe, g.c6);
      const double rel = std::abs(fine_v - coarse_v) / std::max(std::abs(fine_v), 1e-300);
      if (g.c6 != 0.0 && rel > kConvergenceTolerance) {
        std::ostringstream msg;
        msg << "kernel quadrature did not converge at dz=" << probe << " um: order " << g.quadrature_order
            << " gives " << coarse_v << ", order " << 2 * g.quadrature_order << " gives " << fine_v
            << " (relative change " << rel << ")";
        throw NumericalError(msg.str());
      }
    }
    for (std::size_t m = 0; m < n; ++m) {
      const double dz = static_cast<double>(m) * g.dz;
      half[m] = sum_samples(samples, dz * dz, g.c6);
    }
  }

  std::vector<double> values(2 * n - 1);
  for (std::size_t m = 0; m < n; ++m) {
    values[n - 1 + m] = half[m];
    values[n - 1 - m] = half[m];
  }
  InteractionKernel kernel(g, std::move(values));

  if (cache_dir) {
    try {
      std::filesystem::create_directories(*cache_dir);
      write_kernel_file(cache_file, kernel);
    } catch (const std::exception&) {
      // An unwritable cache only costs a rebuild next time.
    }
  }
  std::lock_guard lock(memo_mutex);
  memo.emplace(key, kernel);
  return kernel;
}

InteractionKernel build_kernel(const MediumSpec& medium, const Grid& grid, bool transverse_average) {
  KernelGeometry g;
  g.separation_a = medium.separation_a;
  g.diameter_d = medium.diameter_d;
  g.dz = grid.dz;
  g.n_z = grid.n_z;
  g.c6 = medium.c6;
  g.transverse_average = transverse_average;
  return build_kernel(g);
}

void convolve_direct(const InteractionKernel& kernel, std::span<const double> density, std::span<double> out) {
  const std::size_t n = kernel.n_z();
  check_density(density, n);
  if (out.size() != n) throw NumericalError("potential: output length mismatch");
  const auto k = kernel.values();
  const double dz = kernel.dz();
  for (std::size_t i = 0; i < n; ++i) {
    // k[n - 1 + i - j] == K((i - j) dz)
    const double* row = k.data() + (n - 1 + i);
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += row[-static_cast<std::ptrdiff_t>(j)] * density[j];
    out[i] = dz * acc;
  }
}

PotentialField effective_potential(const InteractionKernel& kernel, std::span<const cplx> s0_partner,
                                   DensityScale scale, double t) {
  return convolve_to_field(kernel, s0_partner, scale, t);
}

PotentialField mean_field_potential(const InteractionKernel& kernel, std::span<const cplx> s_partner,
                                    DensityScale scale, double t) {
  return convolve_to_field(kernel, s_partner, scale, t);
}

PotentialField blockade_potential(double r_b, double v_in, std::pair<double, double> pulse_positions,
                                  std::size_t n_z, double t) {
  const double separation = std::abs(pulse_positions.first - pulse_positions.second);
  const double v = separation < r_b ? v_in : 0.0;
  return PotentialField{std::vector<cplx>(n_z, cplx{v, 0.0}), t};
}

PotentialField constant_potential(double v0, std::size_t n_z, double t) {
  return PotentialField{std::vector<cplx>(n_z, cplx{v0, 0.0}), t};
}

}  // namespace rydpulse
