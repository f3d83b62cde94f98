#include "rydpulse/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rydpulse/errors.hpp"

namespace rydpulse {

namespace {

constexpr double kPeakFloor = 1e-3;  // relative to the global maximum
constexpr int kSmoothHalf = 5;        // 11-sample window

// Linear interpolation of a complex profile sampled at spacing dz, clamped.
cplx sample(const std::vector<cplx>& a, double dz, double z) {
  if (a.empty()) return {};
  const double x = std::clamp(z / dz, 0.0, static_cast<double>(a.size() - 1));
  const auto i = static_cast<std::size_t>(std::floor(x));
  if (i + 1 >= a.size()) return a.back();
  const double f = x - static_cast<double>(i);
  return (1.0 - f) * a[i] + f * a[i + 1];
}

}  // namespace

cplx susceptibility(double delta, const SusceptibilityParams& p) {
  const cplx two{p.gamma_r, delta + p.v0};
  const cplx one{p.gamma, p.delta_p};
  if (p.omega_c == 0.0) return cplx{0.0, 1.0} / one;
  return cplx{0.0, 1.0} * two / (one * two + p.omega_c * p.omega_c);
}

SusceptibilityCurve susceptibility_curve(const SusceptibilityParams& params, double lo, double hi, std::size_t n) {
  SusceptibilityCurve curve;
  curve.params = params;
  curve.delta.reserve(n);
  curve.chi.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    curve.delta.push_back(d);
    curve.chi.push_back(params.gamma * susceptibility(d, params));
  }
  return curve;
}

double dispersion_slope(const SusceptibilityParams& params, double delta) {
  // chi = i B / D with D = A B + omega_c^2; shifting the probe by nu takes
  // dA/dnu = dB/dnu = -i, so d chi/d nu = (omega_c^2 - B^2) / D^2.
  const cplx a{params.gamma, params.delta_p};
  const cplx b{params.gamma_r, delta + params.v0};
  const double w2 = params.omega_c * params.omega_c;
  if (w2 == 0.0) return (-1.0 / (a * a)).real();
  const cplx d = a * b + w2;
  return ((w2 - b * b) / (d * d)).real();
}

double group_velocity_analytic(const SusceptibilityParams& params, double coupling_G, double delta) {
  return kSpeedOfLight / (1.0 + coupling_G * coupling_G * dispersion_slope(params, delta));
}

std::vector<TrajectoryPoint> trajectory(const SimulationResult& result, std::string_view field, std::size_t pulse) {
  const FieldHistory* h = result.find(field, pulse);
  if (h == nullptr) throw ConfigError("trajectory: no history '" + std::string(field) + "' for pulse " +
                                      std::to_string(pulse + 1));
  const double global = *std::max_element(h->data.begin(), h->data.end());
  if (!(global > 0.0)) return {};

  const bool mirrored = result.config.pulses.at(pulse).entry_side == EntrySide::right;
  const std::size_t cols = h->cols;
  const double dzs = cols > 1 ? result.z_axis[1] - result.z_axis[0] : 0.0;

  std::vector<TrajectoryPoint> out(h->rows);
  for (std::size_t r = 0; r < h->rows; ++r) {
    auto& pt = out[r];
    pt.t = result.t_axis[r];
    // Walk along the local coordinate.
    auto local = [&](std::size_t k) { return h->at(r, mirrored ? cols - 1 - k : k); };
    std::size_t best = 0;
    double best_v = -1.0;
    for (std::size_t k = 0; k < cols; ++k) {
      if (local(k) > best_v) {
        best_v = local(k);
        best = k;
      }
    }
    if (best_v < kPeakFloor * global || best == 0 || best + 1 >= cols) continue;
    const double ym = local(best - 1), y0 = local(best), yp = local(best + 1);
    const double denom = ym - 2.0 * y0 + yp;
    const double shift = denom != 0.0 ? std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5) : 0.0;
    pt.z_peak = (static_cast<double>(best) + shift) * dzs;
    pt.valid = true;
  }

  // Local quadratic fit over 11 equally spaced samples: slope = sum k y_k / (dt sum k^2).
  const double sum_k2 = 110.0;
  for (std::size_t r = kSmoothHalf; r + kSmoothHalf < out.size(); ++r) {
    bool ok = true;
    double acc = 0.0;
    for (int k = -kSmoothHalf; k <= kSmoothHalf; ++k) {
      const auto& q = out[r + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(k))];
      if (!q.valid) {
        ok = false;
        break;
      }
      acc += k * q.z_peak;
    }
    if (!ok) continue;
    const double dt = out[r + 1].t - out[r].t;
    out[r].v_g = acc / (sum_k2 * dt);
    out[r].v_valid = true;
  }
  return out;
}

double transmission(const SimulationResult& result, std::size_t pulse) {
  const auto& d = result.diagnostics.at(pulse);
  if (!(d.input_energy > 0.0)) return 0.0;
  return d.output_energy / d.input_energy;
}

double transit_group_velocity(const SimulationResult& result, std::size_t pulse) {
  const auto& d = result.diagnostics.at(pulse);
  const double delay = d.output_centroid - d.input_centroid;
  if (!(d.output_energy > 0.0) || !(delay > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return result.config.medium.length_L / delay;
}

std::optional<std::size_t> closest_approach(const std::vector<TrajectoryPoint>& a,
                                            const std::vector<TrajectoryPoint>& b, double length_L) {
  std::optional<std::size_t> best, prev;
  double best_gap = std::numeric_limits<double>::infinity();
  double prev_gap = 0.0;
  for (std::size_t r = 0; r < std::min(a.size(), b.size()); ++r) {
    if (!a[r].valid || !b[r].valid) continue;
    // Counter-propagating partners: b's local coordinate runs from the other tip.
    const double gap = (length_L - b[r].z_peak) - a[r].z_peak;
    if (prev && (gap <= 0.0) != (prev_gap <= 0.0)) {
      return std::abs(gap) < std::abs(prev_gap) ? r : *prev;
    }
    if (std::abs(gap) < best_gap) {
      best_gap = std::abs(gap);
      best = r;
    }
    prev = r;
    prev_gap = gap;
  }
  return best;
}

G2Curve g2_estimate(const SimulationResult& result, double v_g, const std::vector<double>& tau) {
  const auto& st = result.final_state;
  if (st.pulses.size() != 2) throw ConfigError("g2_estimate needs a pulse pair");
  const double dz = result.config.grid.dz;
  const double length = result.config.medium.length_L;
  G2Curve out;
  out.tau = tau;
  out.value.reserve(tau.size());
  for (double t : tau) {
    const std::size_t first = t >= 0.0 ? 0 : 1;
    const auto& a = st.pulses[first];
    const auto& b = st.pulses[1 - first];
    const cplx e0 = a.e0.back();
    const cplx e = sample(b.e, dz, length - v_g * std::abs(t));
    out.value.push_back(std::norm(e0 * e));
  }
  return out;
}

double potential_peak(const SimulationResult& result, std::size_t pulse) {
  return result.diagnostics.at(pulse).potential_peak;
}

double free_norm_min_ratio(const SimulationResult& result, std::size_t pulse) {
  const auto& spec = result.config.pulses.at(pulse);
  const auto& series = result.diagnostics.at(pulse).free_norm;
  const double t_in = spec.t_peak + 2.0 * spec.tau_p;
  const double v = result.config.derived.v_g_nominal;
  double t_out = v > 0.0 ? spec.t_peak - 2.0 * spec.tau_p + result.config.medium.length_L / v : t_in;
  t_out = std::max(t_out, t_in);
  double ref = std::numeric_limits<double>::quiet_NaN();
  double lowest = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < series.size(); ++r) {
    const double t = result.t_axis[r];
    if (t < t_in) continue;
    if (std::isnan(ref)) ref = series[r];
    if (t > t_out) break;
    lowest = std::min(lowest, series[r]);
  }
  if (std::isnan(ref) || !(ref > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return lowest / ref;
}

}  // namespace rydpulse
