#include "rydpulse/propagation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "rydpulse/convolution.hpp"
#include "rydpulse/errors.hpp"
#include "rydpulse/kernel_cache.hpp"

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace rydpulse {

namespace {

constexpr cplx kI{0.0, 1.0};
constexpr double kDivergenceFactor = 1e6;

double trapz_norm(std::span<const cplx> a, double dz) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += std::norm(a[j]);
  acc -= 0.5 * (std::norm(a.front()) + std::norm(a.back()));
  return acc * dz;
}

double max_abs(std::span<const cplx> a) {
  double m = 0.0;
  for (const auto& v : a) m = std::max(m, std::norm(v));
  return std::sqrt(m);
}

std::optional<std::size_t> first_non_finite(std::span<const cplx> a) {
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (!std::isfinite(a[j].real()) || !std::isfinite(a[j].imag())) return j;
  }
  return std::nullopt;
}

// Flushes subnormals to zero while a run is in flight. Gaussian tails
// otherwise drift into the subnormal range and slow the sweeps severalfold.
class DenormalGuard {
 public:
#if defined(__SSE2__)
  DenormalGuard() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }
  ~DenormalGuard() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

// Quasistatic field scan shared by every solver: e[0] = boundary,
// e[j+1] = e[j] + (i G dz / 2c) (p[j] + p[j+1]).
inline void scan_field(const cplx* p, cplx boundary, cplx step, std::size_t n, cplx* e) {
  e[0] = boundary;
  for (std::size_t j = 0; j + 1 < n; ++j) e[j + 1] = e[j] + step * (p[j] + p[j + 1]);
}

// One interacting or free set of fields plus RK4 work arrays.
struct Channel {
  std::vector<cplx> e, p, s;
  std::vector<cplx> tp, ts, te, ap, as, ae;
  // exp(-(gamma_r + i (delta_two + V_j)) dt / 2) and its square.
  std::vector<cplx> decay_half, decay_full;
  // Adiabatic elimination: primed spinwave and field.
  std::vector<cplx> sp, ep;

  explicit Channel(std::size_t n)
      : e(n), p(n), s(n), tp(n), ts(n), te(n), ap(n), as(n), ae(n), decay_half(n), decay_full(n) {}
};

// The S equation carries the stiff diagonal term -(gamma_r + i(delta + V)) S;
// with overlapping pulses V reaches thousands of rad/us. It is integrated
// exactly (Lawson RK4), the remaining couplings with the classic tableau.
void set_decay(Channel& ch, const AtomParams& atoms, std::span<const double> potential, double dt) {
  const std::size_t n = ch.s.size();
  if (potential.empty()) {
    const cplx h = std::exp(-cplx{atoms.gamma_r, atoms.delta_two} * (0.5 * dt));
    std::fill(ch.decay_half.begin(), ch.decay_half.end(), h);
    std::fill(ch.decay_full.begin(), ch.decay_full.end(), h * h);
    return;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const cplx h = std::exp(-cplx{atoms.gamma_r, atoms.delta_two + potential[j]} * (0.5 * dt));
    ch.decay_half[j] = h;
    ch.decay_full[j] = h * h;
  }
}

// Lawson RK4 for (P, S) with the quasistatic field; decay factors preset.
void rk4_quasistatic(Channel& ch, double t, double dt, double dz, const AtomParams& atoms,
                     const ControlSchedule& control, const Drive& drive, FieldCoupling coupling) {
  const std::size_t n = ch.p.size();
  const cplx gp{atoms.gamma, atoms.delta_p};
  const cplx iG = kI * atoms.coupling_G;
  const cplx scan_step = kI * atoms.coupling_G * dz / (2.0 * kSpeedOfLight);
  const bool per_stage = coupling == FieldCoupling::per_stage;

  cplx* p = ch.p.data();
  cplx* s = ch.s.data();
  cplx* tp = ch.tp.data();
  cplx* ts = ch.ts.data();
  cplx* ap = ch.ap.data();
  cplx* as = ch.as.data();
  const cplx* eh = ch.decay_half.data();
  const cplx* ef = ch.decay_full.data();
  cplx* e = per_stage ? ch.te.data() : ch.e.data();

  const double h6 = dt / 6.0, h3 = dt / 3.0, h2 = dt / 2.0;

  {
    const cplx iw = kI * control_at(control, t);
    if (per_stage) scan_field(p, drive(t), scan_step, n, e);
    for (std::size_t j = 0; j < n; ++j) {
      const cplx kp = -gp * p[j] + iw * s[j] + iG * e[j];
      const cplx ks = iw * p[j];
      ap[j] = p[j] + h6 * kp;
      as[j] = ef[j] * (s[j] + h6 * ks);
      tp[j] = p[j] + h2 * kp;
      ts[j] = eh[j] * (s[j] + h2 * ks);
    }
  }
  {
    const cplx iw = kI * control_at(control, t + h2);
    if (per_stage) scan_field(tp, drive(t + h2), scan_step, n, e);
    for (std::size_t j = 0; j < n; ++j) {
      const cplx kp = -gp * tp[j] + iw * ts[j] + iG * e[j];
      const cplx ks = iw * tp[j];
      ap[j] += h3 * kp;
      as[j] += h3 * eh[j] * ks;
      tp[j] = p[j] + h2 * kp;
      ts[j] = eh[j] * s[j] + h2 * ks;
    }
    if (per_stage) scan_field(tp, drive(t + h2), scan_step, n, e);
    for (std::size_t j = 0; j < n; ++j) {
      const cplx kp = -gp * tp[j] + iw * ts[j] + iG * e[j];
      const cplx ks = iw * tp[j];
      ap[j] += h3 * kp;
      as[j] += h3 * eh[j] * ks;
      tp[j] = p[j] + dt * kp;
      ts[j] = ef[j] * s[j] + dt * eh[j] * ks;
    }
  }
  {
    const cplx iw = kI * control_at(control, t + dt);
    if (per_stage) scan_field(tp, drive(t + dt), scan_step, n, e);
    for (std::size_t j = 0; j < n; ++j) {
      const cplx kp = -gp * tp[j] + iw * ts[j] + iG * e[j];
      const cplx ks = iw * tp[j];
      p[j] = ap[j] + h6 * kp;
      s[j] = as[j] + h6 * ks;
    }
  }
  scan_field(p, drive(t + dt), scan_step, n, ch.e.data());
}

// Lawson RK4 for (E, P, S) with upwind transport at speed c_eff. In these
// units the field obeys (1/c_eff) dE/dt + dE/dz = (i G / c) P, so the
// quasistatic limit is recovered as c_eff -> c.
void rk4_mol(Channel& ch, double t, double dt, double dz, double c_eff, const AtomParams& atoms,
             const ControlSchedule& control, const Drive& drive) {
  const std::size_t n = ch.p.size();
  const cplx gp{atoms.gamma, atoms.delta_p};
  const cplx iG = kI * atoms.coupling_G;
  const cplx src = kI * atoms.coupling_G * c_eff / kSpeedOfLight;
  const double adv = c_eff / dz;

  cplx* e = ch.e.data();
  cplx* p = ch.p.data();
  cplx* s = ch.s.data();
  cplx* te = ch.te.data();
  cplx* tp = ch.tp.data();
  cplx* ts = ch.ts.data();
  cplx* ae = ch.ae.data();
  cplx* ap = ch.ap.data();
  cplx* as = ch.as.data();
  const cplx* eh = ch.decay_half.data();
  const cplx* ef = ch.decay_full.data();
  const double h6 = dt / 6.0, h3 = dt / 3.0, h2 = dt / 2.0;

  // Evaluates the stage derivative from (xe, xp, xs) and hands it to `use`.
  // Iterates downwards so xe[j-1] is still the stage input when read.
  auto stage = [&](double tstage, cplx* xe, cplx* xp, cplx* xs, auto&& use) {
    const cplx iw = kI * control_at(control, tstage);
    xe[0] = drive(tstage);
    for (std::size_t j = n; j-- > 0;) {
      const cplx ke = j == 0 ? cplx{} : -adv * (xe[j] - xe[j - 1]) + src * xp[j];
      const cplx kp = -gp * xp[j] + iw * xs[j] + iG * xe[j];
      const cplx ks = iw * xp[j];
      use(j, ke, kp, ks);
    }
  };

  stage(t, e, p, s, [&](std::size_t j, cplx ke, cplx kp, cplx ks) {
    ae[j] = e[j] + h6 * ke;
    ap[j] = p[j] + h6 * kp;
    as[j] = ef[j] * (s[j] + h6 * ks);
    te[j] = e[j] + h2 * ke;
    tp[j] = p[j] + h2 * kp;
    ts[j] = eh[j] * (s[j] + h2 * ks);
  });
  stage(t + h2, te, tp, ts, [&](std::size_t j, cplx ke, cplx kp, cplx ks) {
    ae[j] += h3 * ke;
    ap[j] += h3 * kp;
    as[j] += h3 * eh[j] * ks;
    te[j] = e[j] + h2 * ke;
    tp[j] = p[j] + h2 * kp;
    ts[j] = eh[j] * s[j] + h2 * ks;
  });
  stage(t + h2, te, tp, ts, [&](std::size_t j, cplx ke, cplx kp, cplx ks) {
    ae[j] += h3 * ke;
    ap[j] += h3 * kp;
    as[j] += h3 * eh[j] * ks;
    te[j] = e[j] + dt * ke;
    tp[j] = p[j] + dt * kp;
    ts[j] = ef[j] * s[j] + dt * eh[j] * ks;
  });
  stage(t + dt, te, tp, ts, [&](std::size_t j, cplx ke, cplx kp, cplx ks) {
    e[j] = ae[j] + h6 * ke;
    p[j] = ap[j] + h6 * kp;
    s[j] = as[j] + h6 * ks;
  });
  e[0] = drive(t + dt);
}

// Adiabatically eliminated dynamics on the primed fields
//   c dE'/dz = -(G Omega_c / Gp) e^{kz} e^{-Phi(t)} S'
//   dS'/dt   = -(gamma_r + i (delta_two + V)) S' - (G Omega_c / Gp) e^{Phi(t)} e^{-kz} E'
// with Gp = gamma + i delta_p, k = G^2 / (c Gp), Phi = int Omega_c^2 / Gp.
struct AdiabaticFactors {
  cplx gp;
  std::vector<cplx> ekz, emkz;  // exp(+k z_j), exp(-k z_j)
};

cplx adiabatic_phase(const ControlSchedule& control, const cplx& gp, double t) {
  return control.integral_of_square(t) / gp;
}

void adiabatic_scan(const cplx* sp, cplx boundary, double omega, cplx emphi, const AdiabaticFactors& f,
                    const AtomParams& atoms, double dz, std::size_t n, cplx* ep) {
  const cplx a = -(atoms.coupling_G * omega / f.gp) * emphi / kSpeedOfLight * (0.5 * dz);
  ep[0] = boundary;
  cplx prev = a * f.ekz[0] * sp[0];
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const cplx next = a * f.ekz[j + 1] * sp[j + 1];
    ep[j + 1] = ep[j] + prev + next;
    prev = next;
  }
}

void rk4_adiabatic(Channel& ch, double t, double dt, double dz, const AtomParams& atoms,
                   const ControlSchedule& control, const Drive& drive, const AdiabaticFactors& f) {
  const std::size_t n = ch.sp.size();
  cplx* sp = ch.sp.data();
  cplx* ts = ch.ts.data();
  cplx* as = ch.as.data();
  cplx* ep = ch.te.data();
  const cplx* eh = ch.decay_half.data();
  const cplx* ef = ch.decay_full.data();
  const double h6 = dt / 6.0, h3 = dt / 3.0, h2 = dt / 2.0;

  auto stage = [&](double tstage, const cplx* x, auto&& use) {
    const double omega = control_at(control, tstage);
    const cplx phi = adiabatic_phase(control, f.gp, tstage);
    adiabatic_scan(x, drive(tstage), omega, std::exp(-phi), f, atoms, dz, n, ep);
    const cplx b = -(atoms.coupling_G * omega / f.gp) * std::exp(phi);
    for (std::size_t j = 0; j < n; ++j) use(j, b * f.emkz[j] * ep[j]);
  };
  stage(t, sp, [&](std::size_t j, cplx k) {
    as[j] = ef[j] * (sp[j] + h6 * k);
    ts[j] = eh[j] * (sp[j] + h2 * k);
  });
  stage(t + h2, ts, [&](std::size_t j, cplx k) {
    as[j] += h3 * eh[j] * k;
    ts[j] = eh[j] * sp[j] + h2 * k;
  });
  stage(t + h2, ts, [&](std::size_t j, cplx k) {
    as[j] += h3 * eh[j] * k;
    ts[j] = ef[j] * sp[j] + dt * eh[j] * k;
  });
  stage(t + dt, ts, [&](std::size_t j, cplx k) { sp[j] = as[j] + h6 * k; });

  const double omega = control_at(control, t + dt);
  const cplx phi = adiabatic_phase(control, f.gp, t + dt);
  adiabatic_scan(sp, drive(t + dt), omega, std::exp(-phi), f, atoms, dz, n, ch.ep.data());
}

// Unprimed (E, P, S) from the primed adiabatic fields.
void adiabatic_unprime(Channel& ch, double t, const AtomParams& atoms, const ControlSchedule& control,
                       const AdiabaticFactors& f) {
  const cplx emphi = std::exp(-adiabatic_phase(control, f.gp, t));
  const cplx iw = kI * control_at(control, t);
  const cplx iG = kI * atoms.coupling_G;
  for (std::size_t j = 0; j < ch.s.size(); ++j) {
    ch.s[j] = emphi * ch.sp[j];
    ch.e[j] = f.emkz[j] * ch.ep[j];
    ch.p[j] = (iw * ch.s[j] + iG * ch.e[j]) / f.gp;
  }
}

bool same_free_dynamics(const PulseSpec& a, const PulseSpec& b) {
  return a.omega_p_max == b.omega_p_max && a.t_peak == b.t_peak && a.tau_p == b.tau_p && a.delta_p == b.delta_p &&
         a.delta_two == b.delta_two;
}

class Runner {
 public:
  Runner(const RunConfig& cfg, const SimulatorHooks& hooks) : cfg_(cfg), hooks_(hooks) {}

  SimulationResult execute();

 private:
  struct PulseRun {
    AtomParams atoms;
    Drive drive;
    bool mirrored = false;
    std::size_t free_owner = 0;
    DensityScale scale;
    std::vector<double> potential;  // local coordinates
    PulseDiagnostics diag;
    double input_max = 0.0;
    double prev_in = 0.0, prev_out = 0.0;
  };

  void setup();
  void refresh_potential(double t);
  void step(std::size_t k);
  void record(std::size_t k, double t);
  void check(double t);
  void accumulate_flux(double t, bool first);
  FieldState snapshot(double t) const;
  std::size_t phys(std::size_t l, std::size_t local) const {
    return runs_[l].mirrored ? n_ - 1 - local : local;
  }
  const Channel& free_of(std::size_t l) const { return free_[runs_[l].free_owner]; }

  const RunConfig& cfg_;
  const SimulatorHooks& hooks_;
  std::size_t n_ = 0;
  double dz_ = 0.0, dt_ = 0.0;
  bool adiabatic_ = false, mol_ = false;
  std::vector<PulseRun> runs_;
  std::vector<Channel> inter_, free_;
  std::vector<bool> free_active_;
  std::optional<Convolver> conv_;
  std::vector<double> density_, vphys_;
  AdiabaticFactors adiabatic_factors_;
  std::vector<double> zero_potential_;
  SimulationResult result_;
  std::size_t row_ = 0;
};

void Runner::setup() {
  const auto& g = cfg_.grid;
  n_ = g.n_z;
  dz_ = g.dz;
  dt_ = g.dt;
  adiabatic_ = cfg_.run.variant == ModelVariant::adiabatic;
  mol_ = cfg_.run.backend == Backend::mol;

  const std::size_t np = cfg_.pulses.size();
  runs_.resize(np);
  for (std::size_t l = 0; l < np; ++l) {
    const auto& spec = cfg_.pulses[l];
    auto& r = runs_[l];
    r.atoms = AtomParams{cfg_.medium.gamma, cfg_.medium.gamma_r, spec.delta_p, spec.delta_two,
                         cfg_.medium.coupling_G};
    r.mirrored = spec.entry_side == EntrySide::right;
    if (l < hooks_.drives.size() && hooks_.drives[l]) {
      r.drive = hooks_.drives[l];
      double acc = 0.0;
      for (std::size_t k = 0; k <= g.n_t; ++k) {
        const double w = (k == 0 || k == g.n_t) ? 0.5 : 1.0;
        acc += w * std::norm(r.drive(static_cast<double>(k) * dt_));
      }
      r.diag.photon_norm = acc * dt_ * kSpeedOfLight;
      if (!(r.diag.photon_norm > 0.0)) r.diag.photon_norm = 1.0;
    } else {
      r.drive = [spec](double t) { return boundary_pulse(spec, t); };
      r.diag.photon_norm = spec.photon_norm();
    }
    r.scale = DensityScale{cfg_.run.norm_mode, r.diag.photon_norm};
    r.potential.assign(n_, 0.0);
    r.free_owner = l;
  }
  const bool custom = !hooks_.drives.empty();
  if (np == 2 && !custom && same_free_dynamics(cfg_.pulses[0], cfg_.pulses[1])) runs_[1].free_owner = 0;

  inter_.assign(np, Channel(n_));
  free_.assign(np, Channel(n_));
  free_active_.assign(np, false);
  for (std::size_t l = 0; l < np; ++l) free_active_[runs_[l].free_owner] = true;

  const bool need_kernel = (cfg_.run.variant == ModelVariant::full || cfg_.run.variant == ModelVariant::mean_field ||
                            cfg_.run.variant == ModelVariant::adiabatic) &&
                           np == 2 && cfg_.medium.c6 != 0.0;
  if (need_kernel) {
    const auto kernel = build_kernel(cfg_.medium, cfg_.grid, cfg_.run.transverse_average);
    result_.kernel_hash = kernel_hash_hex(kernel.geometry());
    conv_.emplace(kernel, cfg_.run.convolution);
    density_.assign(n_, 0.0);
    vphys_.assign(n_, 0.0);
  }
  if (cfg_.run.variant == ModelVariant::constant_v) {
    for (auto& r : runs_) r.potential.assign(n_, cfg_.run.v0);
  }

  if (adiabatic_) {
    // All pulses share gamma; delta_p may differ, so factors are per pulse in
    // principle. Configurations with differing delta_p are rejected below.
    if (np == 2 && cfg_.pulses[0].delta_p != cfg_.pulses[1].delta_p) {
      throw ConfigError("adiabatic variant requires equal delta_p for both pulses");
    }
    auto& f = adiabatic_factors_;
    f.gp = cplx{cfg_.medium.gamma, cfg_.pulses[0].delta_p};
    if (std::abs(f.gp) == 0.0) throw NumericalError("adiabatic elimination: gamma + i delta_p vanishes");
    const cplx kappa = cfg_.medium.coupling_G * cfg_.medium.coupling_G / (kSpeedOfLight * f.gp);
    const double phi_end = std::abs((cfg_.control.integral_of_square(g.t_end) / f.gp).real());
    if (std::abs(kappa.real()) * cfg_.medium.length_L > 600.0 || phi_end > 600.0) {
      throw NumericalError("adiabatic elimination: scale transformation overflows double range");
    }
    f.ekz.resize(n_);
    f.emkz.resize(n_);
    for (std::size_t j = 0; j < n_; ++j) {
      const double z = g.z_at(j);
      f.ekz[j] = std::exp(kappa * z);
      f.emkz[j] = std::exp(-kappa * z);
    }
    for (auto* chans : {&inter_, &free_}) {
      for (auto& ch : *chans) {
        ch.sp.assign(n_, cplx{});
        ch.ep.assign(n_, cplx{});
      }
    }
  }

  // Initial fields: empty medium, entry field from the drive.
  for (std::size_t l = 0; l < np; ++l) {
    for (auto* ch : {&inter_[l], &free_[l]}) {
      const cplx b = runs_[l].drive(0.0);
      if (mol_) {
        ch->e[0] = b;
      } else if (adiabatic_) {
        adiabatic_scan(ch->sp.data(), b, control_at(cfg_.control, 0.0), cplx{1.0, 0.0}, adiabatic_factors_,
                       runs_[l].atoms, dz_, n_, ch->ep.data());
        adiabatic_unprime(*ch, 0.0, runs_[l].atoms, cfg_.control, adiabatic_factors_);
      } else {
        integrate_field_quasistatic(ch->p, b, runs_[l].atoms.coupling_G, dz_, ch->e);
      }
    }
  }
  zero_potential_.clear();

  // Output axes and history buffers.
  const std::size_t rows = g.n_t_out(), cols = g.n_z_out();
  result_.config = cfg_;
  result_.t_axis.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) result_.t_axis[r] = static_cast<double>(r * g.downsample_t) * dt_;
  result_.z_axis.resize(cols);
  for (std::size_t c = 0; c < cols; ++c) result_.z_axis[c] = g.z_at(c * g.downsample_z);
  for (std::size_t l = 0; l < np; ++l) {
    for (const char* name : {"E", "P", "S", "S0", "V"}) {
      result_.fields.push_back(FieldHistory{name, l, rows, cols, std::vector<double>(rows * cols, 0.0)});
    }
    if (cfg_.run.record_complex) {
      for (const char* name : {"E", "P", "S"}) {
        result_.complex_fields.push_back(ComplexHistory{name, l, rows, cols, std::vector<cplx>(rows * cols)});
      }
    }
    auto& d = runs_[l].diag;
    d.input_flux.assign(rows, 0.0);
    d.output_flux.assign(rows, 0.0);
    d.spinwave_norm.assign(rows, 0.0);
    d.excitation_norm.assign(rows, 0.0);
    d.free_norm.assign(rows, 0.0);
  }
}

void Runner::refresh_potential(double t) {
  const auto variant = cfg_.run.variant;
  const std::size_t np = runs_.size();
  if (variant == ModelVariant::constant_v) return;

  if (variant == ModelVariant::blockade) {
    double v = 0.0;
    if (np == 2) {
      std::array<double, 2> pos{};
      bool present = true;
      for (std::size_t l = 0; l < 2; ++l) {
        const auto& s = inter_[l].s;
        std::size_t best = 0;
        double best_v = 0.0;
        for (std::size_t k = 0; k < n_; ++k) {
          const double m = std::norm(s[k]);
          if (m > best_v) {
            best_v = m;
            best = k;
          }
        }
        if (best_v == 0.0) present = false;
        pos[l] = cfg_.grid.z_at(phys(l, best));
      }
      const double v_in = cfg_.run.blockade_v.value_or(
          vdw_point(std::max(cfg_.medium.separation_a, 1e-12), cfg_.medium.c6));
      if (present) v = blockade_potential(*cfg_.run.blockade_radius, v_in, {pos[0], pos[1]}, 1, t).values[0].real();
    }
    for (auto& r : runs_) std::fill(r.potential.begin(), r.potential.end(), v);
    return;
  }

  if (!conv_) return;  // single pulse or c6 == 0: V stays zero
  const bool mean_field = variant == ModelVariant::mean_field;
  for (std::size_t l = 0; l < 2; ++l) {
    const std::size_t partner = 1 - l;
    const auto& src = mean_field ? inter_[partner].s : free_of(partner).s;
    const double f = runs_[partner].scale.factor();
    for (std::size_t k = 0; k < n_; ++k) density_[phys(partner, k)] = f * std::norm(src[k]);
    conv_->apply(density_, vphys_);
    auto& r = runs_[l];
    for (std::size_t k = 0; k < n_; ++k) {
      const double v = vphys_[phys(l, k)];
      r.potential[k] = v;
      r.diag.potential_peak = std::max(r.diag.potential_peak, std::abs(v));
    }
  }
}

void Runner::step(std::size_t k) {
  const double t = static_cast<double>(k) * dt_;
  const std::size_t np = runs_.size();
  for (std::size_t l = 0; l < np; ++l) {
    auto& r = runs_[l];
    if (cfg_.run.variant == ModelVariant::constant_v || cfg_.run.variant == ModelVariant::blockade) {
      for (double v : r.potential) r.diag.potential_peak = std::max(r.diag.potential_peak, std::abs(v));
    }
    set_decay(inter_[l], r.atoms, r.potential, dt_);
    if (free_active_[l]) set_decay(free_[l], r.atoms, {}, dt_);
    for (Channel* ch : {&inter_[l], free_active_[l] ? &free_[l] : nullptr}) {
      if (ch == nullptr) continue;
      if (adiabatic_) {
        rk4_adiabatic(*ch, t, dt_, dz_, r.atoms, cfg_.control, r.drive, adiabatic_factors_);
        adiabatic_unprime(*ch, t + dt_, r.atoms, cfg_.control, adiabatic_factors_);
      } else if (mol_) {
        rk4_mol(*ch, t, dt_, dz_, *cfg_.run.c_eff, r.atoms, cfg_.control, r.drive);
      } else {
        rk4_quasistatic(*ch, t, dt_, dz_, r.atoms, cfg_.control, r.drive, hooks_.coupling);
      }
    }
  }
}

void Runner::accumulate_flux(double t, bool first) {
  for (std::size_t l = 0; l < runs_.size(); ++l) {
    auto& r = runs_[l];
    const double in = std::norm(inter_[l].e.front());
    const double out = std::norm(inter_[l].e.back());
    r.input_max = std::max(r.input_max, std::sqrt(in));
    if (!first) {
      r.diag.input_energy += 0.5 * dt_ * (r.prev_in + in);
      r.diag.output_energy += 0.5 * dt_ * (r.prev_out + out);
      r.diag.input_centroid += 0.5 * dt_ * ((t - dt_) * r.prev_in + t * in);
      r.diag.output_centroid += 0.5 * dt_ * ((t - dt_) * r.prev_out + t * out);
    }
    r.prev_in = in;
    r.prev_out = out;
  }
}

void Runner::check(double t) {
  for (std::size_t l = 0; l < runs_.size(); ++l) {
    const auto& r = runs_[l];
    const Channel& fr = free_of(l);
    const std::pair<const char*, const std::vector<cplx>*> arrays[] = {
        {"E", &inter_[l].e}, {"P", &inter_[l].p}, {"S", &inter_[l].s},
        {"E0", &fr.e},       {"P0", &fr.p},       {"S0", &fr.s}};
    const double limit = kDivergenceFactor * std::max(r.input_max, 1e-300);
    for (const auto& [name, arr] : arrays) {
      if (auto bad = first_non_finite(*arr)) {
        std::ostringstream msg;
        msg << "non-finite value in pulse " << l + 1 << " field " << name << " at z=" << cfg_.grid.z_at(*bad)
            << " um (local), t=" << t << " us";
        result_.status = TerminationStatus::non_finite;
        result_.message = msg.str();
        throw NumericalError(msg.str());
      }
      const double m = max_abs(*arr);
      if (r.input_max > 0.0 && m > limit) {
        std::ostringstream msg;
        msg << "divergence: pulse " << l + 1 << " field " << name << " reached " << m << " at t=" << t
            << " us (input maximum " << r.input_max << ")";
        result_.status = TerminationStatus::diverged;
        result_.message = msg.str();
        throw NumericalError(msg.str());
      }
    }
  }
}

void Runner::record(std::size_t k, double t) {
  const auto& g = cfg_.grid;
  if (k % g.downsample_t != 0) return;
  const std::size_t row = k / g.downsample_t;
  const std::size_t cols = g.n_z_out();
  const std::size_t np = runs_.size();
  for (std::size_t l = 0; l < np; ++l) {
    const auto& ch = inter_[l];
    const auto& fr = free_of(l);
    auto& r = runs_[l];
    FieldHistory* hist[5];
    for (auto& h : result_.fields) {
      if (h.pulse != l) continue;
      if (h.name == "E") hist[0] = &h;
      if (h.name == "P") hist[1] = &h;
      if (h.name == "S") hist[2] = &h;
      if (h.name == "S0") hist[3] = &h;
      if (h.name == "V") hist[4] = &h;
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t jp = c * g.downsample_z;  // physical node
      const std::size_t kl = phys(l, jp);          // local node (mapping is an involution)
      const std::size_t at = row * cols + c;
      hist[0]->data[at] = std::abs(ch.e[kl]);
      hist[1]->data[at] = std::abs(ch.p[kl]);
      hist[2]->data[at] = std::abs(ch.s[kl]);
      hist[3]->data[at] = std::abs(fr.s[kl]);
      hist[4]->data[at] = r.potential[kl];
    }
    for (auto& h : result_.complex_fields) {
      if (h.pulse != l) continue;
      const auto& src = h.name == "E" ? ch.e : (h.name == "P" ? ch.p : ch.s);
      for (std::size_t c = 0; c < cols; ++c) h.data[row * cols + c] = src[phys(l, c * g.downsample_z)];
    }
    const double w = r.diag.photon_norm;
    r.diag.input_flux[row] = std::norm(ch.e.front());
    r.diag.output_flux[row] = std::norm(ch.e.back());
    const double sn = trapz_norm(ch.s, dz_);
    r.diag.spinwave_norm[row] = sn / w;
    r.diag.excitation_norm[row] = (sn + trapz_norm(ch.p, dz_) + trapz_norm(ch.e, dz_)) / w;
    r.diag.free_norm[row] = (trapz_norm(fr.s, dz_) + trapz_norm(fr.p, dz_) + trapz_norm(fr.e, dz_)) / w;
  }
  row_ = row;
  (void)t;
}

FieldState Runner::snapshot(double t) const {
  FieldState st;
  st.t = t;
  for (std::size_t l = 0; l < runs_.size(); ++l) {
    PulseFields pf;
    pf.e = inter_[l].e;
    pf.p = inter_[l].p;
    pf.s = inter_[l].s;
    const auto& fr = free_of(l);
    pf.e0 = fr.e;
    pf.p0 = fr.p;
    pf.s0 = fr.s;
    st.pulses.push_back(std::move(pf));
  }
  return st;
}

SimulationResult Runner::execute() {
  const auto wall0 = std::chrono::steady_clock::now();
  setup();
  const auto& g = cfg_.grid;
  const std::size_t stride = cfg_.run.potential_stride;

  auto finish = [&](double t) {
    for (std::size_t l = 0; l < runs_.size(); ++l) {
      auto& d = runs_[l].diag;
      d.input_centroid = d.input_energy > 0.0 ? d.input_centroid / d.input_energy : 0.0;
      d.output_centroid = d.output_energy > 0.0 ? d.output_centroid / d.output_energy : 0.0;
      result_.diagnostics.push_back(d);
    }
    result_.final_state = snapshot(t);
    result_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  };

  accumulate_flux(0.0, true);
  if (cfg_.run.variant == ModelVariant::blockade || conv_) refresh_potential(0.0);
  record(0, 0.0);
  check(0.0);

  std::size_t k = 0;
  try {
    for (; k < g.n_t; ++k) {
      const double t = static_cast<double>(k) * dt_;
      if (k > 0 && k % stride == 0) refresh_potential(t);
      step(k);
      const double t1 = static_cast<double>(k + 1) * dt_;
      accumulate_flux(t1, false);
      if ((k + 1) % g.downsample_t == 0) {
        record(k + 1, t1);
        check(t1);
      }
      if (hooks_.observer) hooks_.observer(snapshot(t1));
    }
    check(static_cast<double>(k) * dt_);
  } catch (const NumericalError&) {
    result_.steps_taken = k;
    if (result_.status == TerminationStatus::completed) result_.status = TerminationStatus::non_finite;
    if (hooks_.throw_on_divergence) throw;
    finish(static_cast<double>(k) * dt_);
    return std::move(result_);
  }
  result_.steps_taken = k;
  finish(static_cast<double>(k) * dt_);
  return std::move(result_);
}

}  // namespace

void integrate_field_quasistatic(std::span<const cplx> p, cplx boundary, double coupling_G, double dz,
                                 std::span<cplx> e) {
  if (p.size() != e.size() || p.empty()) throw NumericalError("field integration: length mismatch");
  scan_field(p.data(), boundary, kI * coupling_G * dz / (2.0 * kSpeedOfLight), p.size(), e.data());
}

void step_atoms_rk4(std::span<cplx> e, std::span<cplx> p, std::span<cplx> s, double t, double dt, double dz,
                    const AtomParams& atoms, const ControlSchedule& control, const Drive& drive,
                    std::span<const double> potential, FieldCoupling coupling) {
  const std::size_t n = p.size();
  if (e.size() != n || s.size() != n || (!potential.empty() && potential.size() != n)) {
    throw NumericalError("step_atoms_rk4: length mismatch");
  }
  Channel ch(n);
  std::copy(e.begin(), e.end(), ch.e.begin());
  std::copy(p.begin(), p.end(), ch.p.begin());
  std::copy(s.begin(), s.end(), ch.s.begin());
  set_decay(ch, atoms, potential, dt);
  rk4_quasistatic(ch, t, dt, dz, atoms, control, drive, coupling);
  for (const auto* arr : {&ch.p, &ch.s}) {
    if (auto bad = first_non_finite(*arr)) {
      throw NumericalError("non-finite value after RK4 step at node " + std::to_string(*bad));
    }
  }
  std::copy(ch.e.begin(), ch.e.end(), e.begin());
  std::copy(ch.p.begin(), ch.p.end(), p.begin());
  std::copy(ch.s.begin(), ch.s.end(), s.begin());
}

std::string_view to_string(TerminationStatus s) {
  switch (s) {
    case TerminationStatus::completed: return "completed";
    case TerminationStatus::diverged: return "diverged";
    case TerminationStatus::non_finite: return "non_finite";
  }
  return "completed";
}

const FieldHistory* SimulationResult::find(std::string_view name, std::size_t pulse) const {
  for (const auto& f : fields) {
    if (f.name == name && f.pulse == pulse) return &f;
  }
  return nullptr;
}

double SimulationResult::physical_z(std::size_t pulse, double local_z) const {
  const bool mirrored = config.pulses.at(pulse).entry_side == EntrySide::right;
  return mirrored ? config.medium.length_L - local_z : local_z;
}

SimulationResult run(const RunConfig& config, const SimulatorHooks& hooks) {
  const DenormalGuard guard;
  Runner runner(config, hooks);
  return runner.execute();
}

SimulationResult run_mol_reference(const RunConfig& config, const SimulatorHooks& hooks) {
  if (config.run.backend != Backend::mol) throw ConfigError("run_mol_reference requires backend 'mol'");
  if (!config.run.c_eff) throw ConfigError("mol backend requires 'c_eff'");
  if (config.grid.dt > 0.5 * config.grid.dz / *config.run.c_eff) {
    throw ConfigError("CFL violation: dt must satisfy dt <= 0.5 dz / c_eff");
  }
  return run(config, hooks);
}

SimulationResult run_adiabatic(const RunConfig& config, const SimulatorHooks& hooks) {
  if (config.run.variant != ModelVariant::adiabatic) throw ConfigError("run_adiabatic requires variant 'adiabatic'");
  return run(config, hooks);
}

double storage_asymmetry(std::span<const double> magnitude) {
  if (magnitude.empty()) return 1.0;
  const auto peak = static_cast<std::size_t>(std::distance(
      magnitude.begin(), std::max_element(magnitude.begin(), magnitude.end())));
  double front = 0.0, back = 0.0;
  for (std::size_t j = 0; j < magnitude.size(); ++j) {
    const double w = magnitude[j] * magnitude[j];
    if (j > peak) front += w;
    if (j < peak) back += w;
  }
  // The peak node itself is split evenly.
  const double half_peak = 0.5 * magnitude[peak] * magnitude[peak];
  front += half_peak;
  back += half_peak;
  return back > 0.0 ? front / back : 1.0;
}

StorageReport scenario_storage(const RunConfig& config, const SimulatorHooks& hooks) {
  if (config.control.kind != ControlKind::tanh_switch) {
    throw ConfigError("storage scenario requires a tanh_switch control schedule");
  }
  StorageReport report;
  const double t_stop = std::max(config.control.t_off, 0.0);
  report.t_stop = t_stop;

  SimulatorHooks local = hooks;
  bool captured = false;
  const auto user_observer = hooks.observer;
  local.observer = [&](const FieldState& st) {
    if (!captured && st.t >= t_stop - 1e-12) {
      for (const auto& pf : st.pulses) {
        std::vector<double> mag(pf.s.size());
        for (std::size_t j = 0; j < mag.size(); ++j) mag[j] = std::abs(pf.s[j]);
        report.profile.push_back(std::move(mag));
      }
      captured = true;
    }
    if (user_observer) user_observer(st);
  };
  report.result = run(config, local);
  if (!captured) throw ConfigError("storage scenario: run ends before the control switches off");

  const auto& t_axis = report.result.t_axis;
  std::size_t first = 0;
  while (first < t_axis.size() && t_axis[first] < t_stop - 1e-12) ++first;
  report.t_after.assign(t_axis.begin() + static_cast<std::ptrdiff_t>(first), t_axis.end());
  for (std::size_t l = 0; l < report.result.diagnostics.size(); ++l) {
    const auto& sn = report.result.diagnostics[l].spinwave_norm;
    report.stored_norm.emplace_back(sn.begin() + static_cast<std::ptrdiff_t>(first), sn.end());
    report.asymmetry.push_back(storage_asymmetry(report.profile[l]));
  }
  return report;
}

}  // namespace rydpulse
