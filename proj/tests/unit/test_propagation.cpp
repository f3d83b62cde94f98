#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rydpulse/analysis.hpp"
#include "rydpulse/errors.hpp"
#include "rydpulse/propagation.hpp"
#include "support.hpp"

using namespace rydpulse;
using rydtest::kGamma;
using rydtest::kOmegaC;

namespace {

const Drive kNoDrive = [](double) { return cplx{}; };

struct Deviation {
  double diff = 0.0;
  double scale = 0.0;
};

// Largest |S - S0| over every node and step against the largest |S0|.
Deviation track_free_deviation(const RunConfig& cfg) {
  Deviation d;
  SimulatorHooks hooks;
  hooks.observer = [&](const FieldState& st) {
    for (const auto& pf : st.pulses) {
      for (std::size_t j = 0; j < pf.s.size(); ++j) {
        d.diff = std::max(d.diff, std::abs(pf.s[j] - pf.s0[j]));
        d.scale = std::max(d.scale, std::abs(pf.s0[j]));
      }
    }
  };
  run(cfg, hooks);
  return d;
}

double max_abs_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double m = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
  return m;
}

double max_abs(const std::vector<cplx>& a) {
  double m = 0.0;
  for (const auto& x : a) m = std::max(m, std::abs(x));
  return m;
}

// Coupled atom-field instance on a short medium, integrated to t_end with
// the given number of steps. Returns S followed by P.
std::vector<cplx> integrate_coupled(std::size_t steps, double t_end) {
  const std::size_t n = 21;
  const double dz = 0.5;
  AtomParams atoms{kGamma, 0.7, 0.3 * kGamma, 0.4, 5.0e3};
  ControlSchedule control{ControlKind::tanh_switch, kOmegaC, 1.2, 0.3};
  const Drive drive = [](double t) { return cplx{0.05 * std::exp(-(t - 0.6) * (t - 0.6) / 0.09), 0.0}; };
  std::vector<cplx> e(n), p(n), s(n);
  integrate_field_quasistatic(p, drive(0.0), atoms.coupling_G, dz, e);
  const double dt = t_end / static_cast<double>(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    step_atoms_rk4(e, p, s, k * dt, dt, dz, atoms, control, drive, {});
  }
  s.insert(s.end(), p.begin(), p.end());
  return s;
}

}  // namespace

TEST_SUITE("propagation") {

TEST_CASE("field quadrature: free streaming and linear ramp") {
  const std::size_t n = 11;
  const double dz = 0.3, G = 2.0e4;
  std::vector<cplx> p(n, 0.0), e(n);
  integrate_field_quasistatic(p, cplx{0.2, -0.1}, G, dz, e);
  for (const auto& x : e) CHECK(x == cplx{0.2, -0.1});

  const cplx p0{0.03, 0.01};
  std::fill(p.begin(), p.end(), p0);
  integrate_field_quasistatic(p, cplx{0.2, 0.0}, G, dz, e);
  for (std::size_t j = 0; j < n; ++j) {
    const cplx expected = cplx{0.2, 0.0} + cplx{0.0, 1.0} * G * p0 * (j * dz) / kSpeedOfLight;
    CHECK(std::abs(e[j] - expected) < 1e-15);
  }
}

TEST_CASE("decoupled spinwave decays exactly") {
  const std::size_t n = 3;
  AtomParams atoms{kGamma, 0.8, 0.0, 1.7, 0.0};
  ControlSchedule off{ControlKind::constant, 0.0};
  std::vector<cplx> e(n), p(n), s(n, cplx{0.3, 0.4});
  const double dt = 0.01;
  step_atoms_rk4(e, p, s, 0.0, dt, 0.1, atoms, off, kNoDrive, {});
  const cplx expected = cplx{0.3, 0.4} * std::exp(-cplx{0.8, 1.7} * dt);
  for (const auto& x : s) CHECK(std::abs(x - expected) < 1e-15);
}

TEST_CASE("lossless Rabi rotation conserves the two-level norm") {
  const std::size_t n = 3;
  AtomParams atoms{0.0, 0.0, 0.0, 0.0, 0.0};
  ControlSchedule on{ControlKind::constant, kOmegaC};
  for (double dt : {0.01, 0.005}) {
    std::vector<cplx> e(n), p(n, cplx{1.0, 0.0}), s(n, 0.0);
    step_atoms_rk4(e, p, s, 0.0, dt, 0.1, atoms, on, kNoDrive, {});
    const double x = kOmegaC * dt;
    // |P|^2 + |S|^2 deviates by x^6/72 for one classic RK4 step of a rotation.
    const double drift = std::abs(std::norm(p[0]) + std::norm(s[0]) - 1.0);
    CHECK(drift <= std::pow(x, 6) / 72.0 * 1.01 + 1e-15);
    CHECK(std::abs(p[0] - std::cos(x)) < std::pow(x, 5));
    CHECK(std::abs(s[0] - cplx{0.0, std::sin(x)}) < std::pow(x, 5));
  }
}

TEST_CASE("coupled atom-field update is fourth order in time") {
  const double t_end = 1.6;
  const auto a = integrate_coupled(40, t_end);
  const auto b = integrate_coupled(80, t_end);
  const auto c = integrate_coupled(160, t_end);
  const double ratio = max_abs_diff(a, b) / max_abs_diff(b, c);
  CHECK(ratio > 12.0);
  CHECK(ratio < 20.0);
}

TEST_CASE("one step against two half steps") {
  auto local_gap = [](double dt) {
    const std::size_t n = 21;
    const double dz = 0.5;
    AtomParams atoms{kGamma, 0.7, 0.3 * kGamma, 0.4, 5.0e3};
    ControlSchedule control{ControlKind::constant, kOmegaC};
    const Drive drive = [](double t) { return cplx{0.05 * std::exp(-(t - 0.6) * (t - 0.6) / 0.09), 0.0}; };
    std::vector<cplx> e(n), p(n), s(n);
    for (std::size_t j = 0; j < n; ++j) {
      p[j] = cplx{0.01 * std::sin(0.3 * j), 0.004};
      s[j] = cplx{0.002, -0.02 * std::cos(0.2 * j)};
    }
    integrate_field_quasistatic(p, drive(0.5), atoms.coupling_G, dz, e);
    auto e2 = e, p2 = p, s2 = s;
    step_atoms_rk4(e, p, s, 0.5, dt, dz, atoms, control, drive, {});
    step_atoms_rk4(e2, p2, s2, 0.5, dt / 2, dz, atoms, control, drive, {});
    step_atoms_rk4(e2, p2, s2, 0.5 + dt / 2, dt / 2, dz, atoms, control, drive, {});
    return std::max(max_abs_diff(p, p2), max_abs_diff(s, s2));
  };
  const double ratio = local_gap(0.004) / local_gap(0.002);
  CHECK(ratio > 26.0);
  CHECK(ratio < 38.0);
}

TEST_CASE("without interaction the interacting and free channels coincide") {
  const auto cfg = rydtest::small_config(5.0, 0.0);
  const auto d = track_free_deviation(cfg);
  CHECK(d.scale > 0.0);
  CHECK(d.diff <= 1e-12 * d.scale);
}

TEST_CASE("constant and blockade variants with zero potential reduce to the free run") {
  auto base = rydtest::small_config(5.0, 0.0);
  const auto reference = run(base);

  auto doc = rydtest::small_doc(5.0);
  doc["run"] = {{"variant", "constantv"}, {"v0", 0.0}};
  const auto cv = run(validate_config(doc));

  doc["run"] = {{"variant", "blockade"}, {"blockade_radius", 8.0}, {"blockade_v", 0.0}};
  const auto bl = run(validate_config(doc));

  for (std::size_t l = 0; l < 2; ++l) {
    const auto& ref = reference.final_state.pulses[l].s;
    const double scale = max_abs(ref);
    CHECK(max_abs_diff(cv.final_state.pulses[l].s, ref) <= 1e-12 * scale);
    CHECK(max_abs_diff(bl.final_state.pulses[l].s, ref) <= 1e-12 * scale);
    CHECK(max_abs_diff(bl.final_state.pulses[l].e, reference.final_state.pulses[l].e) <=
          1e-12 * max_abs(reference.final_state.pulses[l].e));
  }
}

TEST_CASE("identical counter-propagating pulses stay mirror images") {
  const auto res = run(rydtest::small_config(5.0));
  const auto& a = res.final_state.pulses[0];
  const auto& b = res.final_state.pulses[1];
  CHECK(max_abs_diff(a.s, b.s) <= 1e-10 * max_abs(a.s));
  CHECK(max_abs_diff(a.e, b.e) <= 1e-10 * max_abs(a.e));
  CHECK(transmission(res, 0) == doctest::Approx(transmission(res, 1)).epsilon(1e-10));
}

TEST_CASE("free reference is linear in the drive amplitude") {
  auto doc = rydtest::small_doc(-2.0);
  const auto one = run(validate_config(doc));
  doc["pulses"][0]["omega_p_max"] = 2.0 * doc["pulses"][0]["omega_p_max"].get<double>();
  doc["pulses"][1]["omega_p_max"] = 2.0 * doc["pulses"][1]["omega_p_max"].get<double>();
  const auto two = run(validate_config(doc));
  const auto& s1 = one.final_state.pulses[0].s0;
  auto scaled = s1;
  for (auto& x : scaled) x *= 2.0;
  CHECK(max_abs_diff(two.final_state.pulses[0].s0, scaled) <= 1e-12 * max_abs(scaled));
}

TEST_CASE("lossless medium keeps the photon bookkeeping") {
  auto cfg = rydtest::small_config(3.0);
  cfg.medium.gamma = 0.0;
  cfg.medium.gamma_r = 0.0;
  cfg.grid.t_end = 2.5;
  cfg.grid.n_t = 2500;
  const auto res = run(cfg);
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& d = res.diagnostics[l];
    const double entered = kSpeedOfLight * d.input_energy / d.photon_norm;
    const double left = kSpeedOfLight * d.output_energy / d.photon_norm;
    const double inside = d.excitation_norm.back();
    CHECK(entered > 0.99);
    CHECK(std::abs(left + inside - entered) < 5e-3 * entered);
  }
}

TEST_CASE("steady-state plane wave decays with the analytic absorption") {
  auto cfg = rydtest::small_config(0.0, 0.0);
  cfg.pulses.resize(1);
  cfg.medium.gamma_r = 0.5;
  cfg.grid.t_end = 20.0;
  cfg.grid.n_t = 20000;
  cfg.grid.downsample_t = 1000;
  SimulatorHooks hooks;
  hooks.drives = {[](double t) { return cplx{0.01 * (1.0 - std::exp(-t / 0.5)), 0.0}; }};
  const auto res = run(cfg, hooks);
  const auto& e = res.final_state.pulses[0].e;
  SusceptibilityParams sp{0.0, kOmegaC, kGamma, 0.5, 0.0};
  const double im_chi = susceptibility(0.0, sp).imag();
  const double G = cfg.medium.coupling_G;
  const double expected = std::exp(-G * G * im_chi * cfg.medium.length_L / kSpeedOfLight);
  CHECK(expected < 0.8);
  CHECK(rydtest::rel_diff(std::abs(e.back()) / std::abs(e.front()), expected) < 0.02);
}

TEST_CASE("advection-only method-of-lines run travels at the reduced light speed") {
  auto doc = rydtest::small_doc(0.0, 0.0);
  doc["pulses"] = nlohmann::json::array({doc["pulses"][0]});
  doc["run"] = {{"variant", "full"}, {"backend", "mol"}, {"c_eff", 20.0}};
  doc["grid"]["dt"] = 1e-3;
  doc["grid"]["t_end"] = 3.0;
  auto cfg = validate_config(doc);
  cfg.medium.coupling_G = 0.0;
  const auto res = run_mol_reference(cfg);
  CHECK(rydtest::rel_diff(transit_group_velocity(res, 0), 20.0) < 0.02);
  CHECK(transmission(res, 0) > 0.95);
}

TEST_CASE("method of lines rejects a CFL-violating step") {
  auto cfg = rydtest::small_config();
  cfg.run.backend = Backend::mol;
  cfg.run.c_eff = 100.0;
  cfg.grid.dt = 0.01;
  CHECK_THROWS_AS(run_mol_reference(cfg), ConfigError);
}

TEST_CASE("an unstable step raises a numerical error") {
  auto doc = rydtest::small_doc(0.0);
  doc["medium"]["length_L"] = 100.0;
  doc["grid"]["dz"] = 0.5;
  doc["grid"]["dt"] = 0.05;
  doc["grid"]["t_end"] = 20.0;
  const auto cfg = validate_config(doc);
  CHECK_THROWS_AS(run(cfg), NumericalError);
  SimulatorHooks quiet;
  quiet.throw_on_divergence = false;
  const auto res = run(cfg, quiet);
  CHECK(res.status != TerminationStatus::completed);
  CHECK_FALSE(res.message.empty());
}

TEST_CASE("stored spinwave without Rydberg decay stays constant") {
  auto doc = rydtest::small_doc(0.0);
  doc["medium"]["gamma_r"] = 0.0;
  doc["control"] = {{"kind", "tanh_switch"}, {"omega_c0", kOmegaC}, {"t_off", 2.2}, {"tau_c", 0.2}};
  doc["grid"]["downsample_t"] = 50;
  const auto rep = scenario_storage(validate_config(doc));
  REQUIRE(rep.t_after.size() > 5);
  for (const auto& series : rep.stored_norm) {
    CHECK(series.front() > 0.0);
    for (double x : series) CHECK(std::abs(x - series.front()) <= 1e-10 * series.front());
  }
}

TEST_CASE("stored spinwave decays at twice the Rydberg rate") {
  const double gr = 0.4;
  auto doc = rydtest::small_doc(0.0);
  doc["medium"]["gamma_r"] = gr;
  doc["control"] = {{"kind", "tanh_switch"}, {"omega_c0", kOmegaC}, {"t_off", 2.2}, {"tau_c", 0.2}};
  doc["grid"]["downsample_t"] = 50;
  const auto rep = scenario_storage(validate_config(doc));
  REQUIRE(rep.t_after.size() > 5);
  for (const auto& series : rep.stored_norm) {
    for (std::size_t k = 0; k < series.size(); ++k) {
      const double expected = series.front() * std::exp(-2.0 * gr * (rep.t_after[k] - rep.t_after.front()));
      CHECK(rydtest::rel_diff(series[k], expected) < 0.01);
    }
  }
}

TEST_CASE("storage asymmetry metric") {
  const std::vector<double> symmetric = {0.0, 1.0, 2.0, 3.0, 2.0, 1.0, 0.0};
  CHECK(storage_asymmetry(symmetric) == doctest::Approx(1.0));
  const std::vector<double> front_heavy = {0.0, 2.0, 3.0, 2.0, 1.0, 0.5, 0.0};
  CHECK(storage_asymmetry(front_heavy) == doctest::Approx(9.75 / 8.5));
  CHECK(storage_asymmetry({}) == 1.0);
}

}  // TEST_SUITE
