#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rydpulse/analysis.hpp"
#include "rydpulse/propagation.hpp"
#include "support.hpp"

using namespace rydpulse;
using rydtest::kGamma;
using rydtest::kOmegaC;

namespace {

// Central difference of Re chi under a probe shift, with the step scaled to
// the narrowest feature of the response.
double slope_numeric(const SusceptibilityParams& p, double delta) {
  const double width = std::min({std::abs(cplx{p.gamma_r, delta + p.v0}), p.gamma, p.omega_c > 0 ? p.omega_c : p.gamma});
  const double h = 1e-4 * width;
  auto re_chi = [&](double nu) {
    SusceptibilityParams q = p;
    q.delta_p -= nu;
    return susceptibility(delta - nu, q).real();
  };
  return (re_chi(h) - re_chi(-h)) / (2.0 * h);
}

// Synthetic single-pulse record with a Gaussian |E| moving at speed v.
SimulationResult moving_pulse(double v, bool mirrored) {
  SimulationResult res;
  res.config = rydtest::small_config();
  res.config.pulses.resize(1);
  if (mirrored) res.config.pulses[0].entry_side = EntrySide::right;
  const std::size_t cols = 201, rows = 60;
  const double dz = 0.05, dt = 0.01;
  for (std::size_t j = 0; j < cols; ++j) res.z_axis.push_back(j * dz);
  FieldHistory h{"E", 0, rows, cols, {}};
  for (std::size_t r = 0; r < rows; ++r) {
    res.t_axis.push_back(r * dt);
    const double zc = 2.0 + v * r * dt;
    for (std::size_t j = 0; j < cols; ++j) {
      const double local = mirrored ? 10.0 - j * dz : j * dz;
      h.data.push_back(std::exp(-(local - zc) * (local - zc) / 0.5));
    }
  }
  res.fields.push_back(h);
  return res;
}

std::vector<TrajectoryPoint> straight_line(double z0, double v, std::size_t n, double dt) {
  std::vector<TrajectoryPoint> out(n);
  for (std::size_t r = 0; r < n; ++r) out[r] = {r * dt, z0 + v * r * dt, v, true, true};
  return out;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("perfect dark state is transparent") {
  SusceptibilityParams p{0.0, kOmegaC, kGamma, 0.0, 0.0};
  CHECK(std::abs(susceptibility(0.0, p)) <= 1e-14);
  const auto curve = susceptibility_curve(p, -80.0, 80.0, 401);
  CHECK(curve.delta[200] == 0.0);
  CHECK(std::abs(curve.chi[200]) <= 1e-14);
}

TEST_CASE("two-level limit") {
  const cplx two_level = cplx{0.0, 1.0} / cplx{kGamma, 10.0 * kGamma};
  SusceptibilityParams off{10.0 * kGamma, 0.0, kGamma, 0.3, 0.0};
  CHECK(std::abs(susceptibility(0.7, off) - two_level) <= 1e-14 * std::abs(two_level));
  for (double sign : {-1.0, 1.0}) {
    SusceptibilityParams far{10.0 * kGamma, kOmegaC, kGamma, 2.0 * kTwoPi * 1.8e-3, sign * 1e5 * kGamma};
    CHECK(std::abs(susceptibility(0.0, far) - two_level) <= 1e-3 * std::abs(two_level));
  }
  SusceptibilityParams resonant{0.0, 0.0, kGamma, 0.3, 0.0};
  const auto curve = susceptibility_curve(resonant, 0.0, 0.0, 1);
  CHECK(curve.chi[0].imag() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("dispersion slope against symbolic and numeric derivatives") {
  for (double dp : {-10.0, -5.0, 0.0, 5.0, 10.0}) {
    for (double v0 : {0.0, -0.003, -0.006, 0.01, -1.0}) {
      SusceptibilityParams p{dp * kGamma, kOmegaC, kGamma, kTwoPi * 1.8e-3, v0 * kGamma};
      const double numeric = slope_numeric(p, 0.0);
      CHECK(std::abs(dispersion_slope(p) - numeric) <= 1e-5 * std::abs(numeric));
    }
  }
  SusceptibilityParams two_level{10.0 * kGamma, 0.0, kGamma, 0.0, 0.0};
  const cplx a{kGamma, 10.0 * kGamma};
  CHECK(dispersion_slope(two_level) == doctest::Approx((-1.0 / (a * a)).real()).epsilon(1e-8));
}

TEST_CASE("slope at the transparency point") {
  SusceptibilityParams p{0.0, kOmegaC, kGamma, 0.0, 0.0};
  const double s = dispersion_slope(p);
  CHECK(s > 0.0);
  CHECK(s == doctest::Approx(1.0 / (kOmegaC * kOmegaC)).epsilon(1e-8));
}

TEST_CASE("anomalous dispersion under a weak potential at negative detuning") {
  double lowest = 1.0;
  for (int k = 0; k <= 200; ++k) {
    SusceptibilityParams p{-10.0 * kGamma, kOmegaC, kGamma, kTwoPi * 1.8e-3, -1e-4 * k * kGamma};
    lowest = std::min(lowest, dispersion_slope(p));
  }
  CHECK(lowest < 0.0);
}

TEST_CASE("analytic group velocity") {
  SusceptibilityParams eit{0.0, kOmegaC, kGamma, 0.0, 0.0};
  CHECK(group_velocity_analytic(eit, 0.0) == doctest::Approx(kSpeedOfLight));
  const double G = 1e3 * kOmegaC;
  CHECK(group_velocity_analytic(eit, G) == doctest::Approx(kSpeedOfLight / (1.0 + 1e6)).epsilon(1e-6));

  SusceptibilityParams p{10.0 * kGamma, kOmegaC, kGamma, kTwoPi * 1.8e-3, 0.0};
  const double v_eit = group_velocity_analytic(p, 5.2e4);
  p.v0 = 1e5 * kGamma;
  const double v_far = group_velocity_analytic(p, 5.2e4);
  p.omega_c = 0.0;
  p.v0 = 0.0;
  const double v_two_level = group_velocity_analytic(p, 5.2e4);
  CHECK(v_far > 100.0 * v_eit);
  CHECK(rydtest::rel_diff(v_far, v_two_level) < 1e-3);
}

TEST_CASE("trajectory of a synthetic moving peak") {
  for (bool mirrored : {false, true}) {
    const auto res = moving_pulse(12.0, mirrored);
    const auto tr = trajectory(res, "E", 0);
    REQUIRE(tr.size() == 60);
    std::size_t checked = 0;
    for (const auto& pt : tr) {
      if (!pt.v_valid) continue;
      CHECK(pt.z_peak == doctest::Approx(2.0 + 12.0 * pt.t).epsilon(1e-3));
      CHECK(pt.v_g == doctest::Approx(12.0).epsilon(1e-2));
      ++checked;
    }
    CHECK(checked > 40);
  }
}

TEST_CASE("first meeting of two counter-propagating peaks") {
  const double L = 100.0, dt = 0.5;
  const auto a = straight_line(0.0, 10.0, 20, dt);
  const auto b = straight_line(0.0, 10.0, 20, dt);
  const auto r = closest_approach(a, b, L);
  REQUIRE(r.has_value());
  CHECK(a[*r].t == doctest::Approx(5.0));

  // Partners that never meet: the row of smallest separation.
  const auto slow = straight_line(0.0, 1.0, 20, dt);
  const auto r2 = closest_approach(slow, slow, L);
  REQUIRE(r2.has_value());
  CHECK(*r2 == 19);
}

TEST_CASE("transmission and transit speed from diagnostics") {
  SimulationResult res;
  res.config = rydtest::small_config();
  PulseDiagnostics d;
  d.input_energy = 2.0;
  d.output_energy = 0.5;
  d.input_centroid = 1.0;
  d.output_centroid = 3.0;
  res.diagnostics = {d, d};
  CHECK(transmission(res, 0) == 0.25);
  CHECK(transit_group_velocity(res, 1) == doctest::Approx(5.0));
  res.diagnostics[0].output_energy = 0.0;
  CHECK(std::isnan(transit_group_velocity(res, 0)));
}

TEST_CASE("empty medium transmits everything") {
  auto cfg = rydtest::small_config(0.0, 0.0);
  cfg.medium.coupling_G = 0.0;
  const auto res = run(cfg);
  CHECK(transmission(res, 0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("opaque two-level medium") {
  auto cfg = rydtest::small_config(0.0, 0.0);
  cfg.control.omega_c0 = 0.0;
  const double G = cfg.medium.coupling_G;
  const double optical_depth = G * G * cfg.medium.length_L / (kSpeedOfLight * kGamma);
  CHECK(std::exp(-2.0 * optical_depth) < 1e-2);
  cfg.medium.coupling_G = 2.0 * G;
  const auto res = run(cfg);
  CHECK(transmission(res, 0) < 1e-3);
}

TEST_CASE("narrowband pulse under transparency") {
  auto doc = rydtest::small_doc(0.0, 0.0);
  for (auto& p : doc["pulses"]) {
    p["t_peak"] = 13.0;
    p["tau_p"] = 4.0;
  }
  doc["grid"]["t_end"] = 26.0;
  doc["grid"]["dz"] = 0.1;
  doc["grid"]["downsample_t"] = 20;
  const auto cfg = validate_config(doc);
  const auto res = run(cfg);
  CHECK(transmission(res, 0) > 0.9);
  SusceptibilityParams sp{0.0, kOmegaC, kGamma, cfg.medium.gamma_r, 0.0};
  const double v_expected = group_velocity_analytic(sp, cfg.medium.coupling_G);
  CHECK(rydtest::rel_diff(transit_group_velocity(res, 0), v_expected) < 0.1);
  CHECK(potential_peak(res, 0) == 0.0);
}

TEST_CASE("constant potential run reports its potential") {
  auto doc = rydtest::small_doc(5.0);
  doc["run"] = {{"variant", "constantv"}, {"v0", -0.02 * kGamma}};
  const auto res = run(validate_config(doc));
  CHECK(potential_peak(res, 0) == doctest::Approx(0.02 * kGamma));
}

TEST_CASE("g2 estimate") {
  SimulationResult res;
  res.config = rydtest::small_config();
  const std::size_t n = res.config.grid.n_z;
  res.final_state.pulses.assign(2, PulseFields(n));
  for (auto& pf : res.final_state.pulses) {
    std::fill(pf.e.begin(), pf.e.end(), cplx{0.3, 0.1});
    std::fill(pf.e0.begin(), pf.e0.end(), cplx{0.2, 0.0});
  }
  const std::vector<double> tau = {-0.5, -0.1, 0.0, 0.2, 0.6};
  const auto flat = g2_estimate(res, 10.0, tau);
  for (double v : flat.value) CHECK(v == doctest::Approx(flat.value.front()));

  for (auto& pf : res.final_state.pulses) std::fill(pf.e.begin(), pf.e.end(), cplx{});
  for (double v : g2_estimate(res, 10.0, tau).value) CHECK(v == 0.0);

  const auto sym = run(rydtest::small_config(5.0));
  const std::vector<double> taus = {0.05, 0.1, 0.2, 0.4};
  std::vector<double> both = taus;
  for (double t : taus) both.push_back(-t);
  const auto g2 = g2_estimate(sym, 10.0, both);
  double scale = 0.0;
  for (double v : g2.value) scale = std::max(scale, v);
  REQUIRE(scale > 0.0);
  for (std::size_t k = 0; k < taus.size(); ++k) {
    CHECK(std::abs(g2.value[k] - g2.value[k + taus.size()]) <= 1e-8 * scale);
  }
}

}  // TEST_SUITE

TEST_SUITE("analysis") {

TEST_CASE("peak trajectory of a free-streaming pulse moves at the reduced light speed") {
  auto doc = rydtest::small_doc(0.0, 0.0);
  doc["pulses"] = nlohmann::json::array({doc["pulses"][0]});
  doc["pulses"][0]["t_peak"] = 0.6;
  doc["pulses"][0]["tau_p"] = 0.1;
  doc["run"] = {{"variant", "full"}, {"backend", "mol"}, {"c_eff", 20.0}};
  doc["grid"]["dz"] = 0.02;
  doc["grid"]["dt"] = 5e-4;
  doc["grid"]["t_end"] = 1.2;
  doc["grid"]["downsample_t"] = 4;
  auto cfg = validate_config(doc);
  cfg.medium.coupling_G = 0.0;
  const auto tr = trajectory(run_mol_reference(cfg), "E", 0);
  std::vector<double> v;
  for (const auto& p : tr) {
    if (p.v_valid && p.z_peak > 2.0 && p.z_peak < 8.0) v.push_back(p.v_g);
  }
  REQUIRE(v.size() > 5);
  for (double x : v) CHECK(rydtest::rel_diff(x, 20.0) < 0.02);
}

TEST_CASE("peak trajectory of an EIT pulse follows the analytic group velocity") {
  auto doc = rydtest::small_doc(0.0, 0.0);
  doc["pulses"] = nlohmann::json::array({doc["pulses"][0]});
  doc["pulses"][0]["t_peak"] = 3.0;
  doc["pulses"][0]["tau_p"] = 1.0;
  doc["medium"]["length_L"] = 100.0;
  doc["grid"]["dz"] = 0.1;
  doc["grid"]["dt"] = 0.002;
  doc["grid"]["t_end"] = 14.0;
  doc["grid"]["downsample_z"] = 2;
  doc["grid"]["downsample_t"] = 25;
  const auto cfg = validate_config(doc);
  const auto tr = trajectory(run(cfg), "E", 0);
  std::vector<double> v;
  for (const auto& p : tr) {
    if (p.v_valid && p.z_peak > 20.0 && p.z_peak < 80.0) v.push_back(p.v_g);
  }
  REQUIRE(v.size() > 5);
  std::sort(v.begin(), v.end());
  SusceptibilityParams sp{0.0, kOmegaC, kGamma, cfg.medium.gamma_r, 0.0};
  const double expected = group_velocity_analytic(sp, cfg.medium.coupling_G);
  CHECK(rydtest::rel_diff(v[v.size() / 2], expected) < 0.1);
}

}  // TEST_SUITE
