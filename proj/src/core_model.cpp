#include "rydpulse/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "rydpulse/errors.hpp"

namespace rydpulse {

using nlohmann::json;

namespace {

const std::set<std::string> kTopKeys = {"medium", "pulses", "control", "grid", "run"};
const std::set<std::string> kMediumKeys = {
    "gamma", "gamma_r", "coupling_G", "c6", "c6_ghz_um6", "c6_is_angular", "length_L",
    "separation_a", "diameter_d", "density_N", "geometry"};
const std::set<std::string> kPulseKeys = {"omega_p_max", "t_peak",    "tau_p",
                                          "delta_p",     "delta_two", "entry_side"};
const std::set<std::string> kControlKeys = {"kind", "omega_c0", "t_off", "tau_c"};
const std::set<std::string> kGridKeys = {"dz", "dt", "t_end", "downsample_z", "downsample_t"};
const std::set<std::string> kRunKeys = {
    "variant",        "backend",       "norm_mode",          "convolution",
    "potential_stride", "v0",          "blockade_radius",    "blockade_v",
    "c_eff",          "transverse_average", "record_complex", "extended_output"};

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError("section '" + where + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "'");
  }
}

const json& section(const json& raw, const std::string& name) {
  if (!raw.contains(name)) throw ConfigError("missing field '" + name + "'");
  return raw.at(name);
}

double number(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("missing field '" + where + "." + key + "'");
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError("field '" + where + "." + key + "' must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError("field '" + where + "." + key + "' is not finite");
  return x;
}

double number_or(const json& obj, const std::string& key, const std::string& where, double fallback) {
  return obj.contains(key) ? number(obj, key, where) : fallback;
}

std::optional<double> optional_number(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return number(obj, key, where);
}

std::string text(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("missing field '" + where + "." + key + "'");
  const auto& v = obj.at(key);
  if (!v.is_string()) throw ConfigError("field '" + where + "." + key + "' must be a string");
  return v.get<std::string>();
}

bool flag_or(const json& obj, const std::string& key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_boolean()) throw ConfigError("field '" + key + "' must be a boolean");
  return obj.at(key).get<bool>();
}

std::size_t count_or(const json& obj, const std::string& key, const std::string& where, std::size_t fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 1) {
    throw ConfigError("field '" + where + "." + key + "' must be an integer >= 1");
  }
  return static_cast<std::size_t>(v.get<long long>());
}

void require_positive(double x, const std::string& name) {
  if (!(x > 0.0)) throw ConfigError("non-positive rate '" + name + "'");
}

void require_non_negative(double x, const std::string& name) {
  if (x < 0.0) throw ConfigError("negative value for '" + name + "'");
}

MediumSpec parse_medium(const json& m) {
  reject_unknown(m, kMediumKeys, "medium");
  MediumSpec out;
  out.gamma = number(m, "gamma", "medium");
  out.gamma_r = number(m, "gamma_r", "medium");
  out.coupling_G = number(m, "coupling_G", "medium");
  if (m.contains("c6") && m.contains("c6_ghz_um6")) {
    throw ConfigError("give either 'c6' or 'c6_ghz_um6', not both");
  }
  if (m.contains("c6_ghz_um6")) {
    out.c6 = c6_from_ghz_um6(number(m, "c6_ghz_um6", "medium"), flag_or(m, "c6_is_angular", false));
  } else {
    out.c6 = number(m, "c6", "medium");
  }
  out.length_L = number(m, "length_L", "medium");
  out.separation_a = number(m, "separation_a", "medium");
  out.diameter_d = number(m, "diameter_d", "medium");
  out.density_N = number_or(m, "density_N", "medium", 0.0);
  const auto geo = text(m, "geometry", "medium");
  if (geo == "counter") {
    out.geometry = Geometry::counter;
  } else if (geo == "co") {
    out.geometry = Geometry::co;
  } else {
    throw ConfigError("unknown geometry '" + geo + "'");
  }

  require_positive(out.gamma, "gamma");
  require_non_negative(out.gamma_r, "gamma_r");
  require_positive(out.coupling_G, "coupling_G");
  if (!(out.length_L > 0.0)) throw ConfigError("non-positive length 'length_L'");
  require_non_negative(out.separation_a, "separation_a");
  if (!(out.diameter_d > 0.0)) throw ConfigError("non-positive length 'diameter_d'");
  require_non_negative(out.density_N, "density_N");
  return out;
}

PulseSpec parse_pulse(const json& p, const std::string& where) {
  reject_unknown(p, kPulseKeys, where);
  PulseSpec out;
  out.omega_p_max = number(p, "omega_p_max", where);
  out.t_peak = number(p, "t_peak", where);
  out.tau_p = number(p, "tau_p", where);
  out.delta_p = number(p, "delta_p", where);
  out.delta_two = number_or(p, "delta_two", where, 0.0);
  const auto side = text(p, "entry_side", where);
  if (side == "left") {
    out.entry_side = EntrySide::left;
  } else if (side == "right") {
    out.entry_side = EntrySide::right;
  } else {
    throw ConfigError("unknown entry_side '" + side + "'");
  }
  if (!(out.tau_p > 0.0)) throw ConfigError("non-positive duration 'tau_p'");
  if (!(std::abs(out.omega_p_max) > 0.0)) throw ConfigError("zero pulse amplitude 'omega_p_max'");
  return out;
}

ControlSchedule parse_control(const json& c) {
  reject_unknown(c, kControlKeys, "control");
  ControlSchedule out;
  const auto kind = text(c, "kind", "control");
  if (kind == "constant") {
    out.kind = ControlKind::constant;
  } else if (kind == "tanh_switch") {
    out.kind = ControlKind::tanh_switch;
  } else {
    throw ConfigError("unknown control kind '" + kind + "'");
  }
  out.omega_c0 = number(c, "omega_c0", "control");
  require_non_negative(out.omega_c0, "omega_c0");
  if (out.kind == ControlKind::tanh_switch) {
    out.t_off = number(c, "t_off", "control");
    out.tau_c = number(c, "tau_c", "control");
    if (!(out.tau_c > 0.0)) throw ConfigError("non-positive duration 'tau_c'");
  } else {
    out.t_off = number_or(c, "t_off", "control", 0.0);
    out.tau_c = number_or(c, "tau_c", "control", 1.0);
  }
  return out;
}

Grid parse_grid(const json& g, double length) {
  reject_unknown(g, kGridKeys, "grid");
  Grid out;
  const double dz = number(g, "dz", "grid");
  out.dt = number(g, "dt", "grid");
  out.t_end = number(g, "t_end", "grid");
  if (!(dz > 0.0)) throw ConfigError("non-positive grid spacing 'dz'");
  if (!(out.dt > 0.0)) throw ConfigError("non-positive time step 'dt'");
  if (out.t_end < 0.0) throw ConfigError("negative 't_end'");
  out.downsample_z = count_or(g, "downsample_z", "grid", 1);
  out.downsample_t = count_or(g, "downsample_t", "grid", 1);

  const double cells = std::round(length / dz);
  if (cells < 2.0) throw ConfigError("grid too coarse: need at least 3 nodes across length_L");
  out.n_z = static_cast<std::size_t>(cells) + 1;
  out.dz = length / cells;
  out.n_t = static_cast<std::size_t>(std::llround(out.t_end / out.dt));
  return out;
}

RunOptions parse_run(const json& raw) {
  RunOptions out;
  if (!raw.contains("run")) return out;
  const auto& r = raw.at("run");
  reject_unknown(r, kRunKeys, "run");
  if (r.contains("variant")) out.variant = parse_variant(text(r, "variant", "run"));
  if (r.contains("backend")) out.backend = parse_backend(text(r, "backend", "run"));
  if (r.contains("norm_mode")) {
    const auto s = text(r, "norm_mode", "run");
    if (s == "single_photon") {
      out.norm_mode = NormMode::single_photon;
    } else if (s == "raw") {
      out.norm_mode = NormMode::raw;
    } else {
      throw ConfigError("unknown norm_mode '" + s + "'");
    }
  }
  if (r.contains("convolution")) {
    const auto s = text(r, "convolution", "run");
    if (s == "direct") {
      out.convolution = ConvolutionMethod::direct;
    } else if (s == "fft") {
      out.convolution = ConvolutionMethod::fft;
    } else {
      throw ConfigError("unknown convolution method '" + s + "'");
    }
  }
  out.potential_stride = count_or(r, "potential_stride", "run", 1);
  out.v0 = number_or(r, "v0", "run", 0.0);
  out.blockade_radius = optional_number(r, "blockade_radius", "run");
  out.blockade_v = optional_number(r, "blockade_v", "run");
  out.c_eff = optional_number(r, "c_eff", "run");
  out.transverse_average = flag_or(r, "transverse_average", false);
  out.record_complex = flag_or(r, "record_complex", false);
  out.extended_output = flag_or(r, "extended_output", false);
  return out;
}

}  // namespace

double PulseSpec::photon_norm() const {
  // integral of exp(-2 (t - t_p)^2 / tau_p^2) over the real line
  return kSpeedOfLight * omega_p_max * omega_p_max * tau_p * std::sqrt(kPi / 2.0);
}

double ControlSchedule::peak() const {
  if (kind == ControlKind::constant) return omega_c0;
  return omega_c0 * std::max(std::tanh(t_off / tau_c), 0.0);
}

double ControlSchedule::integral_of_square(double t) const {
  if (t <= 0.0) return 0.0;
  const double w2 = omega_c0 * omega_c0;
  if (kind == ControlKind::constant) return w2 * t;
  if (t_off <= 0.0) return 0.0;
  const double upper = t_off / tau_c;
  const double lower = (t_off - std::min(t, t_off)) / tau_c;
  return w2 * tau_c * ((upper - std::tanh(upper)) - (lower - std::tanh(lower)));
}

double control_at(const ControlSchedule& schedule, double t) {
  if (schedule.kind == ControlKind::constant) return schedule.omega_c0;
  return schedule.omega_c0 * std::max(std::tanh((schedule.t_off - t) / schedule.tau_c), 0.0);
}

cplx boundary_pulse(const PulseSpec& spec, double t) {
  const double x = (t - spec.t_peak) / spec.tau_p;
  return {spec.omega_p_max * std::exp(-x * x), 0.0};
}

RunConfig validate_config(const json& raw) {
  if (!raw.is_object()) throw ConfigError("configuration must be an object");
  reject_unknown(raw, kTopKeys, "");

  RunConfig cfg;
  cfg.medium = parse_medium(section(raw, "medium"));

  const auto& pulses = section(raw, "pulses");
  if (!pulses.is_array() || pulses.empty() || pulses.size() > 2) {
    throw ConfigError("'pulses' must be an array of one or two pulse records");
  }
  for (std::size_t i = 0; i < pulses.size(); ++i) {
    cfg.pulses.push_back(parse_pulse(pulses[i], "pulses." + std::to_string(i)));
  }
  cfg.control = parse_control(section(raw, "control"));
  cfg.grid = parse_grid(section(raw, "grid"), cfg.medium.length_L);
  cfg.run = parse_run(raw);

  if (cfg.pulses.size() == 2) {
    const bool same_side = cfg.pulses[0].entry_side == cfg.pulses[1].entry_side;
    if (cfg.medium.geometry == Geometry::counter && same_side) {
      throw ConfigError("counter geometry requires the pulses to enter from opposite sides");
    }
    if (cfg.medium.geometry == Geometry::co && !same_side) {
      throw ConfigError("co geometry requires the pulses to enter from the same side");
    }
  }

  const double peak = cfg.control.peak();
  const double g2 = cfg.medium.coupling_G * cfg.medium.coupling_G;
  cfg.derived.slow_light_ratio = peak > 0.0 ? g2 / (peak * peak) : std::numeric_limits<double>::infinity();
  cfg.derived.v_g_nominal = kSpeedOfLight * peak * peak / g2;

  const auto& run = cfg.run;
  if (run.backend == Backend::quasistatic && cfg.derived.slow_light_ratio < 100.0) {
    throw ConfigError("slow-light condition violated: G^2/Omega_c^2 = " +
                      std::to_string(cfg.derived.slow_light_ratio) + " < 100");
  }
  if (run.backend == Backend::mol) {
    if (!run.c_eff || !(*run.c_eff > 0.0)) throw ConfigError("mol backend requires a positive 'c_eff'");
    if (cfg.grid.dt > 0.5 * cfg.grid.dz / *run.c_eff) {
      throw ConfigError("CFL violation: dt must satisfy dt <= 0.5 dz / c_eff");
    }
    if (run.variant == ModelVariant::adiabatic) {
      throw ConfigError("adiabatic variant is only available with the quasistatic backend");
    }
  }
  if (run.variant == ModelVariant::blockade) {
    if (!run.blockade_radius) throw ConfigError("blockade variant requires 'blockade_radius'");
    if (!(*run.blockade_radius > 0.0)) throw ConfigError("non-positive 'blockade_radius'");
  }
  const bool needs_kernel = run.variant == ModelVariant::full || run.variant == ModelVariant::mean_field ||
                            run.variant == ModelVariant::adiabatic;
  if (needs_kernel && cfg.medium.c6 != 0.0 && cfg.pulses.size() == 2 &&
      !(cfg.medium.separation_a > 0.5 * cfg.medium.diameter_d)) {
    throw ConfigError("waveguide separation must exceed the waveguide radius for a finite kernel");
  }
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json out;
  const auto& m = cfg.medium;
  out["medium"] = {{"gamma", m.gamma},
                   {"gamma_r", m.gamma_r},
                   {"coupling_G", m.coupling_G},
                   {"c6", m.c6},
                   {"length_L", m.length_L},
                   {"separation_a", m.separation_a},
                   {"diameter_d", m.diameter_d},
                   {"density_N", m.density_N},
                   {"geometry", std::string(to_string(m.geometry))}};
  out["pulses"] = json::array();
  for (const auto& p : cfg.pulses) {
    out["pulses"].push_back({{"omega_p_max", p.omega_p_max},
                             {"t_peak", p.t_peak},
                             {"tau_p", p.tau_p},
                             {"delta_p", p.delta_p},
                             {"delta_two", p.delta_two},
                             {"entry_side", p.entry_side == EntrySide::left ? "left" : "right"}});
  }
  const auto& c = cfg.control;
  out["control"] = {{"kind", c.kind == ControlKind::constant ? "constant" : "tanh_switch"},
                    {"omega_c0", c.omega_c0},
                    {"t_off", c.t_off},
                    {"tau_c", c.tau_c}};
  const auto& g = cfg.grid;
  out["grid"] = {{"dz", g.dz},
                 {"dt", g.dt},
                 {"t_end", g.t_end},
                 {"downsample_z", g.downsample_z},
                 {"downsample_t", g.downsample_t}};
  const auto& r = cfg.run;
  json run = {{"variant", std::string(to_string(r.variant))},
              {"backend", std::string(to_string(r.backend))},
              {"norm_mode", std::string(to_string(r.norm_mode))},
              {"convolution", r.convolution == ConvolutionMethod::direct ? "direct" : "fft"},
              {"potential_stride", r.potential_stride},
              {"v0", r.v0},
              {"transverse_average", r.transverse_average},
              {"record_complex", r.record_complex},
              {"extended_output", r.extended_output}};
  if (r.blockade_radius) run["blockade_radius"] = *r.blockade_radius;
  if (r.blockade_v) run["blockade_v"] = *r.blockade_v;
  if (r.c_eff) run["c_eff"] = *r.c_eff;
  out["run"] = run;
  return out;
}

std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::full: return "full";
    case ModelVariant::constant_v: return "constantv";
    case ModelVariant::mean_field: return "meanfield";
    case ModelVariant::adiabatic: return "adiabatic";
    case ModelVariant::blockade: return "blockade";
  }
  return "full";
}

std::string_view to_string(Backend b) { return b == Backend::quasistatic ? "quasistatic" : "mol"; }

std::string_view to_string(NormMode m) { return m == NormMode::single_photon ? "single_photon" : "raw"; }

std::string_view to_string(Geometry g) { return g == Geometry::counter ? "counter" : "co"; }

ModelVariant parse_variant(std::string_view s) {
  if (s == "full") return ModelVariant::full;
  if (s == "constantv" || s == "constant_v") return ModelVariant::constant_v;
  if (s == "meanfield" || s == "mean_field") return ModelVariant::mean_field;
  if (s == "adiabatic") return ModelVariant::adiabatic;
  if (s == "blockade") return ModelVariant::blockade;
  throw ConfigError("unknown variant '" + std::string(s) + "'");
}

Backend parse_backend(std::string_view s) {
  if (s == "quasistatic") return Backend::quasistatic;
  if (s == "mol") return Backend::mol;
  throw ConfigError("unknown backend '" + std::string(s) + "'");
}

}  // namespace rydpulse
