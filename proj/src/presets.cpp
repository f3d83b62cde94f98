#include "rydpulse/presets.hpp"

#include <functional>
#include <map>

#include "rydpulse/errors.hpp"

namespace rydpulse {

using nlohmann::json;

const double kDefaultCouplingG = 5.2e4;

namespace {

const double kGamma = mhz_to_angular(6.1);
const double kGammaR = mhz_to_angular(1.8e-3);
const double kProbe = mhz_to_angular(0.01);
// -2.3e5 read as MHz um^6; see README "Interaction strength".
const double kC6 = -kTwoPi * 2.3e5;

json medium(double length, double a, const char* geometry) {
  return {{"gamma", kGamma},
          {"gamma_r", kGammaR},
          {"coupling_G", kDefaultCouplingG},
          {"c6", kC6},
          {"length_L", length},
          {"separation_a", a},
          {"diameter_d", 2.0},
          {"density_N", 2e13 * 1e-12},
          {"geometry", geometry}};
}

json pulse(double t_peak, double tau_p, double delta_p, const char* side) {
  return {{"omega_p_max", kProbe},
          {"t_peak", t_peak},
          {"tau_p", tau_p},
          {"delta_p", delta_p},
          {"delta_two", 0.0},
          {"entry_side", side}};
}

json switch_off(double omega_mhz, double t_off, double tau_c) {
  return {{"kind", "tanh_switch"}, {"omega_c0", mhz_to_angular(omega_mhz)}, {"t_off", t_off}, {"tau_c", tau_c}};
}

json constant_control(double omega_mhz) {
  return {{"kind", "constant"}, {"omega_c0", mhz_to_angular(omega_mhz)}};
}

json grid(double dz, double dt, double t_end, std::size_t ds_z, std::size_t ds_t) {
  return {{"dz", dz}, {"dt", dt}, {"t_end", t_end}, {"downsample_z", ds_z}, {"downsample_t", ds_t}};
}

json fig2(double delta_sign, const char* variant) {
  return {{"medium", medium(100.0, 6.0, "counter")},
          {"pulses", {pulse(10.0, 5.0, delta_sign * 5.0 * kGamma, "left"),
                      pulse(10.0, 5.0, delta_sign * 5.0 * kGamma, "right")}},
          {"control", switch_off(1.5, 80.0, 1.0)},
          {"grid", grid(0.02, 0.001, 100.0, 10, 100)},
          {"run", {{"variant", variant}}}};
}

json fig3(double delta_sign) {
  return {{"medium", medium(100.0, 6.0, "counter")},
          {"pulses", {pulse(40.0, 20.0, delta_sign * 10.0 * kGamma, "left")}},
          {"control", constant_control(1.5)},
          {"grid", grid(0.02, 0.001, 160.0, 10, 100)},
          {"run", {{"variant", "constantv"}, {"v0", 0.0}}}};
}

json fig4(bool pair) {
  json pulses = {pulse(12.0, 7.0, 0.0, "left")};
  if (pair) pulses.push_back(pulse(12.0, 7.0, 0.0, "right"));
  return {{"medium", medium(100.0, 8.5, "counter")},
          {"pulses", pulses},
          {"control", switch_off(1.5, 80.0, 1.0)},
          {"grid", grid(0.02, 0.001, 60.0, 10, 100)},
          {"run", {{"variant", "full"}, {"extended_output", true}}}};
}

json fig5_storage() {
  return {{"medium", medium(300.0, 6.0, "counter")},
          {"pulses", {pulse(12.0, 7.0, 0.0, "left"), pulse(12.0, 7.0, 0.0, "right")}},
          {"control", switch_off(2.0, 40.0, 10.0)},
          {"grid", grid(0.02, 0.001, 80.0, 10, 100)},
          {"run", {{"variant", "full"}}}};
}

json fig5_copropagate() {
  return {{"medium", medium(300.0, 10.0, "co")},
          {"pulses", {pulse(30.0, 18.0, 0.0, "left"), pulse(30.0, 18.0, 0.0, "left")}},
          {"control", switch_off(2.0, 80.0, 10.0)},
          {"grid", grid(0.02, 0.001, 120.0, 10, 100)},
          {"run", {{"variant", "full"}}}};
}

json fig_s3(double delta_sign) {
  return {{"medium", medium(100.0, 6.0, "counter")},
          {"pulses", {pulse(20.0, 10.0, delta_sign * 10.0 * kGamma, "left"),
                      pulse(20.0, 10.0, delta_sign * 10.0 * kGamma, "right")}},
          {"control", switch_off(1.5, 80.0, 1.0)},
          {"grid", grid(0.02, 0.001, 100.0, 10, 100)},
          {"run", {{"variant", "adiabatic"}}}};
}

json mol_toy() {
  return {{"medium", medium(20.0, 6.0, "counter")},
          {"pulses", {pulse(6.0, 2.0, 0.0, "left")}},
          {"control", constant_control(1.5)},
          {"grid", grid(0.05, 1e-4, 14.0, 1, 100)},
          {"run", {{"variant", "full"}, {"backend", "mol"}, {"c_eff", 200.0}}}};
}

const std::map<std::string, std::function<json()>, std::less<>>& registry() {
  static const std::map<std::string, std::function<json()>, std::less<>> table = {
      {"fig2_red", [] { return fig2(+1.0, "full"); }},
      {"fig2_blue", [] { return fig2(-1.0, "full"); }},
      {"fig3_series_red", [] { return fig3(+1.0); }},
      {"fig3_series_blue", [] { return fig3(-1.0); }},
      {"fig4_single", [] { return fig4(false); }},
      {"fig4_pair", [] { return fig4(true); }},
      {"fig5_storage", fig5_storage},
      {"fig5_copropagate", fig5_copropagate},
      {"figS2_meanfield_red", [] { return fig2(+1.0, "meanfield"); }},
      {"figS2_meanfield_blue", [] { return fig2(-1.0, "meanfield"); }},
      {"figS3_adiabatic_red", [] { return fig_s3(+1.0); }},
      {"figS3_adiabatic_blue", [] { return fig_s3(-1.0); }},
      {"mol_toy", mol_toy},
  };
  return table;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& [name, _] : registry()) out.push_back(name);
  return out;
}

json preset_document(std::string_view name) {
  const auto& table = registry();
  const auto it = table.find(name);
  if (it == table.end()) throw ConfigError("unknown preset '" + std::string(name) + "'");
  return it->second();
}

RunConfig preset(std::string_view name) { return validate_config(preset_document(name)); }

}  // namespace rydpulse
