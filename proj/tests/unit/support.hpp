#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "rydpulse/core_model.hpp"
#include "rydpulse/units.hpp"

namespace rydtest {

inline constexpr double kGamma = rydpulse::kTwoPi * 6.1;
inline constexpr double kOmegaC = rydpulse::kTwoPi * 1.5;

// Short counter-propagating EIT instance: 10 um medium, v_g ~ 10 um/us.
inline nlohmann::json small_doc(double delta_p_gamma = 0.0, double c6 = -rydpulse::kTwoPi * 2.3e5) {
  using nlohmann::json;
  json pulse = {{"omega_p_max", rydpulse::kTwoPi * 0.01},
                {"t_peak", 1.5},
                {"tau_p", 0.5},
                {"delta_p", delta_p_gamma * kGamma},
                {"delta_two", 0.0},
                {"entry_side", "left"}};
  json partner = pulse;
  partner["entry_side"] = "right";
  return json{{"medium",
               {{"gamma", kGamma},
                {"gamma_r", rydpulse::kTwoPi * 1.8e-3},
                {"coupling_G", 5.2e4},
                {"c6", c6},
                {"length_L", 10.0},
                {"separation_a", 6.0},
                {"diameter_d", 2.0},
                {"geometry", "counter"}}},
              {"pulses", json::array({pulse, partner})},
              {"control", {{"kind", "constant"}, {"omega_c0", kOmegaC}}},
              {"grid", {{"dz", 0.05}, {"dt", 0.001}, {"t_end", 4.0}, {"downsample_z", 1}, {"downsample_t", 10}}},
              {"run", {{"variant", "full"}}}};
}

inline rydpulse::RunConfig small_config(double delta_p_gamma = 0.0, double c6 = -rydpulse::kTwoPi * 2.3e5) {
  return rydpulse::validate_config(small_doc(delta_p_gamma, c6));
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rydpulse_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rydtest
