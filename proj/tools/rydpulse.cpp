// rydpulse: command-line front end of the solver library.
//
// Exit codes: 0 success, 1 invalid configuration or arguments, 2 numerical
// failure (divergence, or compare distance above tolerance), 3 file errors.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rydpulse/analysis.hpp"
#include "rydpulse/core_model.hpp"
#include "rydpulse/errors.hpp"
#include "rydpulse/io.hpp"
#include "rydpulse/presets.hpp"
#include "rydpulse/propagation.hpp"
#include "rydpulse/sweep.hpp"

namespace {

using namespace rydpulse;
using nlohmann::json;

json load_document(const std::string& config, const std::string& preset_name) {
  if (!config.empty() && !preset_name.empty()) throw ConfigError("give either --config or --preset, not both");
  if (!preset_name.empty()) return preset_document(preset_name);
  if (config.empty()) throw ConfigError("--config or --preset is required");
  return parse_config(config);
}

int cmd_run(const std::string& config, const std::string& preset_name, const std::string& out,
            const std::string& backend, const std::string& variant, const std::optional<double>& blockade_radius) {
  json doc = load_document(config, preset_name);
  if (!backend.empty()) doc["run"]["backend"] = backend;
  if (!variant.empty()) doc["run"]["variant"] = variant;
  if (blockade_radius) doc["run"]["blockade_radius"] = *blockade_radius;
  const auto cfg = validate_config(doc);

  SimulatorHooks hooks;
  hooks.throw_on_divergence = false;
  const auto result = run(cfg, hooks);
  write_result(result, out);
  for (std::size_t l = 0; l < result.diagnostics.size(); ++l) {
    std::printf("pulse %zu: transmission %.6g, potential peak %.4g gamma\n", l + 1, transmission(result, l),
                potential_peak(result, l) / cfg.medium.gamma);
  }
  std::printf("%zu steps in %.2f s -> %s\n", result.steps_taken, result.wall_seconds, out.c_str());
  if (result.status != TerminationStatus::completed) {
    std::fprintf(stderr, "error: %s\n", result.message.c_str());
    return 2;
  }
  return 0;
}

int cmd_chi(const SusceptibilityParams& params, const std::string& sweep, const std::string& out) {
  const auto axis = parse_vary("delta=" + sweep);
  const auto curve = susceptibility_curve(params, axis.lo, axis.hi, axis.n);
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + out + " for writing");
  f << "delta_rad_per_us,re_gamma_chi,im_gamma_chi\n";
  char line[128];
  for (std::size_t i = 0; i < curve.delta.size(); ++i) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", curve.delta[i], curve.chi[i].real(), curve.chi[i].imag());
    f << line;
  }
  if (!f) throw IoError("write failed for " + out);
  return 0;
}

int cmd_sweep(const std::string& config, const std::string& preset_name, const std::vector<std::string>& vary,
              const std::string& out, std::size_t jobs) {
  const json doc = load_document(config, preset_name);
  std::vector<SweepAxis> axes;
  for (const auto& v : vary) axes.push_back(parse_vary(v));
  const auto summary = run_sweep(doc, axes, jobs, std::filesystem::path(out));
  std::fputs(summary.csv().c_str(), stdout);
  return summary.all_ok() ? 0 : 2;
}

int cmd_compare(const std::string& a, const std::string& b, double tol) {
  const auto report = compare_results(a, b);
  for (const auto& [name, d] : report.per_field) std::printf("%s %.6e\n", name.c_str(), d);
  std::printf("distance %.6e\n", report.distance);
  return report.distance <= tol ? 0 : 2;
}

int cmd_presets(const std::string& action, const std::string& name, const std::string& out) {
  if (action == "list") {
    for (const auto& n : preset_names()) std::puts(n.c_str());
    return 0;
  }
  if (action != "emit") throw ConfigError("presets: expected 'list' or 'emit NAME'");
  if (name.empty()) throw ConfigError("presets emit needs a preset name");
  const auto text = preset_document(name).dump(2) + "\n";
  if (out.empty()) {
    std::fputs(text.c_str(), stdout);
    return 0;
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f || !(f << text)) throw IoError("cannot write " + out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interacting Rydberg-EIT photon pulse simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(rydpulse::kToolVersion));

  std::string config, preset_name, out, backend, variant;
  std::optional<double> blockade_radius;
  auto* run_cmd = app.add_subcommand("run", "Simulate one configuration");
  run_cmd->add_option("--config", config, "Configuration file (JSON)");
  run_cmd->add_option("--preset", preset_name, "Shipped scenario name instead of a file");
  run_cmd->add_option("--out", out, "Output directory")->required();
  run_cmd->add_option("--backend", backend, "quasistatic or mol");
  run_cmd->add_option("--variant", variant, "full, constantv, meanfield, adiabatic or blockade");
  run_cmd->add_option("--blockade-radius", blockade_radius, "Blockade radius in um");

  rydpulse::SusceptibilityParams chi_params;
  std::string chi_sweep, chi_out;
  auto* chi_cmd = app.add_subcommand("chi", "Tabulate the steady-state susceptibility");
  chi_cmd->add_option("--deltap", chi_params.delta_p, "One-photon detuning, rad/us")->required();
  chi_cmd->add_option("--omegac", chi_params.omega_c, "Control Rabi frequency, rad/us")->required();
  chi_cmd->add_option("--gamma", chi_params.gamma, "Intermediate decay, rad/us")->required();
  chi_cmd->add_option("--gammar", chi_params.gamma_r, "Rydberg decay, rad/us");
  chi_cmd->add_option("--v0", chi_params.v0, "Constant potential, rad/us");
  chi_cmd->add_option("--sweep", chi_sweep, "Two-photon detuning axis lo:hi:n")->required();
  chi_cmd->add_option("--out", chi_out, "Output CSV")->required();

  std::vector<std::string> vary;
  std::size_t jobs = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "Parameter sweep over a worker pool");
  sweep_cmd->add_option("--config", config, "Base configuration file");
  sweep_cmd->add_option("--preset", preset_name, "Shipped scenario as the base");
  sweep_cmd->add_option("--vary", vary, "key=lo:hi:n, repeat for a cartesian product")->required();
  sweep_cmd->add_option("--out", out, "Output directory")->required();
  sweep_cmd->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);

  std::string dir_a, dir_b;
  double tol = 0.0;
  auto* compare_cmd = app.add_subcommand("compare", "Relative L2 distance between two result directories");
  compare_cmd->add_option("--a", dir_a)->required();
  compare_cmd->add_option("--b", dir_b)->required();
  compare_cmd->add_option("--tol", tol, "Largest accepted distance")->required();

  std::string action, preset_arg, emit_out;
  auto* presets_cmd = app.add_subcommand("presets", "List or emit shipped scenarios");
  presets_cmd->add_option("action", action, "list or emit")->required();
  presets_cmd->add_option("name", preset_arg, "Preset to emit");
  presets_cmd->add_option("--out", emit_out, "Write the document here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run_cmd) return cmd_run(config, preset_name, out, backend, variant, blockade_radius);
    if (*chi_cmd) return cmd_chi(chi_params, chi_sweep, chi_out);
    if (*sweep_cmd) return cmd_sweep(config, preset_name, vary, out, jobs);
    if (*compare_cmd) return cmd_compare(dir_a, dir_b, tol);
    if (*presets_cmd) return cmd_presets(action, preset_arg, emit_out);
  } catch (const rydpulse::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const rydpulse::NumericalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const rydpulse::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 1;
}
