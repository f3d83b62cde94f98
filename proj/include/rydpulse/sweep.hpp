#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace rydpulse {

/// One swept configuration key, e.g. "run.v0=-0.5:0.5:11". Keys address a
/// section field ("medium.separation_a"), one pulse ("pulses.1.delta_p",
/// zero-based) or every pulse at once ("pulses.delta_p").
struct SweepAxis {
  std::string key;
  double lo = 0.0, hi = 0.0;
  std::size_t n = 0;

  std::vector<double> values() const;
};

SweepAxis parse_vary(std::string_view spec);

/// Writes value at key into a configuration document.
void apply_override(nlohmann::json& doc, const std::string& key, double value);

struct SweepRow {
  std::size_t index = 0;
  std::vector<double> values;  // one per axis
  bool ok = false;
  std::string error;
  double transmission = 0.0;        // pulse 1
  double v_g_measured = 0.0;        // pulse 1, from flux centroids
  double potential_peak_gamma = 0.0;
};

struct SweepSummary {
  std::vector<std::string> keys;
  std::vector<SweepRow> rows;

  std::string csv() const;
  bool all_ok() const;
};

/// Runs the cartesian product of the axes over a worker pool. Rows come back
/// in sweep-index order whatever the number of jobs. With out_dir set, each
/// run's outputs go to out_dir/run_NNNN and the summary to out_dir/summary.csv.
SweepSummary run_sweep(const nlohmann::json& base, const std::vector<SweepAxis>& axes, std::size_t jobs,
                       const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace rydpulse
