#include "rydpulse/sweep.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "rydpulse/analysis.hpp"
#include "rydpulse/core_model.hpp"
#include "rydpulse/errors.hpp"
#include "rydpulse/io.hpp"
#include "rydpulse/propagation.hpp"

namespace rydpulse {

using nlohmann::json;

namespace {

double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad number '" + std::string(s) + "' in " + std::string(what));
  return v;
}

std::string number_text(double v) {
  char tmp[32];
  std::snprintf(tmp, sizeof tmp, "%.17g", v);
  return tmp;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::vector<double> SweepAxis::values() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return out;
}

SweepAxis parse_vary(std::string_view spec) {
  const auto eq = spec.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError("--vary expects key=lo:hi:n");
  SweepAxis axis;
  axis.key = std::string(spec.substr(0, eq));
  const auto parts = split(spec.substr(eq + 1), ':');
  if (parts.size() != 3) throw ConfigError("--vary expects key=lo:hi:n");
  axis.lo = parse_double(parts[0], "--vary");
  axis.hi = parse_double(parts[1], "--vary");
  const double n = parse_double(parts[2], "--vary");
  if (n < 0.0 || n != std::floor(n)) throw ConfigError("--vary count must be a non-negative integer");
  axis.n = static_cast<std::size_t>(n);
  return axis;
}

void apply_override(json& doc, const std::string& key, double value) {
  const auto path = split(key, '.');
  if (path.size() == 2 && path[0] == "pulses") {
    if (!doc.contains("pulses") || !doc["pulses"].is_array()) throw ConfigError("no pulses to vary");
    for (auto& p : doc["pulses"]) p[path[1]] = value;
    return;
  }
  if (path.size() == 3 && path[0] == "pulses") {
    const auto idx = static_cast<std::size_t>(parse_double(path[1], key));
    if (!doc.contains("pulses") || idx >= doc["pulses"].size()) throw ConfigError("no pulse " + path[1] + " to vary");
    doc["pulses"][idx][path[2]] = value;
    return;
  }
  if (path.size() != 2) throw ConfigError("cannot vary '" + key + "'");
  doc[path[0]][path[1]] = value;
}

std::string SweepSummary::csv() const {
  std::string out = "index";
  for (const auto& k : keys) out += "," + k;
  out += ",status,transmission,v_g_measured,potential_peak_gamma\n";
  for (const auto& r : rows) {
    out += std::to_string(r.index);
    for (double v : r.values) out += "," + number_text(v);
    if (r.ok) {
      out += ",ok," + number_text(r.transmission) + "," + number_text(r.v_g_measured) + "," +
             number_text(r.potential_peak_gamma) + "\n";
    } else {
      std::string err = r.error;
      for (auto& c : err) {
        if (c == ',' || c == '\n') c = ' ';
      }
      out += ",failed: " + err + ",,,\n";
    }
  }
  return out;
}

bool SweepSummary::all_ok() const {
  for (const auto& r : rows) {
    if (!r.ok) return false;
  }
  return true;
}

SweepSummary run_sweep(const json& base, const std::vector<SweepAxis>& axes, std::size_t jobs,
                       const std::optional<std::filesystem::path>& out_dir) {
  SweepSummary summary;
  std::vector<std::vector<double>> grid_values;
  std::size_t total = axes.empty() ? 0 : 1;
  for (const auto& a : axes) {
    summary.keys.push_back(a.key);
    grid_values.push_back(a.values());
    total *= a.n;
  }
  summary.rows.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    auto& row = summary.rows[i];
    row.index = i;
    std::size_t rem = i;
    row.values.resize(axes.size());
    for (std::size_t k = axes.size(); k-- > 0;) {
      row.values[k] = grid_values[k][rem % axes[k].n];
      rem /= axes[k].n;
    }
  }
  if (out_dir) std::filesystem::create_directories(*out_dir);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      auto& row = summary.rows[i];
      try {
        json doc = base;
        for (std::size_t k = 0; k < axes.size(); ++k) apply_override(doc, axes[k].key, row.values[k]);
        const auto cfg = validate_config(doc);
        const auto result = run(cfg);
        row.transmission = transmission(result, 0);
        row.v_g_measured = transit_group_velocity(result, 0);
        double peak = 0.0;
        for (std::size_t l = 0; l < result.diagnostics.size(); ++l) peak = std::max(peak, potential_peak(result, l));
        row.potential_peak_gamma = peak / cfg.medium.gamma;
        if (out_dir) {
          std::ostringstream name;
          name << "run_" << std::setw(4) << std::setfill('0') << i;
          write_result(result, *out_dir / name.str());
        }
        row.ok = true;
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(jobs, total));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  if (out_dir) {
    std::ofstream out(*out_dir / "summary.csv", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (*out_dir / "summary.csv").string());
    out << summary.csv();
    if (!out) throw IoError("write failed for summary.csv");
  }
  return summary;
}

}  // namespace rydpulse
