#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rydpulse/propagation.hpp"

namespace rydpulse {

inline constexpr std::string_view kToolVersion = "0.4.0";
inline constexpr std::uint16_t kFieldFileVersion = 1;

/// Parses configuration text. Syntax errors carry line and column; repeated
/// keys within one object are rejected.
nlohmann::json parse_config_text(std::string_view text, std::string_view source = "<input>");
nlohmann::json parse_config(const std::filesystem::path& path);

/// parse_config followed by validate_config.
RunConfig load_config(const std::filesystem::path& path);

nlohmann::json make_manifest(const SimulationResult& result);

/// Writes manifest.json, one RYDF matrix per recorded field and pulse
/// (E_1.rydf, S_1.rydf, ...), and the scalar series as CSV. A run that took
/// no steps produces the manifest only. On failure every file written so
/// far is removed and IoError is thrown.
void write_result(const SimulationResult& result, const std::filesystem::path& out_dir);

struct FieldFile {
  std::vector<double> t_axis;
  std::vector<double> z_axis;
  std::vector<double> data;  // row-major, t_axis.size() x z_axis.size()
};

void write_field_file(const std::filesystem::path& path, const std::vector<double>& t_axis,
                      const std::vector<double>& z_axis, const std::vector<double>& data);
FieldFile read_field_file(const std::filesystem::path& path);

struct CompareReport {
  std::vector<std::pair<std::string, double>> per_field;  // file name, relative L2 distance
  double distance = 0.0;                                  // largest per-field distance
};

/// Relative L2 distance ||a - b|| / ||a|| between same-named field files of
/// two output directories. Missing counterparts or shape mismatches throw.
CompareReport compare_results(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace rydpulse
