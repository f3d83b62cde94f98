#include "rydpulse/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "rydpulse/analysis.hpp"
#include "rydpulse/errors.hpp"

namespace rydpulse {

using nlohmann::json;

namespace {

constexpr char kFieldMagic[4] = {'R', 'Y', 'D', 'F'};
constexpr char kComplexMagic[4] = {'R', 'Y', 'D', 'C'};

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

template <typename T>
void put(std::string& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
void put_array(std::string& buf, const std::vector<T>& values) {
  buf.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::string& what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError(what + ": truncated");
  return value;
}

std::string matrix_bytes(const char magic[4], const std::vector<double>& t_axis, const std::vector<double>& z_axis) {
  std::string buf(magic, 4);
  put<std::uint16_t>(buf, kFieldFileVersion);
  put<std::uint64_t>(buf, t_axis.size());
  put<std::uint64_t>(buf, z_axis.size());
  put_array(buf, t_axis);
  put_array(buf, z_axis);
  return buf;
}

std::string number_text(double v) {
  char tmp[32];
  std::snprintf(tmp, sizeof tmp, "%.17g", v);
  return tmp;
}

// Tracks files written into the output directory so a failure can remove
// them again.
class OutputWriter {
 public:
  explicit OutputWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& bytes) {
    const auto path = dir_ / name;
    written_.push_back(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
  }

  void rollback() noexcept {
    for (const auto& p : written_) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
    written_.clear();
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> written_;
};

std::string series_csv(const std::vector<double>& t, const std::vector<double>& v) {
  std::string out = "t_us,value\n";
  for (std::size_t i = 0; i < t.size() && i < v.size(); ++i) {
    out += number_text(t[i]);
    out += ',';
    out += number_text(v[i]);
    out += '\n';
  }
  return out;
}

double relative_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += a[i] * a[i];
  }
  if (num == 0.0) return 0.0;
  return den > 0.0 ? std::sqrt(num / den) : std::numeric_limits<double>::infinity();
}

}  // namespace

json parse_config_text(std::string_view text, std::string_view source) {
  // One set of seen keys per open object.
  std::vector<std::set<std::string>> seen;
  std::string duplicate;
  auto callback = [&](int /*depth*/, json::parse_event_t event, json& parsed) {
    switch (event) {
      case json::parse_event_t::object_start: seen.emplace_back(); break;
      case json::parse_event_t::object_end:
        if (!seen.empty()) seen.pop_back();
        break;
      case json::parse_event_t::key: {
        const auto key = parsed.get<std::string>();
        if (!seen.empty() && !seen.back().insert(key).second && duplicate.empty()) duplicate = key;
        break;
      }
      default: break;
    }
    return true;
  };
  json doc;
  try {
    doc = json::parse(text.begin(), text.end(), callback);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    std::ostringstream msg;
    msg << "syntax error in " << source << " at line " << line << ", column " << col << ": " << e.what();
    throw ConfigError(msg.str());
  }
  if (!duplicate.empty()) throw ConfigError("duplicate key '" + duplicate + "' in " + std::string(source));
  return doc;
}

json parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read configuration " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

RunConfig load_config(const std::filesystem::path& path) { return validate_config(parse_config(path)); }

json make_manifest(const SimulationResult& result) {
  const auto& cfg = result.config;
  json m;
  m["tool"] = {{"name", "rydpulse"}, {"version", std::string(kToolVersion)}};
  m["config"] = to_json(cfg);
  m["derived"] = {{"v_g_nominal_um_per_us", cfg.derived.v_g_nominal},
                  {"slow_light_ratio", cfg.derived.slow_light_ratio},
                  {"kernel_hash", result.kernel_hash}};
  m["variant"] = std::string(to_string(cfg.run.variant));
  m["backend"] = std::string(to_string(cfg.run.backend));
  m["potential_stride"] = cfg.run.potential_stride;
  m["timing"] = {{"wall_seconds", result.wall_seconds},
                 {"steps", result.steps_taken},
                 {"seconds_per_step",
                  result.steps_taken > 0 ? result.wall_seconds / static_cast<double>(result.steps_taken) : 0.0}};
  m["grid"] = {{"n_z", cfg.grid.n_z},
               {"n_t", cfg.grid.n_t},
               {"n_z_out", result.z_axis.size()},
               {"n_t_out", result.t_axis.size()}};
  json pulses = json::array();
  for (std::size_t l = 0; l < result.diagnostics.size(); ++l) {
    const auto& d = result.diagnostics[l];
    const double stored = d.spinwave_norm.empty() ? 0.0 : d.spinwave_norm.back();
    const double free_min = free_norm_min_ratio(result, l);
    pulses.push_back({{"transmission", transmission(result, l)},
                      {"potential_peak_gamma", d.potential_peak / cfg.medium.gamma},
                      {"stored_norm", stored},
                      {"free_norm_min_ratio", std::isfinite(free_min) ? json(free_min) : json(nullptr)},
                      {"input_energy", d.input_energy},
                      {"output_energy", d.output_energy},
                      {"input_centroid_us", d.input_centroid},
                      {"output_centroid_us", d.output_centroid},
                      {"photon_norm", d.photon_norm}});
  }
  m["diagnostics"] = pulses;
  m["status"] = std::string(to_string(result.status));
  if (!result.message.empty()) m["message"] = result.message;
  return m;
}

void write_field_file(const std::filesystem::path& path, const std::vector<double>& t_axis,
                      const std::vector<double>& z_axis, const std::vector<double>& data) {
  if (data.size() != t_axis.size() * z_axis.size()) throw IoError("field data does not match its axes");
  std::string buf = matrix_bytes(kFieldMagic, t_axis, z_axis);
  put_array(buf, data);
  OutputWriter w(path.parent_path().empty() ? "." : path.parent_path());
  try {
    w.write(path.filename().string(), buf);
  } catch (...) {
    w.rollback();
    throw;
  }
}

FieldFile read_field_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string what = path.string();
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFieldMagic, 4) != 0) throw IoError(what + ": not a field file");
  if (take<std::uint16_t>(in, what) != kFieldFileVersion) throw IoError(what + ": unsupported version");
  const auto rows = take<std::uint64_t>(in, what);
  const auto cols = take<std::uint64_t>(in, what);
  FieldFile f;
  f.t_axis.resize(rows);
  f.z_axis.resize(cols);
  f.data.resize(rows * cols);
  auto read_into = [&](std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw IoError(what + ": truncated");
  };
  read_into(f.t_axis);
  read_into(f.z_axis);
  read_into(f.data);
  return f;
}

void write_result(const SimulationResult& result, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create output directory " + out_dir.string());
  }
  OutputWriter w(out_dir);
  try {
    if (result.steps_taken > 0) {
      const bool extended = result.config.run.extended_output;
      for (const auto& h : result.fields) {
        const bool core = h.name == "E" || h.name == "S";
        if (!core && !extended) continue;
        std::string buf = matrix_bytes(kFieldMagic, result.t_axis, result.z_axis);
        put_array(buf, h.data);
        w.write(h.name + "_" + std::to_string(h.pulse + 1) + ".rydf", buf);
      }
      for (const auto& h : result.complex_fields) {
        std::string buf = matrix_bytes(kComplexMagic, result.t_axis, result.z_axis);
        put_array(buf, h.data);
        w.write(h.name + "_" + std::to_string(h.pulse + 1) + ".complex.rydf", buf);
      }
      for (std::size_t l = 0; l < result.diagnostics.size(); ++l) {
        const auto& d = result.diagnostics[l];
        const std::string tag = "_" + std::to_string(l + 1) + ".csv";
        w.write("input_flux" + tag, series_csv(result.t_axis, d.input_flux));
        w.write("output_flux" + tag, series_csv(result.t_axis, d.output_flux));
        w.write("spinwave_norm" + tag, series_csv(result.t_axis, d.spinwave_norm));
        w.write("excitation_norm" + tag, series_csv(result.t_axis, d.excitation_norm));
        w.write("free_norm" + tag, series_csv(result.t_axis, d.free_norm));
      }
    }
    w.write("manifest.json", make_manifest(result).dump(2) + "\n");
  } catch (const IoError&) {
    w.rollback();
    throw;
  } catch (const std::exception& e) {
    w.rollback();
    throw IoError(e.what());
  }
}

CompareReport compare_results(const std::filesystem::path& a, const std::filesystem::path& b) {
  if (!std::filesystem::is_directory(a)) throw IoError("not a result directory: " + a.string());
  if (!std::filesystem::is_directory(b)) throw IoError("not a result directory: " + b.string());
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(a)) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() == ".rydf" && name.find(".complex.") == std::string::npos) names.push_back(name);
  }
  std::sort(names.begin(), names.end());
  CompareReport report;
  for (const auto& name : names) {
    const auto fa = read_field_file(a / name);
    if (!std::filesystem::exists(b / name)) throw IoError("missing " + name + " in " + b.string());
    const auto fb = read_field_file(b / name);
    if (fa.t_axis.size() != fb.t_axis.size() || fa.z_axis.size() != fb.z_axis.size()) {
      throw IoError("shape mismatch for " + name);
    }
    const double d = relative_l2(fa.data, fb.data);
    report.per_field.emplace_back(name, d);
    report.distance = std::max(report.distance, d);
  }
  return report;
}

}  // namespace rydpulse
