#include "rydpulse/kernel_cache.hpp"

#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rydpulse/errors.hpp"

namespace rydpulse {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'R', 'Y', 'D', 'K'};

template <typename T>
void put(std::string& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("kernel file truncated");
  return value;
}

std::string geometry_record(const KernelGeometry& g) {
  std::string buf;
  put<double>(buf, g.separation_a);
  put<double>(buf, g.diameter_d);
  put<double>(buf, g.dz);
  put<std::uint64_t>(buf, g.n_z);
  put<double>(buf, g.c6);
  put<std::uint32_t>(buf, g.quadrature_order);
  put<std::uint8_t>(buf, g.transverse_average ? 1 : 0);
  return buf;
}

}  // namespace

std::uint64_t kernel_hash(const KernelGeometry& geometry) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : geometry_record(geometry)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string kernel_hash_hex(const KernelGeometry& geometry) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << kernel_hash(geometry);
  return s.str();
}

void write_kernel_file(const std::filesystem::path& path, const InteractionKernel& kernel) {
  std::string buf(kMagic, 4);
  put<std::uint16_t>(buf, kKernelFileVersion);
  buf += geometry_record(kernel.geometry());
  const auto values = kernel.values();
  put<std::uint64_t>(buf, values.size());
  buf.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw IoError("write failed for " + tmp);
    }
  }
  std::filesystem::rename(tmp, path);
}

std::optional<InteractionKernel> read_kernel_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a kernel file: " + path.string());
  if (take<std::uint16_t>(in) != kKernelFileVersion) throw IoError("unsupported kernel file version");
  KernelGeometry g;
  g.separation_a = take<double>(in);
  g.diameter_d = take<double>(in);
  g.dz = take<double>(in);
  g.n_z = take<std::uint64_t>(in);
  g.c6 = take<double>(in);
  g.quadrature_order = take<std::uint32_t>(in);
  g.transverse_average = take<std::uint8_t>(in) != 0;
  const auto count = take<std::uint64_t>(in);
  if (count != 2 * g.n_z - 1) throw IoError("kernel file value count inconsistent with n_z");
  std::vector<double> values(count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw IoError("kernel file truncated");
  return InteractionKernel(g, std::move(values));
}

std::optional<std::filesystem::path> kernel_cache_dir() {
  const char* dir = std::getenv("RYDPULSE_CACHE_DIR");
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  return std::filesystem::path(dir);
}

}  // namespace rydpulse
