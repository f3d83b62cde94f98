#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "rydpulse/potential.hpp"

namespace rydpulse {

// On-disk kernel artifact:
//   "RYDK" | u16 version | geometry record | u64 count | f64[count]
// Geometry record: f64 a, f64 d, f64 dz, u64 n_z, f64 c6, u32 order,
// u8 transverse_average. All little-endian.

inline constexpr std::uint16_t kKernelFileVersion = 1;

/// FNV-1a hash of the serialized geometry record.
std::uint64_t kernel_hash(const KernelGeometry& geometry);
std::string kernel_hash_hex(const KernelGeometry& geometry);

void write_kernel_file(const std::filesystem::path& path, const InteractionKernel& kernel);

/// Returns nullopt when the file is absent; throws IoError when it is
/// present but malformed.
std::optional<InteractionKernel> read_kernel_file(const std::filesystem::path& path);

/// Cache directory from RYDPULSE_CACHE_DIR, if set.
std::optional<std::filesystem::path> kernel_cache_dir();

}  // namespace rydpulse
