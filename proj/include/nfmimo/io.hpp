// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats. All binary integers and floats are little-endian.
//
// Volume file (.nfmv)
//   "NFMV" | u16 version | u32 nx | u32 ny | u32 nz | N x (f64 re, f64 im) | u64 checksum
// Measurement file (.nfms)
//   "NFMS" | u16 version | u32 M | 32-byte scenario fingerprint | M x (f64 re, f64 im) | u64 checksum
//
// The checksum is the sum of the sample payload bytes (the complex values)
// modulo 2^64.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "nfmimo/forward.hpp"
#include "nfmimo/geometry.hpp"

namespace nfmimo {

inline constexpr std::uint16_t kVolumeFormatVersion = 1;
inline constexpr std::uint16_t kMeasurementFormatVersion = 1;

// Scenario documents

nlohmann::json scenario_to_json(const ImagingScenario& scenario);
/// Strict decoding: unknown or missing keys and wrong types raise SchemaError
/// naming the key path; semantic problems raise ParameterError.
ImagingScenario scenario_from_json(const nlohmann::json& doc);

/// Canonical serialization: sorted keys, no whitespace, shortest round-trip
/// number formatting.
std::string canonical_scenario_json(const ImagingScenario& scenario);
/// SHA-256 of the canonical serialization.
Fingerprint scenario_fingerprint(const ImagingScenario& scenario);
std::string to_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view data);

void write_scenario(const ImagingScenario& scenario, const std::filesystem::path& path);
ImagingScenario read_scenario(const std::filesystem::path& path);

// Binary volumes and measurements

std::vector<std::uint8_t> encode_volume(const ReflectivityVolume& v);
/// When grid is given its dims must match the encoded dims and the result
/// carries that grid. Otherwise the grid is a placeholder with the decoded
/// dims, unit spacing and center at the origin.
ReflectivityVolume decode_volume(std::span<const std::uint8_t> bytes,
                                 const std::optional<VoxelGrid>& grid = std::nullopt);
void write_volume(const ReflectivityVolume& v, const std::filesystem::path& path);
ReflectivityVolume read_volume(const std::filesystem::path& path,
                               const std::optional<VoxelGrid>& grid = std::nullopt);

std::vector<std::uint8_t> encode_measurements(const MeasurementSet& y);
MeasurementSet decode_measurements(std::span<const std::uint8_t> bytes);
void write_measurements(const MeasurementSet& y, const std::filesystem::path& path);
/// With a scenario, the stored fingerprint must match it (FingerprintMismatch
/// otherwise) unless allow_mismatch is set, and M must match the scenario.
MeasurementSet read_measurements(const std::filesystem::path& path,
                                 const ImagingScenario* scenario = nullptr,
                                 bool allow_mismatch = false);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// One CSV per z index named <prefix>_z<k>.csv, rows indexed by y and columns
/// by x, each cell |s| divided by the volume-wide peak magnitude (cells stay 0
/// for an all-zero volume). Returns the written paths.
std::vector<std::filesystem::path> export_slices_csv(const ReflectivityVolume& v,
                                                     const std::string& path_prefix);

}  // namespace nfmimo
