// SPDX-License-Identifier: Apache-2.0
#include "nfmimo/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "nfmimo/errors.hpp"

namespace nfmimo {

using nlohmann::json;

namespace {

// JSON decoding helpers. Every accessor takes the key path so schema errors
// point at the offending element.

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw SchemaError(path.empty() ? "<root>" : path, "expected an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, _] : obj.items()) {
    if (!allowed.count(k)) {
      throw SchemaError(path.empty() ? k : path + "." + k, "unknown key");
    }
  }
  for (const char* k : keys) {
    if (!obj.contains(k)) {
      throw SchemaError(path.empty() ? std::string(k) : path + "." + k, "missing key");
    }
  }
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw SchemaError(path, "expected a number");
  return v.get<double>();
}

std::uint64_t as_count(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw SchemaError(path, "expected an integer");
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  const auto i = v.get<std::int64_t>();
  if (i < 0) throw SchemaError(path, "expected a non-negative integer");
  return static_cast<std::uint64_t>(i);
}

std::array<double, 3> as_triple(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) throw SchemaError(path, "expected an array of 3 numbers");
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = as_number(v[i], path + "[" + std::to_string(i) + "]");
  return out;
}

cplx as_complex(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) throw SchemaError(path, "expected [re, im]");
  return {as_number(v[0], path + "[0]"), as_number(v[1], path + "[1]")};
}

std::vector<Vec3> as_positions(const json& v, const std::string& path) {
  if (!v.is_array()) throw SchemaError(path, "expected an array of [x, y, z] positions");
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto t = as_triple(v[i], path + "[" + std::to_string(i) + "]");
    out.push_back({t[0], t[1], t[2]});
  }
  return out;
}

json triple(double a, double b, double c) { return json::array({a, b, c}); }
json complex_json(cplx v) { return json::array({v.real(), v.imag()}); }

// Little-endian byte encoding.

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <class T>
T get(std::span<const std::uint8_t> bytes, std::size_t offset) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(bytes[offset + i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

std::uint64_t byte_sum(std::span<const std::uint8_t> bytes) {
  std::uint64_t sum = 0;
  for (std::uint8_t b : bytes) sum += b;
  return sum;
}

void put_samples(std::vector<std::uint8_t>& out, std::span<const cplx> values) {
  const std::size_t start = out.size();
  for (const cplx& v : values) {
    put(out, v.real());
    put(out, v.imag());
  }
  put(out, byte_sum(std::span(out).subspan(start)));
}

// Validates the payload region [offset, offset + 16 count) plus checksum and
// decodes it. The caller guarantees the overall length.
std::vector<cplx> get_samples(std::span<const std::uint8_t> bytes, std::size_t offset,
                              std::size_t count) {
  const auto payload = bytes.subspan(offset, 16 * count);
  if (byte_sum(payload) != get<std::uint64_t>(bytes, offset + 16 * count)) {
    throw FormatError(FormatError::Kind::ChecksumMismatch, "payload checksum mismatch");
  }
  std::vector<cplx> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = {get<double>(payload, 16 * i), get<double>(payload, 16 * i + 8)};
  }
  return values;
}

void check_header(std::span<const std::uint8_t> bytes, const char (&magic)[5], std::size_t header_size,
                  std::uint16_t version) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0) {
    if (bytes.size() < 4 && std::memcmp(bytes.data(), magic, bytes.size()) == 0) {
      throw FormatError(FormatError::Kind::Truncated, "file ends inside the magic number");
    }
    throw FormatError(FormatError::Kind::BadMagic, std::string("bad magic, expected ") + magic);
  }
  if (bytes.size() < 6) throw FormatError(FormatError::Kind::Truncated, "file ends inside the header");
  const auto found = get<std::uint16_t>(bytes, 4);
  if (found != version) {
    throw FormatError(FormatError::Kind::VersionMismatch,
                      "unsupported format version " + std::to_string(found));
  }
  if (bytes.size() < header_size) {
    throw FormatError(FormatError::Kind::Truncated, "file ends inside the header");
  }
}

// Bounds the sample count by the bytes actually present before any allocation.
void check_length(std::span<const std::uint8_t> bytes, std::size_t header_size, std::uint64_t count) {
  const std::uint64_t available = bytes.size() - header_size;
  if (count > available / 16 || available - 16 * count < 8) {
    throw FormatError(FormatError::Kind::Truncated, "file is shorter than its header declares");
  }
  if (available - 16 * count > 8) {
    throw FormatError(FormatError::Kind::Malformed, "trailing bytes after checksum");
  }
}

constexpr std::size_t kVolumeHeader = 4 + 2 + 3 * 4;
constexpr std::size_t kMeasurementHeader = 4 + 2 + 4 + 32;

}  // namespace

json scenario_to_json(const ImagingScenario& s) {
  json doc;
  doc["speed_of_light"] = s.speed_of_light;
  doc["frequencies"] = {{"start_hz", s.frequencies.start_hz},
                        {"stop_hz", s.frequencies.stop_hz},
                        {"count", s.frequencies.count}};
  doc["voxels"] = {
      {"center", triple(s.voxels.center.x, s.voxels.center.y, s.voxels.center.z)},
      {"extent", triple(s.voxels.extent[0], s.voxels.extent[1], s.voxels.extent[2])},
      {"dims", json::array({s.voxels.dims[0], s.voxels.dims[1], s.voxels.dims[2]})}};
  if (s.pulse.is_constant()) {
    doc["pulse"] = {{"mode", "constant"}, {"value", complex_json(s.pulse.constant_value())}};
  } else {
    json knots = json::array();
    for (const auto& k : s.pulse.knots()) {
      knots.push_back({{"frequency_hz", k.frequency_hz}, {"value", complex_json(k.value)}});
    }
    doc["pulse"] = {{"mode", "tabulated"}, {"knots", knots}};
  }
  auto positions = [](const std::vector<Vec3>& list) {
    json arr = json::array();
    for (const Vec3& p : list) arr.push_back(triple(p.x, p.y, p.z));
    return arr;
  };
  doc["transmitters"] = positions(s.array.transmitters);
  doc["receivers"] = positions(s.array.receivers);
  return doc;
}

ImagingScenario scenario_from_json(const json& doc) {
  check_keys(doc, "",
             {"speed_of_light", "frequencies", "voxels", "pulse", "transmitters", "receivers"});
  ImagingScenario s;
  s.speed_of_light = as_number(doc["speed_of_light"], "speed_of_light");

  const json& f = doc.at("frequencies");
  check_keys(f, "frequencies", {"start_hz", "stop_hz", "count"});
  s.frequencies.start_hz = as_number(f["start_hz"], "frequencies.start_hz");
  s.frequencies.stop_hz = as_number(f["stop_hz"], "frequencies.stop_hz");
  s.frequencies.count = as_count(f["count"], "frequencies.count");

  const json& v = doc.at("voxels");
  check_keys(v, "voxels", {"center", "extent", "dims"});
  const auto c = as_triple(v["center"], "voxels.center");
  s.voxels.center = {c[0], c[1], c[2]};
  s.voxels.extent = as_triple(v["extent"], "voxels.extent");
  const json& dims = v["dims"];
  if (!dims.is_array() || dims.size() != 3) throw SchemaError("voxels.dims", "expected 3 integers");
  for (std::size_t i = 0; i < 3; ++i) {
    s.voxels.dims[i] = as_count(dims[i], "voxels.dims[" + std::to_string(i) + "]");
  }

  const json& p = doc.at("pulse");
  if (!p.is_object() || !p.contains("mode")) throw SchemaError("pulse.mode", "missing key");
  if (!p["mode"].is_string()) throw SchemaError("pulse.mode", "expected a string");
  const auto mode = p["mode"].get<std::string>();
  if (mode == "constant") {
    check_keys(p, "pulse", {"mode", "value"});
    s.pulse = PulseSpectrum::constant(as_complex(p["value"], "pulse.value"));
  } else if (mode == "tabulated") {
    check_keys(p, "pulse", {"mode", "knots"});
    const json& ks = p["knots"];
    if (!ks.is_array()) throw SchemaError("pulse.knots", "expected an array");
    std::vector<PulseSpectrum::Knot> knots;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const std::string kp = "pulse.knots[" + std::to_string(i) + "]";
      check_keys(ks[i], kp, {"frequency_hz", "value"});
      knots.push_back({as_number(ks[i]["frequency_hz"], join(kp, "frequency_hz")),
                       as_complex(ks[i]["value"], join(kp, "value"))});
    }
    s.pulse = PulseSpectrum::tabulated(std::move(knots));
  } else {
    throw SchemaError("pulse.mode", "expected \"constant\" or \"tabulated\"");
  }

  s.array.transmitters = as_positions(doc["transmitters"], "transmitters");
  s.array.receivers = as_positions(doc["receivers"], "receivers");
  s.validate();
  return s;
}

std::string canonical_scenario_json(const ImagingScenario& scenario) {
  return scenario_to_json(scenario).dump();
}

namespace {

Fingerprint sha256(std::string_view data) {
  Fingerprint digest{};
  unsigned len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != digest.size()) {
    throw Error("SHA-256 computation failed");
  }
  return digest;
}

}  // namespace

std::string sha256_hex(std::string_view data) { return to_hex(sha256(data)); }

Fingerprint scenario_fingerprint(const ImagingScenario& scenario) {
  return sha256(canonical_scenario_json(scenario));
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

void write_scenario(const ImagingScenario& scenario, const std::filesystem::path& path) {
  const std::string text = scenario_to_json(scenario).dump(2) + "\n";
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ImagingScenario read_scenario(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw SchemaError("<root>", std::string("invalid JSON: ") + e.what());
  }
  return scenario_from_json(doc);
}

std::vector<std::uint8_t> encode_volume(const ReflectivityVolume& v) {
  v.validate();
  for (std::size_t d : v.grid.dims) {
    if (d > UINT32_MAX) throw ParameterError("volume dimension too large for the file format");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kVolumeHeader + 16 * v.values.size() + 8);
  out.insert(out.end(), {'N', 'F', 'M', 'V'});
  put(out, kVolumeFormatVersion);
  for (std::size_t d : v.grid.dims) put(out, static_cast<std::uint32_t>(d));
  put_samples(out, v.values);
  return out;
}

ReflectivityVolume decode_volume(std::span<const std::uint8_t> bytes,
                                 const std::optional<VoxelGrid>& grid) {
  check_header(bytes, "NFMV", kVolumeHeader, kVolumeFormatVersion);
  std::array<std::size_t, 3> dims{};
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < 3; ++i) {
    dims[i] = get<std::uint32_t>(bytes, 6 + 4 * i);
    if (dims[i] == 0) throw FormatError(FormatError::Kind::Malformed, "zero volume dimension");
    count *= dims[i];
    if (count > bytes.size()) {
      throw FormatError(FormatError::Kind::Truncated, "file is shorter than its header declares");
    }
  }
  check_length(bytes, kVolumeHeader, count);
  ReflectivityVolume v;
  if (grid) {
    if (grid->dims != dims) throw ShapeError("volume file dims do not match the expected grid");
    v.grid = *grid;
  } else {
    v.grid.dims = dims;
    for (std::size_t i = 0; i < 3; ++i) v.grid.extent[i] = static_cast<double>(dims[i] - 1);
  }
  v.values = get_samples(bytes, kVolumeHeader, count);
  return v;
}

void write_volume(const ReflectivityVolume& v, const std::filesystem::path& path) {
  write_file_bytes(path, encode_volume(v));
}

ReflectivityVolume read_volume(const std::filesystem::path& path,
                               const std::optional<VoxelGrid>& grid) {
  return decode_volume(read_file_bytes(path), grid);
}

std::vector<std::uint8_t> encode_measurements(const MeasurementSet& y) {
  if (y.values.size() > UINT32_MAX) throw ParameterError("too many measurements for the file format");
  std::vector<std::uint8_t> out;
  out.reserve(kMeasurementHeader + 16 * y.values.size() + 8);
  out.insert(out.end(), {'N', 'F', 'M', 'S'});
  put(out, kMeasurementFormatVersion);
  put(out, static_cast<std::uint32_t>(y.values.size()));
  out.insert(out.end(), y.fingerprint.begin(), y.fingerprint.end());
  put_samples(out, y.values);
  return out;
}

MeasurementSet decode_measurements(std::span<const std::uint8_t> bytes) {
  check_header(bytes, "NFMS", kMeasurementHeader, kMeasurementFormatVersion);
  const std::uint64_t count = get<std::uint32_t>(bytes, 6);
  if (count == 0) throw FormatError(FormatError::Kind::Malformed, "empty measurement set");
  check_length(bytes, kMeasurementHeader, count);
  MeasurementSet y;
  std::copy_n(bytes.begin() + 10, 32, y.fingerprint.begin());
  y.values = get_samples(bytes, kMeasurementHeader, count);
  return y;
}

void write_measurements(const MeasurementSet& y, const std::filesystem::path& path) {
  write_file_bytes(path, encode_measurements(y));
}

MeasurementSet read_measurements(const std::filesystem::path& path, const ImagingScenario* scenario,
                                 bool allow_mismatch) {
  MeasurementSet y = decode_measurements(read_file_bytes(path));
  if (scenario != nullptr) {
    if (y.values.size() != scenario->num_channels()) {
      throw ShapeError("measurement file has " + std::to_string(y.values.size()) +
                       " channels, scenario has " + std::to_string(scenario->num_channels()));
    }
    if (!allow_mismatch && y.fingerprint != scenario_fingerprint(*scenario)) {
      throw FingerprintMismatch("measurements were recorded for a different scenario (fingerprint " +
                                to_hex(y.fingerprint) + ")");
    }
  }
  return y;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::Io, "failed writing " + path.string());
}

std::vector<std::filesystem::path> export_slices_csv(const ReflectivityVolume& v,
                                                     const std::string& path_prefix) {
  v.validate();
  double peak = 0.0;
  for (const cplx& x : v.values) peak = std::max(peak, std::abs(x));
  const auto [nx, ny, nz] = v.grid.dims;
  std::vector<std::filesystem::path> written;
  char cell[32];
  for (std::size_t iz = 0; iz < nz; ++iz) {
    std::filesystem::path path = path_prefix + "_z" + std::to_string(iz) + ".csv";
    std::ofstream out(path);
    if (!out) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string() + " for writing");
    for (std::size_t iy = 0; iy < ny; ++iy) {
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const double mag = std::abs(v.values[ix + nx * (iy + ny * iz)]);
        std::snprintf(cell, sizeof cell, "%.10g", peak > 0.0 ? mag / peak : 0.0);
        if (ix > 0) out << ',';
        out << cell;
      }
      out << '\n';
    }
    if (!out) throw FormatError(FormatError::Kind::Io, "failed writing " + path.string());
    written.push_back(std::move(path));
  }
  return written;
}

}  // namespace nfmimo
