// SPDX-License-Identifier: Apache-2.0
//
// Antenna arrays, frequency sweeps and voxel grids for near-field MIMO imaging,
// plus the fixed flat orderings used everywhere else:
//
//   channel m = ri + nRx * (ti + nTx * fi)   (receiver fastest)
//   voxel   n = ix + nx  * (iy + ny  * iz)   (x fastest)
#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

namespace nfmimo {

using cplx = std::complex<double>;

/// Exact SI speed of light in m/s.
inline constexpr double kSpeedOfLight = 299792458.0;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

double distance(const Vec3& a, const Vec3& b);

/// Transmit and receive antenna positions. All antennas lie in the z = 0 plane.
struct ArrayGeometry {
  std::vector<Vec3> transmitters;
  std::vector<Vec3> receivers;

  /// Throws ParameterError on empty lists, off-plane antennas, non-finite
  /// coordinates or duplicate positions within a list.
  void validate() const;

  friend bool operator==(const ArrayGeometry&, const ArrayGeometry&) = default;
};

/// Equally spaced frequencies, both endpoints included.
struct FrequencyGrid {
  double start_hz = 0.0;
  double stop_hz = 0.0;
  std::size_t count = 0;

  void validate() const;
  double spacing() const;
  double at(std::size_t fi) const;

  friend bool operator==(const FrequencyGrid&, const FrequencyGrid&) = default;
};

struct GridIndex {
  std::size_t ix = 0;
  std::size_t iy = 0;
  std::size_t iz = 0;

  friend bool operator==(const GridIndex&, const GridIndex&) = default;
};

/// Regular voxel lattice described by its center, total extent and number of
/// samples per axis. An axis with a single sample must have zero extent.
struct VoxelGrid {
  Vec3 center;
  std::array<double, 3> extent{};
  std::array<std::size_t, 3> dims{1, 1, 1};

  void validate() const;
  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }
  std::array<double, 3> spacing() const;

  std::size_t flatten(const GridIndex& idx) const;
  GridIndex unflatten(std::size_t n) const;

  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;
};

Vec3 voxel_center(std::size_t n, const VoxelGrid& grid);

struct ChannelIndex {
  std::size_t fi = 0;
  std::size_t ti = 0;
  std::size_t ri = 0;

  friend bool operator==(const ChannelIndex&, const ChannelIndex&) = default;
};

/// Fourier transform of the transmitted pulse, p(f).
class PulseSpectrum {
 public:
  struct Knot {
    double frequency_hz;
    cplx value;
    friend bool operator==(const Knot&, const Knot&) = default;
  };

  /// p(f) = 1 for every f.
  PulseSpectrum() : PulseSpectrum(constant(1.0)) {}

  static PulseSpectrum constant(cplx value);
  /// Knots must be strictly increasing in frequency.
  static PulseSpectrum tabulated(std::vector<Knot> knots);

  bool is_constant() const { return std::holds_alternative<cplx>(mode_); }
  cplx constant_value() const;
  const std::vector<Knot>& knots() const;

  /// Linear interpolation between knots in tabulated mode. Throws
  /// ParameterError outside the tabulated range.
  cplx operator()(double frequency_hz) const;

  /// Throws ParameterError if tabulated knots do not cover the grid.
  void check_covers(const FrequencyGrid& grid) const;

  friend bool operator==(const PulseSpectrum&, const PulseSpectrum&) = default;

 private:
  explicit PulseSpectrum(std::variant<cplx, std::vector<Knot>> mode) : mode_(std::move(mode)) {}

  std::variant<cplx, std::vector<Knot>> mode_;
};

struct ImagingScenario {
  ArrayGeometry array;
  FrequencyGrid frequencies;
  VoxelGrid voxels;
  PulseSpectrum pulse;
  double speed_of_light = kSpeedOfLight;

  std::size_t num_channels() const {
    return frequencies.count * array.transmitters.size() * array.receivers.size();
  }
  std::size_t num_voxels() const { return voxels.size(); }

  /// Full consistency check, including the requirement that no voxel center
  /// coincides with an antenna. Throws ParameterError or SingularityError.
  void validate() const;

  friend bool operator==(const ImagingScenario&, const ImagingScenario&) = default;
};

ChannelIndex channel_of(std::size_t m, const ImagingScenario& scenario);
std::size_t flat_channel(const ChannelIndex& ch, const ImagingScenario& scenario);

/// Deterministic stand-in for a spiral MIMO aperture: transmitters on an outer
/// golden-angle spiral (radii 0.55R..R), receivers on an inner one
/// (0.1R..0.45R). The seed only rotates each spiral.
ArrayGeometry make_spiral_array(std::size_t n_tx, std::size_t n_rx, double radius,
                                std::uint64_t seed);

/// Seed used for the array of the paper-v preset.
inline constexpr std::uint64_t kPaperArraySeed = 7;

/// 16 Tx / 9 Rx spiral stand-in, 11 frequencies over 4-16 GHz, a
/// 0.3 x 0.3 x 0.1 m scene centered 0.5 m in front of the array sampled at
/// 0.5 cm (61 x 61 x 21 voxels), p = 1.
ImagingScenario paper_v_scenario();

}  // namespace nfmimo
