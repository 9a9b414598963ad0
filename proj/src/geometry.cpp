// SPDX-License-Identifier: Apache-2.0
#include "nfmimo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "nfmimo/errors.hpp"
#include "nfmimo/random.hpp"

namespace nfmimo {

namespace {

bool finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

void check_antennas(const std::vector<Vec3>& list, const char* name) {
  if (list.empty()) throw ParameterError(std::string(name) + ": at least one antenna required");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const Vec3& p = list[i];
    if (!finite(p)) throw ParameterError(std::string(name) + ": non-finite antenna position");
    if (p.z != 0.0) throw ParameterError(std::string(name) + ": antennas must lie in the z = 0 plane");
    for (std::size_t j = 0; j < i; ++j) {
      if (list[j] == p) {
        throw ParameterError(std::string(name) + ": duplicate antenna position at index " +
                             std::to_string(i));
      }
    }
  }
}

}  // namespace

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void ArrayGeometry::validate() const {
  check_antennas(transmitters, "transmitters");
  check_antennas(receivers, "receivers");
}

void FrequencyGrid::validate() const {
  if (count < 1) throw ParameterError("frequency count must be at least 1");
  if (!std::isfinite(start_hz) || !std::isfinite(stop_hz) || !(start_hz > 0.0)) {
    throw ParameterError("frequency start must be positive and finite");
  }
  if (stop_hz < start_hz) throw ParameterError("frequency stop must not precede start");
  if (count == 1 && stop_hz != start_hz) {
    throw ParameterError("a single-frequency grid requires start == stop");
  }
}

double FrequencyGrid::spacing() const {
  return count > 1 ? (stop_hz - start_hz) / static_cast<double>(count - 1) : 0.0;
}

double FrequencyGrid::at(std::size_t fi) const {
  if (fi >= count) throw IndexError("frequency index out of range");
  if (fi + 1 == count) return stop_hz;
  return start_hz + static_cast<double>(fi) * spacing();
}

void VoxelGrid::validate() const {
  if (!finite(center)) throw ParameterError("voxel grid center must be finite");
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw ParameterError("voxel grid dims must be positive");
    if (!std::isfinite(extent[a]) || extent[a] < 0.0) {
      throw ParameterError("voxel grid extent must be finite and non-negative");
    }
    if (dims[a] == 1 && extent[a] != 0.0) {
      throw ParameterError("an axis with a single voxel must have zero extent");
    }
    if (dims[a] > 1 && extent[a] == 0.0) {
      throw ParameterError("an axis with several voxels needs a positive extent");
    }
  }
}

std::array<double, 3> VoxelGrid::spacing() const {
  std::array<double, 3> d{};
  for (int a = 0; a < 3; ++a) {
    d[a] = dims[a] > 1 ? extent[a] / static_cast<double>(dims[a] - 1) : 0.0;
  }
  return d;
}

std::size_t VoxelGrid::flatten(const GridIndex& idx) const {
  if (idx.ix >= dims[0] || idx.iy >= dims[1] || idx.iz >= dims[2]) {
    throw IndexError("voxel grid index out of range");
  }
  return idx.ix + dims[0] * (idx.iy + dims[1] * idx.iz);
}

GridIndex VoxelGrid::unflatten(std::size_t n) const {
  if (n >= size()) throw IndexError("voxel index " + std::to_string(n) + " out of range");
  GridIndex idx;
  idx.ix = n % dims[0];
  n /= dims[0];
  idx.iy = n % dims[1];
  idx.iz = n / dims[1];
  return idx;
}

Vec3 voxel_center(std::size_t n, const VoxelGrid& grid) {
  const GridIndex idx = grid.unflatten(n);
  const auto d = grid.spacing();
  return {grid.center.x - grid.extent[0] / 2 + static_cast<double>(idx.ix) * d[0],
          grid.center.y - grid.extent[1] / 2 + static_cast<double>(idx.iy) * d[1],
          grid.center.z - grid.extent[2] / 2 + static_cast<double>(idx.iz) * d[2]};
}

PulseSpectrum PulseSpectrum::constant(cplx value) {
  if (!std::isfinite(value.real()) || !std::isfinite(value.imag())) {
    throw ParameterError("pulse value must be finite");
  }
  return PulseSpectrum(value);
}

PulseSpectrum PulseSpectrum::tabulated(std::vector<Knot> knots) {
  if (knots.empty()) throw ParameterError("tabulated pulse needs at least one knot");
  for (std::size_t i = 0; i < knots.size(); ++i) {
    const auto& k = knots[i];
    if (!std::isfinite(k.frequency_hz) || !std::isfinite(k.value.real()) ||
        !std::isfinite(k.value.imag())) {
      throw ParameterError("tabulated pulse knots must be finite");
    }
    if (i > 0 && !(k.frequency_hz > knots[i - 1].frequency_hz)) {
      throw ParameterError("tabulated pulse knots must be strictly increasing in frequency");
    }
  }
  return PulseSpectrum(std::move(knots));
}

cplx PulseSpectrum::constant_value() const {
  if (!is_constant()) throw ParameterError("pulse spectrum is tabulated");
  return std::get<cplx>(mode_);
}

const std::vector<PulseSpectrum::Knot>& PulseSpectrum::knots() const {
  if (is_constant()) throw ParameterError("pulse spectrum is constant");
  return std::get<std::vector<Knot>>(mode_);
}

cplx PulseSpectrum::operator()(double f) const {
  if (is_constant()) return std::get<cplx>(mode_);
  const auto& k = std::get<std::vector<Knot>>(mode_);
  if (f < k.front().frequency_hz || f > k.back().frequency_hz) {
    throw ParameterError("frequency outside the tabulated pulse range");
  }
  auto hi = std::lower_bound(k.begin(), k.end(), f,
                             [](const Knot& a, double v) { return a.frequency_hz < v; });
  if (hi->frequency_hz == f) return hi->value;
  auto lo = hi - 1;
  const double t = (f - lo->frequency_hz) / (hi->frequency_hz - lo->frequency_hz);
  return lo->value + t * (hi->value - lo->value);
}

void PulseSpectrum::check_covers(const FrequencyGrid& grid) const {
  if (is_constant()) return;
  const auto& k = knots();
  if (grid.start_hz < k.front().frequency_hz || grid.stop_hz > k.back().frequency_hz) {
    throw ParameterError("tabulated pulse does not cover the frequency grid");
  }
}

void ImagingScenario::validate() const {
  array.validate();
  frequencies.validate();
  voxels.validate();
  pulse.check_covers(frequencies);
  if (!std::isfinite(speed_of_light) || !(speed_of_light > 0.0)) {
    throw ParameterError("speed of light must be positive");
  }
  // Antennas sit at z = 0, so only the z = 0 voxel plane can collide with one.
  const auto d = voxels.spacing();
  const double z0 = voxels.center.z - voxels.extent[2] / 2;
  for (std::size_t iz = 0; iz < voxels.dims[2]; ++iz) {
    if (z0 + static_cast<double>(iz) * d[2] != 0.0) continue;
    for (std::size_t n = voxels.flatten({0, 0, iz}); n < voxels.flatten({0, 0, iz}) +
                                                            voxels.dims[0] * voxels.dims[1];
         ++n) {
      const Vec3 r = voxel_center(n, voxels);
      for (const auto* list : {&array.transmitters, &array.receivers}) {
        for (const Vec3& a : *list) {
          if (distance(a, r) == 0.0) {
            throw SingularityError("voxel " + std::to_string(n) + " coincides with an antenna");
          }
        }
      }
    }
  }
}

ChannelIndex channel_of(std::size_t m, const ImagingScenario& scenario) {
  const std::size_t n_rx = scenario.array.receivers.size();
  const std::size_t n_tx = scenario.array.transmitters.size();
  if (m >= scenario.num_channels()) {
    throw IndexError("channel index " + std::to_string(m) + " out of range");
  }
  ChannelIndex ch;
  ch.ri = m % n_rx;
  m /= n_rx;
  ch.ti = m % n_tx;
  ch.fi = m / n_tx;
  return ch;
}

std::size_t flat_channel(const ChannelIndex& ch, const ImagingScenario& scenario) {
  const std::size_t n_rx = scenario.array.receivers.size();
  const std::size_t n_tx = scenario.array.transmitters.size();
  if (ch.fi >= scenario.frequencies.count || ch.ti >= n_tx || ch.ri >= n_rx) {
    throw IndexError("channel index out of range");
  }
  return ch.ri + n_rx * (ch.ti + n_tx * ch.fi);
}

ArrayGeometry make_spiral_array(std::size_t n_tx, std::size_t n_rx, double radius,
                                std::uint64_t seed) {
  if (n_tx < 1 || n_rx < 1) throw ParameterError("spiral array needs at least one Tx and one Rx");
  if (!std::isfinite(radius) || !(radius > 0.0)) {
    throw ParameterError("spiral radius must be positive");
  }
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  Rng rng(seed);
  auto spiral = [&](std::size_t count, double r_min, double r_max) {
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    std::vector<Vec3> pts;
    pts.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double t = (static_cast<double>(i) + 0.5) / static_cast<double>(count);
      const double r = r_min + (r_max - r_min) * t;
      const double a = phase + static_cast<double>(i) * golden;
      pts.push_back({r * std::cos(a), r * std::sin(a), 0.0});
    }
    return pts;
  };
  ArrayGeometry g;
  g.transmitters = spiral(n_tx, 0.55 * radius, radius);
  g.receivers = spiral(n_rx, 0.10 * radius, 0.45 * radius);
  g.validate();
  return g;
}

ImagingScenario paper_v_scenario() {
  ImagingScenario s;
  s.array = make_spiral_array(16, 9, 0.25, kPaperArraySeed);
  s.frequencies = {4e9, 16e9, 11};
  s.voxels.center = {0.0, 0.0, 0.5};
  s.voxels.extent = {0.3, 0.3, 0.1};
  s.voxels.dims = {61, 61, 21};
  s.pulse = PulseSpectrum::constant(1.0);
  s.speed_of_light = kSpeedOfLight;
  return s;
}

}  // namespace nfmimo
