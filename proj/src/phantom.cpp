// SPDX-License-Identifier: Apache-2.0
#include "nfmimo/phantom.hpp"

#include <charconv>
#include <cmath>
#include <numbers>

#include "nfmimo/errors.hpp"
#include "nfmimo/io.hpp"
#include "nfmimo/random.hpp"

namespace nfmimo {

namespace {

constexpr std::string_view kPoints = "points:";
constexpr std::string_view kFile = "file:";

bool parse_count(std::string_view text, std::size_t& out) {
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

void line(ReflectivityVolume& v, int axis) {
  const auto [nx, ny, nz] = v.grid.dims;
  const std::size_t len = v.grid.dims[axis];
  for (std::size_t i = len / 4; i <= (3 * len) / 4 && i < len; ++i) {
    GridIndex idx{nx / 2, ny / 2, nz / 2};
    (axis == 0 ? idx.ix : idx.iy) = i;
    v.values[v.grid.flatten(idx)] = 1.0;
  }
}

}  // namespace

bool is_phantom_spec(const std::string& spec) {
  std::size_t k = 0;
  if (spec.starts_with(kPoints)) return parse_count(std::string_view(spec).substr(kPoints.size()), k);
  if (spec.starts_with(kFile)) return spec.size() > kFile.size();
  return spec == "bar" || spec == "cross";
}

ReflectivityVolume make_phantom(const std::string& spec, const VoxelGrid& grid, std::uint64_t seed) {
  grid.validate();
  if (!is_phantom_spec(spec)) {
    throw ParameterError("unknown phantom '" + spec + "' (expected points:k, bar, cross or file:path)");
  }
  if (spec.starts_with(kFile)) {
    try {
      return read_volume(spec.substr(kFile.size()), grid);
    } catch (const ShapeError& e) {
      throw ParameterError(std::string("phantom outside grid: ") + e.what());
    }
  }

  ReflectivityVolume v = ReflectivityVolume::zeros(grid);
  if (spec == "bar" || spec == "cross") {
    line(v, 0);
    if (spec == "cross") line(v, 1);
    return v;
  }

  std::size_t k = 0;
  parse_count(std::string_view(spec).substr(kPoints.size()), k);
  if (k < 1 || k > grid.size()) {
    throw ParameterError("phantom outside grid: cannot place " + std::to_string(k) +
                         " scatterers in " + std::to_string(grid.size()) + " voxels");
  }
  Rng rng(seed);
  std::size_t placed = 0;
  while (placed < k) {
    const std::size_t n = rng.below(grid.size());
    if (v.values[n] != cplx{}) continue;
    v.values[n] = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
    ++placed;
  }
  return v;
}

}  // namespace nfmimo
