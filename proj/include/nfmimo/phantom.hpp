// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "nfmimo/forward.hpp"

namespace nfmimo {

/// Synthetic scenes for simulation:
///   points:k   k distinct random voxels with unit magnitude and random phase
///   bar        unit line along x through the grid center, spanning the middle half
///   cross      the bar plus the matching line along y
///   file:path  a volume file whose dims match the grid
/// Throws ParameterError for an unknown spec and when the phantom does not fit
/// the grid.
ReflectivityVolume make_phantom(const std::string& spec, const VoxelGrid& grid, std::uint64_t seed);

/// True when spec names a known phantom kind, without building it.
bool is_phantom_spec(const std::string& spec);

}  // namespace nfmimo
