// SPDX-License-Identifier: Apache-2.0
//
// Matrix-free Born-model observation operator
//
//   A[m, n] = p(f_m) exp(-j 2pi f_m (dT + dR) / c) / (4 pi dT dR)
//
// with dT, dR the distances from voxel n to the transmitter and receiver of
// channel m.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nfmimo/geometry.hpp"

namespace nfmimo {

using Fingerprint = std::array<std::uint8_t, 32>;

struct ReflectivityVolume {
  VoxelGrid grid;
  std::vector<cplx> values;

  static ReflectivityVolume zeros(const VoxelGrid& grid);

  /// Throws ShapeError on a length mismatch and ParameterError on non-finite
  /// entries.
  void validate() const;
};

struct MeasurementSet {
  std::vector<cplx> values;
  Fingerprint fingerprint{};
  std::optional<double> noise_sigma;
};

/// Ordered set of distinct flat channel indices.
class ChannelSubset {
 public:
  /// Throws IndexError for indices >= num_channels and ParameterError for
  /// duplicates or an empty list.
  ChannelSubset(std::vector<std::size_t> indices, std::size_t num_channels);

  static ChannelSubset all(std::size_t num_channels);

  const std::vector<std::size_t>& indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  std::size_t num_channels() const { return num_channels_; }

 private:
  std::vector<std::size_t> indices_;
  std::size_t num_channels_;
};

/// Single element of A evaluated straight from the closed form. Throws
/// IndexError for bad indices and SingularityError when the voxel sits on an
/// antenna.
cplx matrix_element(std::size_t m, std::size_t n, const ImagingScenario& scenario);

/// A applied on the fly from per-antenna phasor tables.
///
/// For every antenna a, frequency f and voxel n the operator stores
/// P[a][f][n] = exp(-j 2pi f d / c) / d, so the element of channel (f, t, r)
/// is p(f)/(4 pi) * P[t][f][n] * P[r][f][n]. Work is organized in fixed voxel
/// blocks and every channel keeps its own accumulators, so the value computed
/// for a channel does not depend on which other channels are requested with
/// it, nor on the thread count. Cost scales with the number of requested
/// channels.
///
/// The tables take 16 bytes per antenna, frequency and voxel.
class ObservationOperator {
 public:
  /// threads == 0 selects the hardware concurrency.
  explicit ObservationOperator(const ImagingScenario& scenario, unsigned threads = 0);

  const ImagingScenario& scenario() const { return scenario_; }
  std::size_t rows() const { return num_channels_; }
  std::size_t cols() const { return num_voxels_; }
  unsigned threads() const { return threads_; }

  /// Entry k of the result is (A s)[subset[k]]. A null subset means all
  /// channels.
  std::vector<cplx> apply(std::span<const cplx> s, const ChannelSubset* subset = nullptr) const;

  /// Entry n of the result is sum_k conj(A[subset[k], n]) r[k].
  std::vector<cplx> apply_adjoint(std::span<const cplx> r,
                                  const ChannelSubset* subset = nullptr) const;

  /// scale * A_subH (A_sub s - y_sub) where y is indexed by flat channel
  /// (length rows()). When residual_energy is non-null it receives
  /// sum_k |(A s)[m_k] - y[m_k]|^2.
  std::vector<cplx> residual_gradient(std::span<const cplx> s, std::span<const cplx> y,
                                      const ChannelSubset* subset, double scale,
                                      double* residual_energy = nullptr) const;

 private:
  // Channels sharing a transmitter and a frequency.
  struct Group {
    std::uint32_t tx;
    std::uint32_t freq;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> entries;  // (rx, position in subset)
  };

  std::vector<Group> plan(const ChannelSubset* subset) const;
  std::vector<cplx> forward(std::span<const cplx> s, const std::vector<Group>& groups,
                            std::size_t count) const;
  std::vector<cplx> adjoint(std::span<const cplx> q, const std::vector<Group>& groups) const;
  const double* table(std::size_t antenna, std::size_t freq, std::size_t block) const;

  template <class Body>
  void parallel_for(std::size_t count, Body&& body) const;

  ImagingScenario scenario_;
  std::size_t num_channels_;
  std::size_t num_voxels_;
  std::size_t padded_;
  std::size_t n_tx_;
  std::size_t n_rx_;
  std::size_t n_freq_;
  unsigned threads_;
  std::vector<cplx> freq_scale_;  // p(f)/(4 pi)
  std::vector<double> tables_;    // [voxel block][antenna][freq][re | im][voxel in block]
};

/// Convenience wrappers that build a temporary operator. Prefer an
/// ObservationOperator when applying A repeatedly.
std::vector<cplx> forward_apply(const ReflectivityVolume& s, const ImagingScenario& scenario,
                                const ChannelSubset* subset = nullptr, unsigned threads = 0);
std::vector<cplx> adjoint_apply(std::span<const cplx> r, const ImagingScenario& scenario,
                                const ChannelSubset* subset = nullptr, unsigned threads = 0);

/// y = A s + w with circularly symmetric complex Gaussian w, E|w_m|^2 = sigma^2.
MeasurementSet simulate_measurements(const ReflectivityVolume& s, const ImagingScenario& scenario,
                                     double noise_sigma, std::uint64_t seed, unsigned threads = 0);

/// Row-major dense copy of A, intended as a test oracle.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<cplx> data;

  cplx operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

inline constexpr std::size_t kDenseEntryCap = 10'000'000;

/// Throws ResourceError when rows * cols exceeds max_entries.
DenseMatrix materialize_dense(const ImagingScenario& scenario,
                              std::size_t max_entries = kDenseEntryCap);

}  // namespace nfmimo
