// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nfmimo/forward.hpp"
#include "nfmimo/solver.hpp"

namespace nfmimo {

struct PsnrResult {
  /// +infinity exactly when rmse == 0.
  double psnr_db = std::numeric_limits<double>::infinity();
  double rmse = 0.0;

  bool is_infinite() const { return rmse == 0.0; }
};

/// PSNR between magnitude volumes that are each normalized to a peak of 1.
/// Global scale and phase of either input therefore do not matter, and the
/// result is symmetric in its arguments. Grids must have equal dims; the
/// reference must not be all zero.
PsnrResult psnr_vs_reference(const ReflectivityVolume& recon, const ReflectivityVolume& reference);

/// "inf" for the infinite sentinel, otherwise fixed notation.
std::string format_db(double psnr_db);

struct SweepRecord {
  MinibatchComposition composition;
  double runtime_s = 0.0;
  double psnr_db = 0.0;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
};

/// Runs SPGM for every (composition, seed) pair and scores each result against
/// a PGM reference. The reference is solved once with base_config unless one
/// is supplied. Runs execute serially; runtime is the solver wall time only.
std::vector<SweepRecord> run_sweep(const ObservationOperator& op, const MeasurementSet& y,
                                   const SolverConfig& base_config,
                                   std::span<const MinibatchComposition> compositions,
                                   std::span<const std::uint64_t> seeds,
                                   const ReflectivityVolume* reference = nullptr);

/// Header: composition_f,composition_tx,composition_rx,B,seed,iterations,runtime_s,psnr_db
void write_sweep_csv(std::span<const SweepRecord> records, const std::filesystem::path& path);

/// Spearman rank correlation with average ranks for ties. Requires equal
/// lengths of at least 2.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace nfmimo
