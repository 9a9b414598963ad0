// SPDX-License-Identifier: Apache-2.0
//
// l1-regularized reconstruction by proximal gradient (PGM) and its stochastic
// minibatch variant (SPGM).
//
// Data fidelity D(s) = 1/(2M) ||y - A s||^2. Gradients follow the conjugate
// (Wirtinger) convention g = 1/M A^H (A s - y), for which
//   dD/dRe(s_n) = Re(g_n)   and   dD/dIm(s_n) = Im(g_n).
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "nfmimo/forward.hpp"
#include "nfmimo/random.hpp"

namespace nfmimo {

/// Numbers of frequencies, transmitters and receivers drawn per iteration.
struct MinibatchComposition {
  std::size_t n_f = 1;
  std::size_t n_tx = 1;
  std::size_t n_rx = 1;

  std::size_t batch_size() const { return n_f * n_tx * n_rx; }
  /// Throws ParameterError if any count is zero or exceeds its axis.
  void validate_for(const ImagingScenario& scenario) const;
  bool is_full_for(const ImagingScenario& scenario) const;

  static MinibatchComposition full(const ImagingScenario& scenario);

  friend bool operator==(const MinibatchComposition&, const MinibatchComposition&) = default;
};

struct IterationRecord {
  std::size_t iter = 0;
  double magnitude_change = 0.0;
  double elapsed_seconds = 0.0;
  std::size_t batch_size = 0;
};

enum class Termination { ToleranceReached, MaxIters, TimeBudget };

std::string_view to_string(Termination t);

struct SolverConfig {
  double eta = 1e-3;
  double alpha = 4e-5;
  std::size_t max_iters = 1000;
  double tol = 1e-3;
  std::uint64_t seed = 0;
  /// Empty means the full batch.
  std::optional<MinibatchComposition> composition;
  /// Checked between iterations only.
  std::optional<double> time_budget_s;
  /// Called on the solver thread after every iteration with the new iterate.
  std::function<void(const IterationRecord&, std::span<const cplx>)> progress;

  void validate() const;
};

struct SolveReport {
  ReflectivityVolume volume;
  std::size_t iterations = 0;
  double wall_time = 0.0;
  std::vector<IterationRecord> per_iteration;
  Termination termination = Termination::MaxIters;
};

/// 1/(2M) ||y - A s||^2 over all channels, or 1/B sum_k |y_mk - (A s)_mk|^2 / 2
/// over a subset.
double data_fidelity(const ObservationOperator& op, std::span<const cplx> s,
                     std::span<const cplx> y, const ChannelSubset* subset = nullptr);

/// 1/M A^H (A s - y).
std::vector<cplx> full_gradient(const ObservationOperator& op, std::span<const cplx> s,
                                std::span<const cplx> y);

/// 1/B A_sub^H (A_sub s - y_sub).
std::vector<cplx> minibatch_gradient(const ObservationOperator& op, std::span<const cplx> s,
                                     std::span<const cplx> y, const ChannelSubset& subset);

/// Draws n_f frequencies, n_tx transmitters and n_rx receivers uniformly
/// without replacement, independently per axis, and returns their Cartesian
/// product in ascending flat channel order.
ChannelSubset sample_minibatch(const MinibatchComposition& composition,
                               const ImagingScenario& scenario, Rng& rng);

/// Complex soft thresholding: magnitudes shrink by alpha, phases are kept.
std::vector<cplx> soft_threshold(std::span<const cplx> v, double alpha);

/// || |next| - |prev| ||_2 / max(|| |prev| ||_2, 1e-12) with |.| entrywise.
double magnitude_change(std::span<const cplx> prev, std::span<const cplx> next);
bool check_termination(std::span<const cplx> prev, std::span<const cplx> next, double tol);

/// Full-batch iterations s <- prox(s - eta grad D(s)) from s = 0. A
/// composition in the config must be the full one.
SolveReport pgm_solve(const ObservationOperator& op, const MeasurementSet& y,
                      const SolverConfig& config);

/// As pgm_solve with a fresh minibatch per iteration drawn from the config's
/// composition and seed.
SolveReport spgm_solve(const ObservationOperator& op, const MeasurementSet& y,
                       const SolverConfig& config);

/// Largest eigenvalue of 1/M A^H A by power iteration, i.e. the Lipschitz
/// constant of grad D.
double estimate_lipschitz(const ObservationOperator& op, std::size_t iterations = 50,
                          std::uint64_t seed = 1);

}  // namespace nfmimo
