// SPDX-License-Identifier: Apache-2.0
#include "nfmimo/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "nfmimo/errors.hpp"

namespace nfmimo {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_measurements(const ObservationOperator& op, std::span<const cplx> y) {
  if (y.size() != op.rows()) {
    throw ShapeError("measurement vector has " + std::to_string(y.size()) + " entries, expected " +
                     std::to_string(op.rows()));
  }
}

// Sorted draw of k distinct values from [0, n) by a partial Fisher-Yates shuffle.
std::vector<std::size_t> draw_axis(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Shared PGM/SPGM loop. next_subset returns nullptr for a full-batch step.
template <class NextSubset>
SolveReport iterate(const ObservationOperator& op, const MeasurementSet& y,
                    const SolverConfig& config, NextSubset&& next_subset) {
  config.validate();
  check_measurements(op, y.values);
  const auto start = Clock::now();

  SolveReport report;
  report.volume = ReflectivityVolume::zeros(op.scenario().voxels);
  std::vector<cplx>& s = report.volume.values;
  const double full_scale = 1.0 / static_cast<double>(op.rows());

  for (std::size_t k = 1;; ++k) {
    const std::optional<ChannelSubset> subset = next_subset();
    const std::size_t batch = subset ? subset->size() : op.rows();
    const double scale = subset ? 1.0 / static_cast<double>(batch) : full_scale;
    const std::vector<cplx> grad =
        op.residual_gradient(s, y.values, subset ? &*subset : nullptr, scale);

    std::vector<cplx> step(s.size());
    for (std::size_t n = 0; n < s.size(); ++n) step[n] = s[n] - config.eta * grad[n];
    std::vector<cplx> next = soft_threshold(step, config.alpha);

    const double change = magnitude_change(s, next);
    s = std::move(next);

    const IterationRecord rec{k, change, seconds_since(start), batch};
    report.per_iteration.push_back(rec);
    if (config.progress) config.progress(rec, s);

    if (change < config.tol) {
      report.termination = Termination::ToleranceReached;
      break;
    }
    if (config.time_budget_s && rec.elapsed_seconds >= *config.time_budget_s) {
      report.termination = Termination::TimeBudget;
      break;
    }
    if (k >= config.max_iters) {
      report.termination = Termination::MaxIters;
      break;
    }
  }
  report.iterations = report.per_iteration.size();
  report.wall_time = seconds_since(start);
  return report;
}

}  // namespace

void MinibatchComposition::validate_for(const ImagingScenario& scenario) const {
  if (n_f < 1 || n_tx < 1 || n_rx < 1) throw ParameterError("minibatch counts must be positive");
  if (n_f > scenario.frequencies.count || n_tx > scenario.array.transmitters.size() ||
      n_rx > scenario.array.receivers.size()) {
    throw ParameterError("minibatch composition (" + std::to_string(n_f) + "," +
                         std::to_string(n_tx) + "," + std::to_string(n_rx) +
                         ") exceeds the scenario axes (" +
                         std::to_string(scenario.frequencies.count) + "," +
                         std::to_string(scenario.array.transmitters.size()) + "," +
                         std::to_string(scenario.array.receivers.size()) + ")");
  }
}

bool MinibatchComposition::is_full_for(const ImagingScenario& scenario) const {
  return *this == full(scenario);
}

MinibatchComposition MinibatchComposition::full(const ImagingScenario& scenario) {
  return {scenario.frequencies.count, scenario.array.transmitters.size(),
          scenario.array.receivers.size()};
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::ToleranceReached:
      return "tolerance_reached";
    case Termination::MaxIters:
      return "max_iters";
    case Termination::TimeBudget:
      return "time_budget";
  }
  return "unknown";
}

void SolverConfig::validate() const {
  if (!std::isfinite(eta) || !(eta > 0.0)) throw ParameterError("eta must be positive");
  if (!std::isfinite(alpha) || alpha < 0.0) throw ParameterError("alpha must be non-negative");
  if (max_iters < 1) throw ParameterError("max_iters must be at least 1");
  if (!std::isfinite(tol) || !(tol > 0.0)) throw ParameterError("tol must be positive");
  if (time_budget_s && !(*time_budget_s >= 0.0)) {
    throw ParameterError("time budget must be non-negative");
  }
}

double data_fidelity(const ObservationOperator& op, std::span<const cplx> s,
                     std::span<const cplx> y, const ChannelSubset* subset) {
  check_measurements(op, y);
  const std::vector<cplx> as = op.apply(s, subset);
  double sum = 0.0;
  for (std::size_t k = 0; k < as.size(); ++k) {
    const std::size_t m = subset ? subset->indices()[k] : k;
    sum += std::norm(y[m] - as[k]);
  }
  return sum / (2.0 * static_cast<double>(as.size()));
}

std::vector<cplx> full_gradient(const ObservationOperator& op, std::span<const cplx> s,
                                std::span<const cplx> y) {
  return op.residual_gradient(s, y, nullptr, 1.0 / static_cast<double>(op.rows()));
}

std::vector<cplx> minibatch_gradient(const ObservationOperator& op, std::span<const cplx> s,
                                     std::span<const cplx> y, const ChannelSubset& subset) {
  return op.residual_gradient(s, y, &subset, 1.0 / static_cast<double>(subset.size()));
}

ChannelSubset sample_minibatch(const MinibatchComposition& composition,
                               const ImagingScenario& scenario, Rng& rng) {
  composition.validate_for(scenario);
  const std::size_t n_tx = scenario.array.transmitters.size();
  const std::size_t n_rx = scenario.array.receivers.size();
  const auto fs = draw_axis(scenario.frequencies.count, composition.n_f, rng);
  const auto ts = draw_axis(n_tx, composition.n_tx, rng);
  const auto rs = draw_axis(n_rx, composition.n_rx, rng);
  std::vector<std::size_t> idx;
  idx.reserve(composition.batch_size());
  for (std::size_t fi : fs) {
    for (std::size_t ti : ts) {
      for (std::size_t ri : rs) idx.push_back(ri + n_rx * (ti + n_tx * fi));
    }
  }
  return ChannelSubset(std::move(idx), scenario.num_channels());
}

std::vector<cplx> soft_threshold(std::span<const cplx> v, double alpha) {
  if (!(alpha >= 0.0)) throw ParameterError("soft threshold alpha must be non-negative");
  std::vector<cplx> out(v.size());
  for (std::size_t n = 0; n < v.size(); ++n) {
    const double mag = std::abs(v[n]);
    out[n] = mag > alpha ? v[n] * ((mag - alpha) / mag) : cplx{};
  }
  return out;
}

double magnitude_change(std::span<const cplx> prev, std::span<const cplx> next) {
  if (prev.size() != next.size()) throw ShapeError("iterates differ in length");
  double diff = 0.0, base = 0.0;
  for (std::size_t n = 0; n < prev.size(); ++n) {
    const double a = std::abs(prev[n]);
    const double d = std::abs(next[n]) - a;
    diff += d * d;
    base += a * a;
  }
  return std::sqrt(diff) / std::max(std::sqrt(base), 1e-12);
}

bool check_termination(std::span<const cplx> prev, std::span<const cplx> next, double tol) {
  return magnitude_change(prev, next) < tol;
}

SolveReport pgm_solve(const ObservationOperator& op, const MeasurementSet& y,
                      const SolverConfig& config) {
  if (config.composition && !config.composition->is_full_for(op.scenario())) {
    throw ParameterError("PGM requires the full composition; use SPGM for minibatches");
  }
  return iterate(op, y, config, [] { return std::optional<ChannelSubset>(); });
}

SolveReport spgm_solve(const ObservationOperator& op, const MeasurementSet& y,
                       const SolverConfig& config) {
  const MinibatchComposition comp =
      config.composition.value_or(MinibatchComposition::full(op.scenario()));
  comp.validate_for(op.scenario());
  Rng rng(config.seed);
  return iterate(op, y, config, [&] {
    return std::optional<ChannelSubset>(sample_minibatch(comp, op.scenario(), rng));
  });
}

double estimate_lipschitz(const ObservationOperator& op, std::size_t iterations,
                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<cplx> v(op.cols());
  for (cplx& x : v) x = {rng.normal(), rng.normal()};
  auto normalize = [](std::vector<cplx>& x) {
    double norm = 0.0;
    for (const cplx& e : x) norm += std::norm(e);
    norm = std::sqrt(norm);
    for (cplx& e : x) e /= norm;
    return norm;
  };
  normalize(v);
  double lambda = 0.0;
  const double scale = 1.0 / static_cast<double>(op.rows());
  for (std::size_t i = 0; i < iterations; ++i) {
    std::vector<cplx> w = op.apply_adjoint(op.apply(v));
    for (cplx& e : w) e *= scale;
    lambda = normalize(w);
    v = std::move(w);
  }
  return lambda;
}

}  // namespace nfmimo
