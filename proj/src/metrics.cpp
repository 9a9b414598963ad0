// SPDX-License-Identifier: Apache-2.0
#include "nfmimo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "nfmimo/errors.hpp"

namespace nfmimo {

namespace {

std::vector<double> normalized_magnitudes(const std::vector<cplx>& values) {
  std::vector<double> mag(values.size());
  double peak = 0.0;
  for (std::size_t n = 0; n < values.size(); ++n) {
    mag[n] = std::abs(values[n]);
    peak = std::max(peak, mag[n]);
  }
  if (peak > 0.0) {
    for (double& m : mag) m /= peak;
  }
  return mag;
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

PsnrResult psnr_vs_reference(const ReflectivityVolume& recon, const ReflectivityVolume& reference) {
  recon.validate();
  reference.validate();
  if (recon.grid.dims != reference.grid.dims) {
    throw ShapeError("reconstruction and reference grids differ");
  }
  const bool zero_ref = std::all_of(reference.values.begin(), reference.values.end(),
                                    [](const cplx& v) { return v == cplx{}; });
  if (zero_ref) throw ParameterError("reference volume is all zero; normalization is undefined");

  const auto a = normalized_magnitudes(recon.values);
  const auto b = normalized_magnitudes(reference.values);
  double sq = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) sq += (a[n] - b[n]) * (a[n] - b[n]);
  PsnrResult out;
  out.rmse = std::sqrt(sq) / std::sqrt(static_cast<double>(a.size()));
  out.psnr_db = out.rmse == 0.0 ? std::numeric_limits<double>::infinity()
                                : 20.0 * std::log10(1.0 / out.rmse);
  return out;
}

std::string format_db(double psnr_db) {
  if (std::isinf(psnr_db) && psnr_db > 0) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", psnr_db);
  return buf;
}

std::vector<SweepRecord> run_sweep(const ObservationOperator& op, const MeasurementSet& y,
                                   const SolverConfig& base_config,
                                   std::span<const MinibatchComposition> compositions,
                                   std::span<const std::uint64_t> seeds,
                                   const ReflectivityVolume* reference) {
  for (const auto& c : compositions) c.validate_for(op.scenario());
  std::vector<SweepRecord> out;
  if (compositions.empty() || seeds.empty()) return out;

  std::optional<ReflectivityVolume> own_reference;
  if (reference == nullptr) {
    SolverConfig ref_config = base_config;
    ref_config.composition.reset();
    ref_config.time_budget_s.reset();
    own_reference = pgm_solve(op, y, ref_config).volume;
    reference = &*own_reference;
  }

  for (const auto& comp : compositions) {
    for (std::uint64_t seed : seeds) {
      SolverConfig cfg = base_config;
      cfg.composition = comp;
      cfg.seed = seed;
      const SolveReport rep = spgm_solve(op, y, cfg);
      out.push_back({comp, rep.wall_time, psnr_vs_reference(rep.volume, *reference).psnr_db,
                     rep.iterations, seed});
    }
  }
  return out;
}

void write_sweep_csv(std::span<const SweepRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string() + " for writing");
  out << "composition_f,composition_tx,composition_rx,B,seed,iterations,runtime_s,psnr_db\n";
  char runtime[32];
  for (const auto& r : records) {
    std::snprintf(runtime, sizeof runtime, "%.6f", r.runtime_s);
    out << r.composition.n_f << ',' << r.composition.n_tx << ',' << r.composition.n_rx << ','
        << r.composition.batch_size() << ',' << r.seed << ',' << r.iterations << ',' << runtime
        << ',' << format_db(r.psnr_db) << '\n';
  }
  if (!out) throw FormatError(FormatError::Kind::Io, "failed writing " + path.string());
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ParameterError("spearman needs two equally long series of at least two points");
  }
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace nfmimo
