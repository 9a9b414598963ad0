// SPDX-License-Identifier: Apache-2.0
#include "nfmimo/forward.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <thread>

#include "nfmimo/errors.hpp"
#include "nfmimo/io.hpp"
#include "nfmimo/random.hpp"

namespace nfmimo {

namespace {

// Independent partial sums per channel. Eight doubles fill one AVX-512 register.
constexpr std::size_t kLanes = 8;
// Voxels per cache block; the receiver tables of one block stay in L2.
constexpr std::size_t kBlock = 256;

std::size_t round_up(std::size_t n, std::size_t to) { return (n + to - 1) / to * to; }

}  // namespace

ReflectivityVolume ReflectivityVolume::zeros(const VoxelGrid& grid) {
  return {grid, std::vector<cplx>(grid.size())};
}

void ReflectivityVolume::validate() const {
  if (values.size() != grid.size()) {
    throw ShapeError("volume has " + std::to_string(values.size()) + " values, grid expects " +
                     std::to_string(grid.size()));
  }
  for (const cplx& v : values) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw ParameterError("volume contains non-finite values");
    }
  }
}

ChannelSubset::ChannelSubset(std::vector<std::size_t> indices, std::size_t num_channels)
    : indices_(std::move(indices)), num_channels_(num_channels) {
  if (indices_.empty()) throw ParameterError("channel subset must not be empty");
  std::vector<bool> seen(num_channels_, false);
  for (std::size_t m : indices_) {
    if (m >= num_channels_) {
      throw IndexError("channel index " + std::to_string(m) + " out of range");
    }
    if (seen[m]) throw ParameterError("duplicate channel index " + std::to_string(m));
    seen[m] = true;
  }
}

ChannelSubset ChannelSubset::all(std::size_t num_channels) {
  std::vector<std::size_t> idx(num_channels);
  for (std::size_t m = 0; m < num_channels; ++m) idx[m] = m;
  return ChannelSubset(std::move(idx), num_channels);
}

cplx matrix_element(std::size_t m, std::size_t n, const ImagingScenario& scenario) {
  const ChannelIndex ch = channel_of(m, scenario);
  const Vec3 r = voxel_center(n, scenario.voxels);
  const double d_t = distance(scenario.array.transmitters[ch.ti], r);
  const double d_r = distance(scenario.array.receivers[ch.ri], r);
  if (d_t == 0.0 || d_r == 0.0) {
    throw SingularityError("voxel " + std::to_string(n) + " coincides with an antenna");
  }
  const double f = scenario.frequencies.at(ch.fi);
  const double phase = -2.0 * std::numbers::pi / scenario.speed_of_light * f * (d_t + d_r);
  return scenario.pulse(f) * std::polar(1.0, phase) / (4.0 * std::numbers::pi * d_t * d_r);
}

ObservationOperator::ObservationOperator(const ImagingScenario& scenario, unsigned threads)
    : scenario_(scenario),
      num_channels_(scenario.num_channels()),
      num_voxels_(scenario.num_voxels()),
      padded_(round_up(scenario.num_voxels(), kBlock)),
      n_tx_(scenario.array.transmitters.size()),
      n_rx_(scenario.array.receivers.size()),
      n_freq_(scenario.frequencies.count),
      threads_(threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency())) {
  scenario_.validate();

  freq_scale_.resize(n_freq_);
  std::vector<double> wavenumber(n_freq_);
  for (std::size_t fi = 0; fi < n_freq_; ++fi) {
    const double f = scenario_.frequencies.at(fi);
    freq_scale_[fi] = scenario_.pulse(f) / (4.0 * std::numbers::pi);
    wavenumber[fi] = 2.0 * std::numbers::pi / scenario_.speed_of_light * f;
  }

  std::vector<Vec3> centers(num_voxels_);
  for (std::size_t n = 0; n < num_voxels_; ++n) centers[n] = voxel_center(n, scenario_.voxels);

  const std::size_t n_ant = n_tx_ + n_rx_;
  tables_.assign(n_ant * n_freq_ * 2 * padded_, 0.0);
  parallel_for(n_ant, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> dist(num_voxels_);
    for (std::size_t a = lo; a < hi; ++a) {
      const Vec3& pos =
          a < n_tx_ ? scenario_.array.transmitters[a] : scenario_.array.receivers[a - n_tx_];
      for (std::size_t n = 0; n < num_voxels_; ++n) dist[n] = distance(pos, centers[n]);
      for (std::size_t fi = 0; fi < n_freq_; ++fi) {
        for (std::size_t n = 0; n < num_voxels_; ++n) {
          double* re = const_cast<double*>(table(a, fi, n / kBlock)) + n % kBlock;
          const double phase = wavenumber[fi] * dist[n];
          re[0] = std::cos(phase) / dist[n];
          re[kBlock] = -std::sin(phase) / dist[n];
        }
      }
    }
  });
}

const double* ObservationOperator::table(std::size_t antenna, std::size_t freq,
                                         std::size_t block) const {
  return tables_.data() + ((block * (n_tx_ + n_rx_) + antenna) * n_freq_ + freq) * 2 * kBlock;
}

template <class Body>
void ObservationOperator::parallel_for(std::size_t count, Body&& body) const {
  const std::size_t workers = std::min<std::size_t>(threads_, count);
  if (workers <= 1) {
    body(std::size_t{0}, count);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&body, lo = count * w / workers, hi = count * (w + 1) / workers] {
      body(lo, hi);
    });
  }
}

std::vector<ObservationOperator::Group> ObservationOperator::plan(
    const ChannelSubset* subset) const {
  std::vector<Group> groups(n_freq_ * n_tx_);
  for (std::size_t fi = 0; fi < n_freq_; ++fi) {
    for (std::size_t t = 0; t < n_tx_; ++t) {
      groups[fi * n_tx_ + t] = {static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(fi), {}};
    }
  }
  // Flat channel m = ri + nRx (ti + nTx fi), so m / nRx is the group index.
  auto add = [&](std::size_t m, std::size_t k) {
    groups[m / n_rx_].entries.emplace_back(static_cast<std::uint32_t>(m % n_rx_),
                                            static_cast<std::uint32_t>(k));
  };
  if (subset == nullptr) {
    for (std::size_t m = 0; m < num_channels_; ++m) add(m, m);
  } else {
    if (subset->num_channels() != num_channels_) {
      throw ShapeError("channel subset was built for a different channel count");
    }
    const auto& idx = subset->indices();
    for (std::size_t k = 0; k < idx.size(); ++k) add(idx[k], k);
  }
  std::erase_if(groups, [](const Group& g) { return g.entries.empty(); });
  return groups;
}

std::vector<cplx> ObservationOperator::forward(std::span<const cplx> s,
                                               const std::vector<Group>& groups,
                                               std::size_t count) const {
  std::vector<double> s_re(padded_, 0.0), s_im(padded_, 0.0);
  for (std::size_t n = 0; n < num_voxels_; ++n) {
    s_re[n] = s[n].real();
    s_im[n] = s[n].imag();
  }
  // Lane-wise partial sums per requested channel: [k][re | im][lane].
  std::vector<double> acc(count * 2 * kLanes, 0.0);

  // Each worker owns whole groups, hence whole channels, so results do not
  // depend on the thread count.
  parallel_for(groups.size(), [&](std::size_t lo, std::size_t hi) {
    alignas(64) double q_re[kBlock];
    alignas(64) double q_im[kBlock];
    for (std::size_t blk = 0; blk < padded_; blk += kBlock) {
      const double* sr = s_re.data() + blk;
      const double* si = s_im.data() + blk;
      for (std::size_t gi = lo; gi < hi; ++gi) {
        const Group& g = groups[gi];
        const double* tr = table(g.tx, g.freq, blk / kBlock);
        const double* ti = tr + kBlock;
        for (std::size_t v = 0; v < kBlock; ++v) {
          q_re[v] = tr[v] * sr[v] - ti[v] * si[v];
          q_im[v] = tr[v] * si[v] + ti[v] * sr[v];
        }
        for (const auto& [rx, k] : g.entries) {
          const double* rr = table(n_tx_ + rx, g.freq, blk / kBlock);
          const double* ri = rr + kBlock;
          double* a_re = acc.data() + static_cast<std::size_t>(k) * 2 * kLanes;
          double* a_im = a_re + kLanes;
          alignas(64) double lr[kLanes], li[kLanes];
          for (std::size_t l = 0; l < kLanes; ++l) {
            lr[l] = a_re[l];
            li[l] = a_im[l];
          }
          for (std::size_t v = 0; v < kBlock; v += kLanes) {
            for (std::size_t l = 0; l < kLanes; ++l) {
              lr[l] += q_re[v + l] * rr[v + l] - q_im[v + l] * ri[v + l];
              li[l] += q_re[v + l] * ri[v + l] + q_im[v + l] * rr[v + l];
            }
          }
          for (std::size_t l = 0; l < kLanes; ++l) {
            a_re[l] = lr[l];
            a_im[l] = li[l];
          }
        }
      }
    }
  });

  std::vector<cplx> out(count);
  for (const Group& g : groups) {
    for (const auto& [rx, k] : g.entries) {
      const double* a_re = acc.data() + static_cast<std::size_t>(k) * 2 * kLanes;
      double re = 0.0, im = 0.0;
      for (std::size_t l = 0; l < kLanes; ++l) {
        re += a_re[l];
        im += a_re[kLanes + l];
      }
      out[k] = freq_scale_[g.freq] * cplx(re, im);
    }
  }
  return out;
}

std::vector<cplx> ObservationOperator::adjoint(std::span<const cplx> r,
                                               const std::vector<Group>& groups) const {
  std::vector<cplx> out(num_voxels_);
  // Each worker owns whole voxel blocks, hence results do not depend on the
  // thread count.
  parallel_for(padded_ / kBlock, [&](std::size_t lo, std::size_t hi) {
    alignas(64) double g_re[kBlock], g_im[kBlock], h_re[kBlock], h_im[kBlock];
    for (std::size_t b = lo; b < hi; ++b) {
      const std::size_t blk = b * kBlock;
      std::fill_n(g_re, kBlock, 0.0);
      std::fill_n(g_im, kBlock, 0.0);
      for (const Group& g : groups) {
        std::fill_n(h_re, kBlock, 0.0);
        std::fill_n(h_im, kBlock, 0.0);
        const cplx scale = std::conj(freq_scale_[g.freq]);
        for (const auto& [rx, k] : g.entries) {
          const cplx q = scale * r[k];
          const double qr = q.real(), qi = q.imag();
          const double* rr = table(n_tx_ + rx, g.freq, blk / kBlock);
          const double* ri = rr + kBlock;
          // h += conj(P_rx) q
          for (std::size_t v = 0; v < kBlock; ++v) {
            h_re[v] += rr[v] * qr + ri[v] * qi;
            h_im[v] += rr[v] * qi - ri[v] * qr;
          }
        }
        const double* tr = table(g.tx, g.freq, blk / kBlock);
        const double* ti = tr + kBlock;
        // grad += conj(P_tx) h
        for (std::size_t v = 0; v < kBlock; ++v) {
          g_re[v] += tr[v] * h_re[v] + ti[v] * h_im[v];
          g_im[v] += tr[v] * h_im[v] - ti[v] * h_re[v];
        }
      }
      const std::size_t end = std::min(kBlock, num_voxels_ - std::min(num_voxels_, blk));
      for (std::size_t v = 0; v < end; ++v) out[blk + v] = {g_re[v], g_im[v]};
    }
  });
  return out;
}

std::vector<cplx> ObservationOperator::apply(std::span<const cplx> s,
                                             const ChannelSubset* subset) const {
  if (s.size() != num_voxels_) {
    throw ShapeError("input has " + std::to_string(s.size()) + " voxels, operator expects " +
                     std::to_string(num_voxels_));
  }
  return forward(s, plan(subset), subset ? subset->size() : num_channels_);
}

std::vector<cplx> ObservationOperator::apply_adjoint(std::span<const cplx> r,
                                                     const ChannelSubset* subset) const {
  const std::size_t expected = subset ? subset->size() : num_channels_;
  if (r.size() != expected) {
    throw ShapeError("residual has " + std::to_string(r.size()) + " entries, expected " +
                     std::to_string(expected));
  }
  return adjoint(r, plan(subset));
}

std::vector<cplx> ObservationOperator::residual_gradient(std::span<const cplx> s,
                                                         std::span<const cplx> y,
                                                         const ChannelSubset* subset, double scale,
                                                         double* residual_energy) const {
  if (s.size() != num_voxels_) {
    throw ShapeError("input has " + std::to_string(s.size()) + " voxels, operator expects " +
                     std::to_string(num_voxels_));
  }
  if (y.size() != num_channels_) {
    throw ShapeError("measurements have " + std::to_string(y.size()) + " entries, expected " +
                     std::to_string(num_channels_));
  }
  const auto groups = plan(subset);
  const std::size_t count = subset ? subset->size() : num_channels_;
  std::vector<cplx> residual = forward(s, groups, count);
  double energy = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    residual[k] -= y[subset ? subset->indices()[k] : k];
    energy += std::norm(residual[k]);
  }
  if (residual_energy != nullptr) *residual_energy = energy;
  std::vector<cplx> grad = adjoint(residual, groups);
  for (cplx& g : grad) g *= scale;
  return grad;
}

std::vector<cplx> forward_apply(const ReflectivityVolume& s, const ImagingScenario& scenario,
                                const ChannelSubset* subset, unsigned threads) {
  if (!(s.grid == scenario.voxels)) throw ShapeError("volume grid does not match the scenario");
  s.validate();
  return ObservationOperator(scenario, threads).apply(s.values, subset);
}

std::vector<cplx> adjoint_apply(std::span<const cplx> r, const ImagingScenario& scenario,
                                const ChannelSubset* subset, unsigned threads) {
  return ObservationOperator(scenario, threads).apply_adjoint(r, subset);
}

MeasurementSet simulate_measurements(const ReflectivityVolume& s, const ImagingScenario& scenario,
                                     double noise_sigma, std::uint64_t seed, unsigned threads) {
  if (!std::isfinite(noise_sigma) || noise_sigma < 0.0) {
    throw ParameterError("noise sigma must be a non-negative finite number");
  }
  MeasurementSet out;
  out.values = forward_apply(s, scenario, nullptr, threads);
  out.fingerprint = scenario_fingerprint(scenario);
  out.noise_sigma = noise_sigma;
  if (noise_sigma > 0.0) {
    Rng rng(seed);
    const double per_part = noise_sigma / std::sqrt(2.0);
    for (cplx& v : out.values) {
      const double re = rng.normal();
      const double im = rng.normal();
      v += per_part * cplx(re, im);
    }
  }
  return out;
}

DenseMatrix materialize_dense(const ImagingScenario& scenario, std::size_t max_entries) {
  scenario.validate();
  const std::size_t rows = scenario.num_channels();
  const std::size_t cols = scenario.num_voxels();
  if (cols != 0 && rows > max_entries / cols) {
    throw ResourceError("dense matrix of " + std::to_string(rows) + " x " + std::to_string(cols) +
                        " exceeds the cap of " + std::to_string(max_entries) + " entries");
  }
  DenseMatrix a{rows, cols, std::vector<cplx>(rows * cols)};
  for (std::size_t m = 0; m < rows; ++m) {
    for (std::size_t n = 0; n < cols; ++n) a.data[m * cols + n] = matrix_element(m, n, scenario);
  }
  return a;
}

}  // namespace nfmimo
