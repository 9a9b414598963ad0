// SPDX-License-Identifier: Apache-2.0
// Small scenarios and independent reference computations for the tests.
#pragma once

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <unistd.h>

#include "nfmimo/forward.hpp"
#include "nfmimo/geometry.hpp"
#include "nfmimo/random.hpp"

namespace nfmimo::test {

inline ImagingScenario small_scenario(std::size_t nf, std::size_t ntx, std::size_t nrx,
                                      std::array<std::size_t, 3> dims, std::uint64_t seed = 3) {
  ImagingScenario sc;
  sc.array = make_spiral_array(ntx, nrx, 0.12, seed);
  sc.frequencies = nf == 1 ? FrequencyGrid{9e9, 9e9, 1} : FrequencyGrid{8e9, 12e9, nf};
  sc.voxels.center = {0.01, -0.02, 0.3};
  sc.voxels.dims = dims;
  for (int a = 0; a < 3; ++a) sc.voxels.extent[a] = dims[a] > 1 ? 0.02 * static_cast<double>(dims[a] - 1) : 0.0;
  sc.validate();
  return sc;
}

inline std::vector<cplx> random_cvec(std::size_t n, Rng& rng) {
  std::vector<cplx> v(n);
  for (auto& x : v) x = {rng.normal(), rng.normal()};
  return v;
}

inline double norm2(const std::vector<cplx>& v) {
  double s = 0.0;
  for (const auto& x : v) s += std::norm(x);
  return std::sqrt(s);
}

inline double rel_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  std::vector<cplx> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return norm2(d) / std::max(norm2(b), 1e-300);
}

// Element of A written out from the physical model with long double
// intermediates, sharing no code with the library.
inline cplx oracle_element(const ImagingScenario& sc, std::size_t m, std::size_t n) {
  const std::size_t nrx = sc.array.receivers.size();
  const std::size_t ntx = sc.array.transmitters.size();
  const std::size_t ri = m % nrx;
  const std::size_t ti = (m / nrx) % ntx;
  const std::size_t fi = m / (nrx * ntx);
  const long double f = fi == 0 ? sc.frequencies.start_hz
                                : sc.frequencies.start_hz + (static_cast<long double>(sc.frequencies.stop_hz) -
                                                             sc.frequencies.start_hz) *
                                                                fi / (sc.frequencies.count - 1);
  const auto& g = sc.voxels;
  const std::size_t ix = n % g.dims[0], iy = (n / g.dims[0]) % g.dims[1], iz = n / (g.dims[0] * g.dims[1]);
  auto coord = [&](double c, double e, std::size_t d, std::size_t i) -> long double {
    if (d == 1) return c;
    return c - e / 2.0L + static_cast<long double>(i) * e / static_cast<long double>(d - 1);
  };
  const long double x = coord(g.center.x, g.extent[0], g.dims[0], ix);
  const long double y = coord(g.center.y, g.extent[1], g.dims[1], iy);
  const long double z = coord(g.center.z, g.extent[2], g.dims[2], iz);
  auto dist = [&](const Vec3& p) {
    return std::sqrt((p.x - x) * (p.x - x) + (p.y - y) * (p.y - y) + (p.z - z) * (p.z - z));
  };
  const long double dt = dist(sc.array.transmitters[ti]);
  const long double dr = dist(sc.array.receivers[ri]);
  const long double phase = -2.0L * std::numbers::pi_v<long double> * f * (dt + dr) / sc.speed_of_light;
  const std::complex<long double> e{std::cos(phase), std::sin(phase)};
  const std::complex<long double> p{sc.pulse(static_cast<double>(f)).real(), sc.pulse(static_cast<double>(f)).imag()};
  const std::complex<long double> v = p * e / (4.0L * std::numbers::pi_v<long double> * dt * dr);
  return {static_cast<double>(v.real()), static_cast<double>(v.imag())};
}

inline std::vector<cplx> oracle_matvec(const ImagingScenario& sc, const std::vector<cplx>& s,
                                       const std::vector<std::size_t>& rows) {
  std::vector<cplx> out(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::complex<long double> acc = 0;
    for (std::size_t n = 0; n < s.size(); ++n) {
      const cplx a = oracle_element(sc, rows[k], n);
      acc += std::complex<long double>(a.real(), a.imag()) * std::complex<long double>(s[n].real(), s[n].imag());
    }
    out[k] = {static_cast<double>(acc.real()), static_cast<double>(acc.imag())};
  }
  return out;
}

inline std::vector<cplx> oracle_adjoint(const ImagingScenario& sc, const std::vector<cplx>& r,
                                        const std::vector<std::size_t>& rows) {
  std::vector<cplx> out(sc.num_voxels());
  for (std::size_t n = 0; n < out.size(); ++n) {
    std::complex<long double> acc = 0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const cplx a = std::conj(oracle_element(sc, rows[k], n));
      acc += std::complex<long double>(a.real(), a.imag()) * std::complex<long double>(r[k].real(), r[k].imag());
    }
    out[n] = {static_cast<double>(acc.real()), static_cast<double>(acc.imag())};
  }
  return out;
}

inline std::vector<std::size_t> iota_rows(std::size_t m) {
  std::vector<std::size_t> rows(m);
  for (std::size_t i = 0; i < m; ++i) rows[i] = i;
  return rows;
}

// (1/2M) ||y - A s||^2 evaluated with the oracle.
inline double oracle_fidelity(const ImagingScenario& sc, const std::vector<cplx>& s,
                              const std::vector<cplx>& y) {
  const auto as = oracle_matvec(sc, s, iota_rows(sc.num_channels()));
  long double acc = 0;
  for (std::size_t m = 0; m < y.size(); ++m) acc += std::norm(y[m] - as[m]);
  return static_cast<double>(acc / (2.0L * static_cast<long double>(y.size())));
}

// Per-entry prox by golden-section search. Candidates are u = t v for t in
// [0, 1], so 1/2 |u - v|^2 + alpha |u| = 1/2 (1 - t)^2 |v|^2 + alpha t |v|.
// The objective is evaluated in quad precision so that comparisons near the
// flat minimum still resolve t to far below the test tolerance.
inline cplx golden_prox(cplx v, double alpha) {
  if (v == cplx{}) return 0.0;
  using quad = __float128;
  const quad r = std::abs(v);
  const quad r2 = static_cast<quad>(v.real()) * v.real() + static_cast<quad>(v.imag()) * v.imag();
  auto f = [&](quad t) { return 0.5Q * (1 - t) * (1 - t) * r2 + static_cast<quad>(alpha) * t * r; };
  const quad invphi = 0.6180339887498948482045868343656381Q;
  quad a = 0, b = 1;
  quad c = b - invphi * (b - a), d = a + invphi * (b - a);
  quad fc = f(c), fd = f(d);
  while (b - a > 1e-22Q) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  quad t = (a + b) / 2;
  if (f(0) <= f(t)) t = 0;
  return static_cast<double>(t) * v;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("nfmimo_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace nfmimo::test
