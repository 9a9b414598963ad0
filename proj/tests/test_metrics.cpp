// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nfmimo/errors.hpp"
#include "nfmimo/metrics.hpp"
#include "support.hpp"

using namespace nfmimo;
using namespace nfmimo::test;

namespace {

ReflectivityVolume volume4(std::vector<cplx> v) {
  return {VoxelGrid{{0, 0, 0.5}, {0.03, 0, 0}, {4, 1, 1}}, std::move(v)};
}

ReflectivityVolume random_volume(const VoxelGrid& g, Rng& rng) {
  return {g, random_cvec(g.size(), rng)};
}

}  // namespace

TEST_CASE("psnr of identical and rescaled volumes is infinite") {
  Rng rng(1);
  const VoxelGrid g{{0, 0, 0.5}, {0.1, 0.1, 0}, {5, 4, 1}};
  const auto a = random_volume(g, rng);
  const PsnrResult same = psnr_vs_reference(a, a);
  CHECK(same.is_infinite());
  CHECK(std::isinf(same.psnr_db));
  CHECK(same.psnr_db > 0);
  CHECK(same.rmse == 0.0);

  // 2j scales magnitudes by a power of two, so the normalized volumes agree exactly.
  auto b = a;
  for (auto& v : b.values) v *= cplx{0.0, 2.0};
  CHECK(psnr_vs_reference(b, a).is_infinite());
  CHECK(psnr_vs_reference(a, b).is_infinite());
}

TEST_CASE("psnr hand-computed example") {
  // Normalized magnitudes differ by 0.02 in one of four voxels: rmse = 0.02 / 2.
  const auto ref = volume4({1.0, 0.5, cplx{0, 0.5}, 0.5});
  const auto rec = volume4({2.0, 1.0, -1.0, 1.04});
  const PsnrResult r = psnr_vs_reference(rec, ref);
  CHECK(r.rmse == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(r.psnr_db == doctest::Approx(40.0).epsilon(1e-10));
  CHECK_FALSE(r.is_infinite());
}

TEST_CASE("psnr invariance and symmetry") {
  Rng rng(2);
  const VoxelGrid g{{0, 0, 0.5}, {0.1, 0.1, 0.1}, {4, 3, 2}};
  const auto a = random_volume(g, rng);
  const auto b = random_volume(g, rng);
  const double base = psnr_vs_reference(a, b).psnr_db;
  for (int t = 0; t < 20; ++t) {
    const cplx ca = std::polar(0.01 + 10 * rng.uniform(), 6.3 * rng.uniform());
    const cplx cb = std::polar(0.01 + 10 * rng.uniform(), 6.3 * rng.uniform());
    auto sa = a, sb = b;
    for (auto& v : sa.values) v *= ca;
    for (auto& v : sb.values) v *= cb;
    CHECK(psnr_vs_reference(sa, sb).psnr_db == doctest::Approx(base).epsilon(1e-9));
    // A generic rotation is not exact in floating point but stays far above any useful threshold.
    CHECK(psnr_vs_reference(sa, a).psnr_db > 250.0);
  }

  // Symmetric once both inputs have peak magnitude 1.
  auto pa = a, pb = b;
  double ma = 0, mb = 0;
  for (auto& v : pa.values) ma = std::max(ma, std::abs(v));
  for (auto& v : pb.values) mb = std::max(mb, std::abs(v));
  for (auto& v : pa.values) v /= ma;
  for (auto& v : pb.values) v /= mb;
  CHECK(psnr_vs_reference(pa, pb).psnr_db == doctest::Approx(psnr_vs_reference(pb, pa).psnr_db).epsilon(1e-14));
}

TEST_CASE("psnr rmse is zero exactly when normalized magnitudes agree") {
  auto ref = volume4({1.0, 0.5, 0.25, 0.0});
  auto rec = volume4({cplx{0, 4.0}, -2.0, 1.0, 0.0});
  CHECK(psnr_vs_reference(rec, ref).rmse == 0.0);
  rec.values[3] = 1e-100;
  CHECK(psnr_vs_reference(rec, ref).rmse > 0.0);
  CHECK(std::isfinite(psnr_vs_reference(rec, ref).psnr_db));
}

TEST_CASE("psnr errors and the zero reconstruction") {
  const auto ref = volume4({1.0, 0.5, 0.25, 0.0});
  CHECK_THROWS_AS(psnr_vs_reference(ref, volume4({0, 0, 0, 0})), ParameterError);
  const ReflectivityVolume other{VoxelGrid{{0, 0, 0.5}, {0, 0.03, 0}, {1, 4, 1}}, ref.values};
  CHECK_THROWS_AS(psnr_vs_reference(ref, other), ShapeError);
  const PsnrResult zero = psnr_vs_reference(volume4({0, 0, 0, 0}), ref);
  CHECK(zero.rmse == doctest::Approx(std::sqrt((1.0 + 0.25 + 0.0625) / 4.0)));
}

TEST_CASE("format_db") {
  CHECK(format_db(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_db(40.0) == "40.000000");
  CHECK(format_db(-3.25) == "-3.250000");
}

TEST_CASE("spearman rank correlation") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> up{2, 4, 8, 16, 100};
  const std::vector<double> down{5, 4, 3, 2, 1};
  CHECK(spearman(x, up) == doctest::Approx(1.0));
  CHECK(spearman(x, down) == doctest::Approx(-1.0));
  // Reference values from an independent statistics package.
  CHECK(spearman(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 2, 3, 4}) ==
        doctest::Approx(0.9486832980505139).epsilon(1e-12));
  CHECK(spearman(std::vector<double>{3, 1, 4, 1, 5}, std::vector<double>{9, 2, 6, 5, 3}) ==
        doctest::Approx(0.20519567041703085).epsilon(1e-12));
  CHECK_THROWS_AS(spearman(std::vector<double>{1}, std::vector<double>{1}), ParameterError);
  CHECK_THROWS_AS(spearman(x, std::vector<double>{1, 2}), ParameterError);
}

TEST_CASE("run_sweep and its CSV") {
  const auto sc = small_scenario(3, 4, 3, {6, 5, 3});
  const ObservationOperator op(sc);
  ReflectivityVolume truth = ReflectivityVolume::zeros(sc.voxels);
  truth.values[20] = 1.0;
  truth.values[55] = cplx{0, 0.6};
  const MeasurementSet y = simulate_measurements(truth, sc, 0.01, 3);
  SolverConfig base;
  base.eta = 0.5 / estimate_lipschitz(op);
  base.max_iters = 300;

  const std::vector<MinibatchComposition> full{MinibatchComposition::full(sc)};
  const std::vector<std::uint64_t> one_seed{5};
  const auto self = run_sweep(op, y, base, full, one_seed);
  REQUIRE(self.size() == 1);
  CHECK((std::isinf(self[0].psnr_db) || self[0].psnr_db >= 120.0));
  CHECK(self[0].runtime_s >= 0.0);
  CHECK(self[0].composition == full[0]);

  CHECK(run_sweep(op, y, base, full, std::vector<std::uint64_t>{}).empty());

  const std::vector<MinibatchComposition> comps{{1, 2, 2}, {2, 3, 2}, {3, 4, 3}};
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto first = run_sweep(op, y, base, comps, seeds);
  const auto second = run_sweep(op, y, base, comps, seeds);
  REQUIRE(first.size() == 6);
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].composition == comps[i / 2]);
    CHECK(first[i].seed == seeds[i % 2]);
    CHECK(first[i].psnr_db == second[i].psnr_db);
    CHECK(first[i].iterations == second[i].iterations);
  }

  const std::vector<MinibatchComposition> bad{{4, 1, 1}};
  CHECK_THROWS_AS(run_sweep(op, y, base, bad, seeds), ParameterError);

  TempDir dir;
  write_sweep_csv(first, dir / "sweep.csv");
  std::ifstream in(dir / "sweep.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "composition_f,composition_tx,composition_rx,B,seed,iterations,runtime_s,psnr_db");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (rows == 1) CHECK(line.rfind("1,2,2,4,1,", 0) == 0);
  }
  CHECK(rows == 6);
  write_sweep_csv(self, dir / "self.csv");
  std::ifstream in2(dir / "self.csv");
  std::getline(in2, line);
  std::getline(in2, line);
  CHECK(line.rfind("3,4,3,36,5,", 0) == 0);
}
