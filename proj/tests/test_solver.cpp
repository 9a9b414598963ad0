// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <map>
#include <numbers>
#include <set>
#include <thread>

#include "doctest.h"
#include "nfmimo/errors.hpp"
#include "nfmimo/solver.hpp"
#include "support.hpp"

using namespace nfmimo;
using namespace nfmimo::test;

namespace {

MeasurementSet measurements(std::vector<cplx> values) {
  MeasurementSet y;
  y.values = std::move(values);
  return y;
}

}  // namespace

TEST_CASE("data fidelity") {
  const auto sc = small_scenario(3, 3, 2, {3, 3, 2});
  const ObservationOperator op(sc);
  Rng rng(10);
  const auto s = random_cvec(sc.num_voxels(), rng);
  const auto y = random_cvec(sc.num_channels(), rng);
  const double m = static_cast<double>(sc.num_channels());

  CHECK(data_fidelity(op, s, op.apply(s)) == 0.0);
  CHECK(data_fidelity(op, std::vector<cplx>(sc.num_voxels()), y) ==
        doctest::Approx(norm2(y) * norm2(y) / (2 * m)).epsilon(1e-14));
  CHECK(data_fidelity(op, s, y) == doctest::Approx(oracle_fidelity(sc, s, y)).epsilon(1e-12));

  const ChannelSubset sub({1, 4, 7}, sc.num_channels());
  const auto as = oracle_matvec(sc, s, sub.indices());
  double expect = 0.0;
  for (std::size_t k = 0; k < 3; ++k) expect += 0.5 * std::norm(y[sub.indices()[k]] - as[k]);
  CHECK(data_fidelity(op, s, y, &sub) == doctest::Approx(expect / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(data_fidelity(op, s, std::vector<cplx>(3)), ShapeError);
}

TEST_CASE("full gradient trivial cases") {
  const auto sc = small_scenario(3, 3, 2, {3, 3, 2});
  const ObservationOperator op(sc);
  Rng rng(10);
  const auto s = random_cvec(sc.num_voxels(), rng);
  const auto g = full_gradient(op, s, op.apply(s));
  CHECK(std::all_of(g.begin(), g.end(), [](cplx v) { return v == cplx{}; }));

  ImagingScenario one;
  one.array = {{{0.05, 0, 0}}, {{-0.05, 0.02, 0}}};
  one.frequencies = {10e9, 10e9, 1};
  one.voxels = {{0.01, 0, 0.3}, {0, 0, 0}, {1, 1, 1}};
  const ObservationOperator op1(one);
  const cplx a = matrix_element(0, 0, one);
  const cplx s0{0.7, -0.2}, y0{0.3, 0.4};
  const auto g1 = full_gradient(op1, std::vector<cplx>{s0}, std::vector<cplx>{y0});
  CHECK(std::abs(g1[0] - std::conj(a) * (a * s0 - y0)) < 1e-14 * std::abs(g1[0]));
}

TEST_CASE("full gradient matches central finite differences of the data fidelity") {
  const auto sc = small_scenario(3, 3, 2, {5, 5, 2});
  REQUIRE(sc.num_voxels() == 50);
  const ObservationOperator op(sc);
  Rng rng(21);
  const auto s = random_cvec(sc.num_voxels(), rng);
  const auto y = random_cvec(sc.num_channels(), rng);
  const auto g = full_gradient(op, s, y);
  const double h = 1e-6;
  for (std::size_t n = 0; n < s.size(); ++n) {
    auto sp = s, sm = s;
    sp[n] += h;
    sm[n] -= h;
    const double d_re = (oracle_fidelity(sc, sp, y) - oracle_fidelity(sc, sm, y)) / (2 * h);
    sp = s;
    sm = s;
    sp[n] += cplx{0, h};
    sm[n] -= cplx{0, h};
    const double d_im = (oracle_fidelity(sc, sp, y) - oracle_fidelity(sc, sm, y)) / (2 * h);
    // dD/dRe s_n = Re g_n and dD/dIm s_n = Im g_n.
    REQUIRE(std::abs(cplx{d_re, d_im} - g[n]) < 1e-5 * std::abs(g[n]));
  }
}

TEST_CASE("minibatch gradient") {
  const auto sc = small_scenario(2, 3, 2, {4, 3, 2});
  const ObservationOperator op(sc);
  Rng rng(30);
  const auto s = random_cvec(sc.num_voxels(), rng);
  const auto y = random_cvec(sc.num_channels(), rng);
  const auto full = full_gradient(op, s, y);

  SUBCASE("all channels reproduce the full gradient") {
    const auto all = ChannelSubset::all(sc.num_channels());
    CHECK(rel_diff(minibatch_gradient(op, s, y, all), full) <= 1e-12);
  }
  SUBCASE("single channel") {
    const std::size_t m = 5;
    const auto g = minibatch_gradient(op, s, y, ChannelSubset({m}, sc.num_channels()));
    const cplx res = oracle_matvec(sc, s, {m})[0] - y[m];
    std::vector<cplx> expect(sc.num_voxels());
    for (std::size_t n = 0; n < expect.size(); ++n) expect[n] = std::conj(oracle_element(sc, m, n)) * res;
    CHECK(rel_diff(g, expect) < 1e-12);
  }
  SUBCASE("unbiased under (1,1,1) sampling") {
    Rng draw(31);
    std::vector<cplx> avg(sc.num_voxels());
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
      const auto g = minibatch_gradient(op, s, y, sample_minibatch({1, 1, 1}, sc, draw));
      for (std::size_t n = 0; n < avg.size(); ++n) avg[n] += g[n];
    }
    for (auto& v : avg) v /= draws;
    CHECK(rel_diff(avg, full) < 0.02);
  }
}

TEST_CASE("sample_minibatch structure") {
  const auto sc = paper_v_scenario();
  Rng rng(3);
  const auto full = sample_minibatch({11, 16, 9}, sc, rng);
  CHECK(full.indices() == iota_rows(1584));

  for (int t = 0; t < 20; ++t) {
    const auto sub = sample_minibatch({4, 4, 3}, sc, rng);
    REQUIRE(sub.size() == 48);
    CHECK(std::is_sorted(sub.indices().begin(), sub.indices().end()));
    std::set<std::size_t> fs, ts, rs;
    for (std::size_t m : sub.indices()) {
      const auto ch = channel_of(m, sc);
      fs.insert(ch.fi);
      ts.insert(ch.ti);
      rs.insert(ch.ri);
    }
    CHECK(fs.size() == 4);
    CHECK(ts.size() == 4);
    CHECK(rs.size() == 3);
    // Cartesian product: every combination is present.
    for (auto f : fs)
      for (auto tx : ts)
        for (auto r : rs) CHECK(std::binary_search(sub.indices().begin(), sub.indices().end(),
                                                   flat_channel({f, tx, r}, sc)));
  }

  Rng a(9), b(9);
  for (int t = 0; t < 5; ++t) CHECK(sample_minibatch({2, 3, 2}, sc, a).indices() == sample_minibatch({2, 3, 2}, sc, b).indices());

  CHECK_THROWS_AS(sample_minibatch({12, 1, 1}, sc, rng), ParameterError);
  CHECK_THROWS_AS(sample_minibatch({1, 17, 1}, sc, rng), ParameterError);
  CHECK_THROWS_AS(sample_minibatch({1, 1, 0}, sc, rng), ParameterError);
}

TEST_CASE("single-channel draws are uniform over all channels") {
  const auto sc = paper_v_scenario();
  const std::size_t m = sc.num_channels();
  std::vector<double> counts(m);
  Rng rng(2024);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) counts[sample_minibatch({1, 1, 1}, sc, rng).indices()[0]] += 1;
  const double expected = static_cast<double>(draws) / static_cast<double>(m);
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // Upper 1% point of chi-square with m - 1 degrees of freedom (Wilson-Hilferty).
  const double df = static_cast<double>(m - 1);
  const double z = 2.3263478740408408;
  const double crit = df * std::pow(1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df)), 3.0);
  CHECK(chi2 < crit);
}

TEST_CASE("soft threshold examples") {
  const auto u = soft_threshold(std::vector<cplx>{{3, 4}}, 2.0);
  CHECK(std::abs(u[0] - cplx{1.8, 2.4}) < 1e-15);
  CHECK(soft_threshold(std::vector<cplx>{{0.3, 0.4}}, 0.5)[0] == cplx{});
  CHECK(soft_threshold(std::vector<cplx>{{0.3, 0.4}}, 0.6)[0] == cplx{});
  CHECK(soft_threshold(std::vector<cplx>{{0, 0}}, 0.1)[0] == cplx{});
  const std::vector<cplx> v{{1, -2}, {0.5, 0}, {-3, 0.25}};
  CHECK(soft_threshold(v, 0.0) == v);
  CHECK_THROWS_AS(soft_threshold(v, -1e-9), ParameterError);
}

TEST_CASE("soft threshold matches golden-section minimization") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const cplx v{3 * rng.normal(), 3 * rng.normal()};
    const double alpha = 4 * rng.uniform();
    const cplx u = soft_threshold(std::vector<cplx>{v}, alpha)[0];
    REQUIRE(std::abs(u - golden_prox(v, alpha)) < 1e-9);
  }
}

TEST_CASE("soft threshold is nonexpansive") {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_cvec(20, rng);
    const auto b = random_cvec(20, rng);
    const double alpha = rng.uniform();
    const auto pa = soft_threshold(a, alpha), pb = soft_threshold(b, alpha);
    std::vector<cplx> dp(20), d(20);
    for (int n = 0; n < 20; ++n) {
      dp[n] = pa[n] - pb[n];
      d[n] = a[n] - b[n];
    }
    REQUIRE(norm2(dp) <= norm2(d) * (1 + 1e-15));
  }
}

TEST_CASE("termination check") {
  const std::vector<cplx> a{{1, 2}, {0, -1}, {3, 0}};
  CHECK(check_termination(a, a, 1e-12));
  const std::vector<cplx> z(3);
  CHECK(check_termination(z, z, 1e-3));
  CHECK(magnitude_change(z, z) == 0.0);
  std::vector<cplx> rotated(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) rotated[i] = a[i] * std::polar(1.0, 0.7 + i);
  CHECK(check_termination(a, rotated, 1e-12));
  const std::vector<cplx> b{{1, 2}, {0, -1}, {3.1, 0}};
  const double denom = std::sqrt(5.0 + 1.0 + 9.0);
  CHECK(magnitude_change(a, b) == doctest::Approx(0.1 / denom).epsilon(1e-12));
  CHECK_FALSE(check_termination(a, b, 0.01));
  CHECK(check_termination(a, b, 0.1));
  CHECK_THROWS_AS(magnitude_change(a, std::vector<cplx>(2)), ShapeError);
}

TEST_CASE("pgm fixed points") {
  const auto sc = small_scenario(3, 3, 2, {3, 3, 2});
  const ObservationOperator op(sc);
  SolverConfig cfg;
  const auto zero_y = pgm_solve(op, measurements(std::vector<cplx>(sc.num_channels())), cfg);
  CHECK(zero_y.iterations == 1);
  CHECK(zero_y.termination == Termination::ToleranceReached);
  CHECK(zero_y.per_iteration.at(0).magnitude_change == 0.0);
  CHECK(std::all_of(zero_y.volume.values.begin(), zero_y.volume.values.end(), [](cplx v) { return v == cplx{}; }));

  Rng rng(1);
  const auto y = random_cvec(sc.num_channels(), rng);
  const auto g0 = full_gradient(op, std::vector<cplx>(sc.num_voxels()), y);
  double ginf = 0.0;
  for (auto v : g0) ginf = std::max(ginf, std::abs(v));
  cfg.eta = 0.5;
  cfg.alpha = cfg.eta * ginf * 1.0001;
  const auto stuck = pgm_solve(op, measurements(y), cfg);
  CHECK(stuck.iterations == 1);
  CHECK(std::all_of(stuck.volume.values.begin(), stuck.volume.values.end(), [](cplx v) { return v == cplx{}; }));
}

TEST_CASE("pgm with alpha 0 decreases the data fidelity below the step bound") {
  const auto sc = small_scenario(4, 4, 3, {4, 4, 2});
  const ObservationOperator op(sc);
  ReflectivityVolume truth = ReflectivityVolume::zeros(sc.voxels);
  truth.values[9] = {1.0, 0.5};
  const MeasurementSet y = simulate_measurements(truth, sc, 0.0, 1);
  const double lip = estimate_lipschitz(op, 200);
  SolverConfig cfg;
  cfg.alpha = 0.0;
  cfg.eta = 0.9 / lip;
  cfg.max_iters = 200;
  cfg.tol = 1e-300;
  std::vector<double> fid;
  cfg.progress = [&](const IterationRecord&, std::span<const cplx> s) { fid.push_back(data_fidelity(op, s, y.values)); };
  const auto rep = pgm_solve(op, y, cfg);
  REQUIRE(fid.size() == 200);
  CHECK(data_fidelity(op, std::vector<cplx>(sc.num_voxels()), y.values) >= fid[0]);
  for (std::size_t k = 1; k < fid.size(); ++k) REQUIRE(fid[k] <= fid[k - 1] * (1 + 1e-12));
  CHECK(fid.back() < 0.5 * fid.front());
  CHECK(rep.termination == Termination::MaxIters);
}

TEST_CASE("lipschitz estimate matches a dense power iteration") {
  const auto sc = small_scenario(2, 3, 2, {3, 3, 2});
  const ObservationOperator op(sc);
  const std::size_t m = sc.num_channels(), n = sc.num_voxels();
  std::vector<cplx> v(n, 1.0);
  double lambda = 0.0;
  for (int it = 0; it < 2000; ++it) {
    const auto av = oracle_matvec(sc, v, iota_rows(m));
    auto w = oracle_adjoint(sc, av, iota_rows(m));
    for (auto& x : w) x /= static_cast<double>(m);
    lambda = norm2(w) / norm2(v);
    v = w;
    for (auto& x : v) x /= norm2(w);
  }
  CHECK(estimate_lipschitz(op, 500) == doctest::Approx(lambda).epsilon(1e-6));
}

TEST_CASE("spgm with the full composition reproduces pgm iterate for iterate") {
  const auto sc = small_scenario(3, 4, 3, {6, 5, 3});
  const ObservationOperator op(sc);
  Rng rng(4);
  ReflectivityVolume truth = ReflectivityVolume::zeros(sc.voxels);
  truth.values[11] = 1.0;
  truth.values[40] = {0, -0.7};
  const MeasurementSet y = simulate_measurements(truth, sc, 0.01, 2);

  SolverConfig cfg;
  cfg.eta = 0.5 / estimate_lipschitz(op);
  cfg.alpha = 1e-4;
  cfg.max_iters = 40;
  cfg.tol = 1e-300;
  std::vector<std::vector<cplx>> a, b;
  cfg.progress = [&](const IterationRecord&, std::span<const cplx> s) { a.emplace_back(s.begin(), s.end()); };
  const auto pgm = pgm_solve(op, y, cfg);
  cfg.progress = [&](const IterationRecord&, std::span<const cplx> s) { b.emplace_back(s.begin(), s.end()); };
  cfg.composition = MinibatchComposition::full(sc);
  cfg.seed = 1234;
  const auto spgm = spgm_solve(op, y, cfg);
  REQUIRE(a.size() == 40);
  REQUIRE(b.size() == 40);
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t n = 0; n < a[k].size(); ++n) REQUIRE(std::abs(a[k][n] - b[k][n]) <= 1e-12);
  }
  CHECK(pgm.volume.values == spgm.volume.values);
}

TEST_CASE("spgm determinism, budget and report contract") {
  const auto sc = small_scenario(3, 4, 3, {6, 5, 3});
  const ObservationOperator op(sc);
  ReflectivityVolume truth = ReflectivityVolume::zeros(sc.voxels);
  truth.values[17] = 1.0;
  const MeasurementSet y = simulate_measurements(truth, sc, 0.01, 2);
  SolverConfig cfg;
  cfg.eta = 0.5 / estimate_lipschitz(op);
  cfg.composition = MinibatchComposition{2, 2, 2};
  cfg.seed = 77;
  cfg.max_iters = 60;
  const std::thread::id caller = std::this_thread::get_id();
  bool same_thread = true;
  std::size_t calls = 0;
  cfg.progress = [&](const IterationRecord& rec, std::span<const cplx>) {
    same_thread = same_thread && std::this_thread::get_id() == caller;
    ++calls;
    CHECK(rec.batch_size == 8);
  };
  const auto r1 = spgm_solve(op, y, cfg);
  const auto r2 = spgm_solve(op, y, cfg);
  CHECK(r1.volume.values == r2.volume.values);
  CHECK(r1.iterations == r1.per_iteration.size());
  CHECK(calls == r1.iterations + r2.iterations);
  CHECK(same_thread);
  for (std::size_t k = 0; k < r1.per_iteration.size(); ++k) {
    CHECK(r1.per_iteration[k].iter == k + 1);
    CHECK(r1.per_iteration[k].magnitude_change >= 0.0);
  }
  cfg.seed = 78;
  CHECK(spgm_solve(op, y, cfg).volume.values != r1.volume.values);

  cfg.progress = nullptr;
  cfg.composition.reset();
  cfg.max_iters = 1000000;
  cfg.tol = 1e-300;
  cfg.time_budget_s = 0.001;
  const auto budget = pgm_solve(op, y, cfg);
  CHECK(budget.termination == Termination::TimeBudget);
  CHECK(budget.iterations >= 1);
  cfg.time_budget_s = 0.0;
  CHECK(pgm_solve(op, y, cfg).iterations == 1);
}

TEST_CASE("solver config validation") {
  const auto sc = small_scenario(2, 2, 2, {2, 2, 1});
  const ObservationOperator op(sc);
  const MeasurementSet y = measurements(std::vector<cplx>(sc.num_channels()));
  SolverConfig cfg;
  cfg.eta = 0.0;
  CHECK_THROWS_AS(pgm_solve(op, y, cfg), ParameterError);
  cfg = {};
  cfg.alpha = -1.0;
  CHECK_THROWS_AS(pgm_solve(op, y, cfg), ParameterError);
  cfg = {};
  cfg.tol = 0.0;
  CHECK_THROWS_AS(pgm_solve(op, y, cfg), ParameterError);
  cfg = {};
  cfg.max_iters = 0;
  CHECK_THROWS_AS(pgm_solve(op, y, cfg), ParameterError);
  cfg = {};
  cfg.composition = MinibatchComposition{1, 1, 1};
  CHECK_THROWS_AS(pgm_solve(op, y, cfg), ParameterError);
  cfg.composition = MinibatchComposition{3, 1, 1};
  CHECK_THROWS_AS(spgm_solve(op, y, cfg), ParameterError);
  cfg = {};
  CHECK_THROWS_AS(pgm_solve(op, measurements(std::vector<cplx>(3)), cfg), ShapeError);
  CHECK(to_string(Termination::ToleranceReached) == "tolerance_reached");
  CHECK(to_string(Termination::MaxIters) == "max_iters");
  CHECK(to_string(Termination::TimeBudget) == "time_budget");
}
