// SPDX-License-Identifier: Apache-2.0
#include "nfmimo/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nfmimo/errors.hpp"
#include "nfmimo/forward.hpp"
#include "nfmimo/io.hpp"
#include "nfmimo/metrics.hpp"
#include "nfmimo/phantom.hpp"
#include "nfmimo/solver.hpp"

namespace nfmimo {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Flag combinations CLI11 cannot express; reported with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw UsageError("invalid " + what + " '" + text + "'");
  }
  return v;
}

MinibatchComposition parse_composition(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) throw UsageError("composition '" + text + "' is not f,tx,rx");
  return {parse_u64(parts[0], "composition"), parse_u64(parts[1], "composition"),
          parse_u64(parts[2], "composition")};
}

std::vector<MinibatchComposition> parse_compositions(const std::string& text) {
  std::vector<MinibatchComposition> out;
  for (const auto& item : split(text, ';')) {
    if (item.empty()) continue;
    out.push_back(parse_composition(item));
  }
  if (out.empty()) throw UsageError("composition list is empty");
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split(text, ',')) {
    if (!item.empty()) out.push_back(parse_u64(item, "seed"));
  }
  return out;
}

fs::path truth_path(const fs::path& out) {
  return out.parent_path() / (out.stem().string() + "_truth.nfmv");
}

// Hash over every option of the selected subcommand, so two runs print the
// same hash exactly when their effective flags agree.
std::string config_hash(const CLI::App& sub) {
  json cfg;
  cfg["command"] = sub.get_name();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_name() == "--help") continue;
    if (opt->count() > 0) {
      cfg["options"][opt->get_name()] = opt->results();
    } else {
      cfg["options"][opt->get_name()] = opt->get_default_str();
    }
  }
  return sha256_hex(cfg.dump()).substr(0, 16);
}

void print_repro(std::ostream& out, const CLI::App& sub, const std::string& seed) {
  out << "nfmimo " << kVersion << " command=" << sub.get_name() << " seed=" << seed
      << " config=" << config_hash(sub) << '\n';
}

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

struct InitArgs {
  std::string preset;
  bool custom = false;
  std::vector<std::size_t> dims;
  std::vector<double> center;
  std::vector<double> extent;
  std::vector<double> freqs;
  std::vector<double> array;
  std::uint64_t array_seed = kPaperArraySeed;
  std::string out;
};

struct SimulateArgs {
  std::string scenario;
  std::string phantom;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::string out;
  unsigned threads = 0;
};

struct ReconstructArgs {
  std::string scenario;
  std::string measurements;
  std::string method = "pgm";
  std::vector<std::size_t> batch;
  double eta = 1e-3;
  double alpha = 4e-5;
  double tol = 1e-3;
  std::size_t max_iters = 1000;
  std::optional<double> time_budget;
  std::uint64_t seed = 0;
  std::string out;
  std::string report;
  std::string slices;
  unsigned threads = 0;
  bool allow_mismatch = false;
};

struct PsnrArgs {
  std::string recon;
  std::string reference;
};

struct BenchmarkArgs {
  std::string scenario;
  std::string measurements;
  std::string compositions;
  std::string seeds = "0";
  std::string out;
  double eta = 1e-3;
  double alpha = 4e-5;
  double tol = 1e-3;
  std::size_t max_iters = 1000;
  unsigned threads = 0;
  bool allow_mismatch = false;
};

struct InfoArgs {
  std::string scenario;
  std::string volume;
  std::string measurements;
};

int cmd_scenario_init(const InitArgs& a, std::ostream& out) {
  ImagingScenario sc = paper_v_scenario();
  if (a.custom) {
    if (!a.dims.empty()) sc.voxels.dims = {a.dims[0], a.dims[1], a.dims[2]};
    if (!a.center.empty()) sc.voxels.center = {a.center[0], a.center[1], a.center[2]};
    if (!a.extent.empty()) {
      sc.voxels.extent = {a.extent[0], a.extent[1], a.extent[2]};
    } else {
      for (int i = 0; i < 3; ++i) {
        if (sc.voxels.dims[i] == 1) sc.voxels.extent[i] = 0.0;
      }
    }
    if (!a.freqs.empty()) {
      if (a.freqs[2] < 1 || a.freqs[2] != static_cast<double>(static_cast<std::size_t>(a.freqs[2]))) {
        throw ParameterError("frequency count must be a positive integer");
      }
      sc.frequencies = {a.freqs[0], a.freqs[1], static_cast<std::size_t>(a.freqs[2])};
    }
    if (!a.array.empty()) {
      for (int i = 0; i < 2; ++i) {
        if (a.array[i] < 1 || a.array[i] != static_cast<double>(static_cast<std::size_t>(a.array[i]))) {
          throw ParameterError("antenna counts must be positive integers");
        }
      }
      sc.array = make_spiral_array(static_cast<std::size_t>(a.array[0]),
                                   static_cast<std::size_t>(a.array[1]), a.array[2], a.array_seed);
    } else if (a.array_seed != kPaperArraySeed) {
      sc.array = make_spiral_array(sc.array.transmitters.size(), sc.array.receivers.size(), 0.25,
                                   a.array_seed);
    }
    sc.validate();
  }
  write_scenario(sc, a.out);
  out << "wrote " << a.out << " (M=" << sc.num_channels() << ", N=" << sc.num_voxels()
      << ", fingerprint " << to_hex(scenario_fingerprint(sc)) << ")\n";
  return 0;
}

int cmd_info(const InfoArgs& a, std::ostream& out) {
  if (a.scenario.empty() && a.volume.empty() && a.measurements.empty()) {
    throw UsageError("info needs --scenario, --volume or --measurements");
  }
  if (!a.scenario.empty()) {
    const ImagingScenario sc = read_scenario(a.scenario);
    const auto& g = sc.voxels;
    const auto h = g.spacing();
    out << "scenario     " << a.scenario << '\n'
        << "fingerprint  " << to_hex(scenario_fingerprint(sc)) << '\n'
        << "transmitters " << sc.array.transmitters.size() << '\n'
        << "receivers    " << sc.array.receivers.size() << '\n'
        << "frequencies  " << sc.frequencies.count << " (" << fmt(sc.frequencies.start_hz) << " .. "
        << fmt(sc.frequencies.stop_hz) << " Hz)\n"
        << "dims         " << g.dims[0] << " x " << g.dims[1] << " x " << g.dims[2] << '\n'
        << "spacing_m    " << fmt(h[0]) << ' ' << fmt(h[1]) << ' ' << fmt(h[2]) << '\n'
        << "M            " << sc.num_channels() << '\n'
        << "N            " << sc.num_voxels() << '\n';
  }
  if (!a.volume.empty()) {
    const ReflectivityVolume v = read_volume(a.volume);
    double peak = 0.0;
    std::size_t nonzero = 0;
    for (const auto& x : v.values) {
      peak = std::max(peak, std::abs(x));
      nonzero += x != cplx{} ? 1 : 0;
    }
    out << "volume       " << a.volume << '\n'
        << "dims         " << v.grid.dims[0] << " x " << v.grid.dims[1] << " x " << v.grid.dims[2]
        << '\n'
        << "peak         " << fmt(peak) << '\n'
        << "nonzeros     " << nonzero << '\n';
  }
  if (!a.measurements.empty()) {
    const MeasurementSet y = read_measurements(a.measurements);
    out << "measurements " << a.measurements << '\n'
        << "M            " << y.values.size() << '\n'
        << "fingerprint  " << to_hex(y.fingerprint) << '\n';
  }
  return 0;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  if (!is_phantom_spec(a.phantom)) {
    throw UsageError("unknown phantom '" + a.phantom + "' (expected points:k, bar, cross or file:path)");
  }
  if (!(a.noise >= 0.0) || !std::isfinite(a.noise)) throw ParameterError("noise must be finite and >= 0");
  const ImagingScenario sc = read_scenario(a.scenario);
  const ReflectivityVolume truth = make_phantom(a.phantom, sc.voxels, a.seed);
  const MeasurementSet y = simulate_measurements(truth, sc, a.noise, a.seed, a.threads);
  write_measurements(y, a.out);
  write_volume(truth, truth_path(a.out));
  out << "wrote " << a.out << " (M=" << y.values.size() << ") and " << truth_path(a.out).string()
      << '\n';
  return 0;
}

json report_json(const SolveReport& rep, const ReconstructArgs& a,
                 const std::optional<MinibatchComposition>& comp) {
  json j;
  j["method"] = a.method;
  j["composition"] = comp ? json::array({comp->n_f, comp->n_tx, comp->n_rx}) : json(nullptr);
  j["batch_size"] = comp ? json(comp->batch_size()) : json(nullptr);
  j["iterations"] = rep.iterations;
  j["wall_time_s"] = rep.wall_time;
  j["termination"] = std::string(to_string(rep.termination));
  j["eta"] = a.eta;
  j["alpha"] = a.alpha;
  j["tol"] = a.tol;
  j["max_iters"] = a.max_iters;
  j["time_budget_s"] = a.time_budget ? json(*a.time_budget) : json(nullptr);
  j["seed"] = a.seed;
  json trace = json::array();
  for (const auto& r : rep.per_iteration) {
    trace.push_back({{"iter", r.iter},
                     {"magnitude_change", r.magnitude_change},
                     {"elapsed_s", r.elapsed_seconds},
                     {"batch_size", r.batch_size}});
  }
  j["per_iteration"] = std::move(trace);
  return j;
}

int cmd_reconstruct(const ReconstructArgs& a, std::ostream& out) {
  std::optional<MinibatchComposition> comp;
  if (!a.batch.empty()) comp = MinibatchComposition{a.batch[0], a.batch[1], a.batch[2]};
  if (a.method == "spgm" && !comp) throw UsageError("--method spgm requires --batch f,tx,rx");

  const ImagingScenario sc = read_scenario(a.scenario);
  const MeasurementSet y = read_measurements(a.measurements, &sc, a.allow_mismatch);
  if (a.method == "pgm" && comp && !comp->is_full_for(sc)) {
    throw UsageError("--method pgm only accepts the full composition as --batch");
  }

  SolverConfig cfg;
  cfg.eta = a.eta;
  cfg.alpha = a.alpha;
  cfg.tol = a.tol;
  cfg.max_iters = a.max_iters;
  cfg.time_budget_s = a.time_budget;
  cfg.seed = a.seed;
  cfg.composition = comp;
  cfg.validate();

  const ObservationOperator op(sc, a.threads);
  const SolveReport rep = a.method == "pgm" ? pgm_solve(op, y, cfg) : spgm_solve(op, y, cfg);
  write_volume(rep.volume, a.out);
  if (!a.report.empty()) {
    std::ofstream f(a.report);
    if (!f) throw FormatError(FormatError::Kind::Io, "cannot open " + a.report + " for writing");
    f << report_json(rep, a, comp).dump(2) << '\n';
    if (!f) throw FormatError(FormatError::Kind::Io, "failed writing " + a.report);
  }
  if (!a.slices.empty()) export_slices_csv(rep.volume, a.slices);
  out << a.method << ": " << rep.iterations << " iterations, " << fmt(rep.wall_time, "%.3f")
      << " s, termination " << to_string(rep.termination) << '\n'
      << "wrote " << a.out << '\n';
  return 0;
}

int cmd_psnr(const PsnrArgs& a, std::ostream& out) {
  const ReflectivityVolume recon = read_volume(a.recon);
  const ReflectivityVolume reference = read_volume(a.reference);
  const PsnrResult r = psnr_vs_reference(recon, reference);
  out << "psnr_db " << format_db(r.psnr_db) << '\n' << "rmse " << fmt(r.rmse, "%.17g") << '\n';
  return 0;
}

int cmd_benchmark(const BenchmarkArgs& a, std::ostream& out) {
  const auto compositions = parse_compositions(a.compositions);
  const auto seeds = parse_seeds(a.seeds);
  const ImagingScenario sc = read_scenario(a.scenario);
  const MeasurementSet y = read_measurements(a.measurements, &sc, a.allow_mismatch);

  SolverConfig base;
  base.eta = a.eta;
  base.alpha = a.alpha;
  base.tol = a.tol;
  base.max_iters = a.max_iters;
  base.validate();

  const ObservationOperator op(sc, a.threads);
  const auto records = run_sweep(op, y, base, compositions, seeds);
  write_sweep_csv(records, a.out);

  std::map<std::size_t, std::vector<const SweepRecord*>> by_comp;
  for (std::size_t i = 0; i < records.size(); ++i) by_comp[i / seeds.size()].push_back(&records[i]);
  out << "composition      B   runs  mean_runtime_s  mean_iters  min_psnr_db\n";
  for (const auto& [ci, rows] : by_comp) {
    const auto& c = compositions[ci];
    double runtime = 0.0, iters = 0.0, min_psnr = std::numeric_limits<double>::infinity();
    for (const auto* r : rows) {
      runtime += r->runtime_s;
      iters += static_cast<double>(r->iterations);
      min_psnr = std::min(min_psnr, r->psnr_db);
    }
    const double n = static_cast<double>(rows.size());
    char line[160];
    std::snprintf(line, sizeof line, "%-12s %6zu %6zu %15.4f %11.1f  %s\n",
                  (std::to_string(c.n_f) + "," + std::to_string(c.n_tx) + "," + std::to_string(c.n_rx)).c_str(),
                  c.batch_size(), rows.size(), runtime / n, iters / n, format_db(min_psnr).c_str());
    out << line;
  }
  out << "wrote " << a.out << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse near-field MIMO image reconstruction", "nfmimo"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  InitArgs init;
  auto* sc_init = app.add_subcommand("scenario-init", "Write a scenario document");
  auto* preset = sc_init->add_option("--preset", init.preset, "Named preset")
                     ->check(CLI::IsMember({"paper-v"}));
  auto* custom = sc_init->add_flag("--custom", init.custom,
                                   "Start from paper-v and override the fields given below");
  preset->excludes(custom);
  sc_init->add_option("--dims", init.dims, "nx,ny,nz")->delimiter(',')->expected(3)->needs(custom);
  sc_init->add_option("--center", init.center, "x,y,z in m")->delimiter(',')->expected(3)->needs(custom);
  sc_init->add_option("--extent", init.extent, "x,y,z in m")->delimiter(',')->expected(3)->needs(custom);
  sc_init->add_option("--freqs", init.freqs, "start_hz,stop_hz,count")->delimiter(',')->expected(3)->needs(custom);
  sc_init->add_option("--array", init.array, "n_tx,n_rx,radius_m for a spiral array")
      ->delimiter(',')->expected(3)->needs(custom);
  sc_init->add_option("--array-seed", init.array_seed, "Spiral rotation seed")->needs(custom);
  sc_init->add_option("--out", init.out, "Output JSON path")->required();

  InfoArgs info;
  auto* sc_info = app.add_subcommand("info", "Describe a scenario, volume or measurement file");
  sc_info->add_option("--scenario", info.scenario)->check(CLI::ExistingFile);
  sc_info->add_option("--volume", info.volume)->check(CLI::ExistingFile);
  sc_info->add_option("--measurements", info.measurements)->check(CLI::ExistingFile);

  SimulateArgs sim;
  auto* sc_sim = app.add_subcommand("simulate", "Simulate measurements of a synthetic phantom");
  sc_sim->add_option("--scenario", sim.scenario)->required();
  sc_sim->add_option("--phantom", sim.phantom, "points:k, bar, cross or file:path")->required();
  sc_sim->add_option("--noise", sim.noise, "Complex noise standard deviation")->capture_default_str();
  sc_sim->add_option("--seed", sim.seed)->capture_default_str();
  sc_sim->add_option("--out", sim.out, "Measurement file; the truth volume goes to <stem>_truth.nfmv")
      ->required();
  sc_sim->add_option("--threads", sim.threads, "Worker cap, 0 = all cores")->capture_default_str();

  ReconstructArgs rec;
  auto* sc_rec = app.add_subcommand("reconstruct", "Reconstruct a volume with PGM or SPGM");
  sc_rec->add_option("--scenario", rec.scenario)->required();
  sc_rec->add_option("--measurements", rec.measurements)->required();
  sc_rec->add_option("--method", rec.method)->check(CLI::IsMember({"pgm", "spgm"}))->capture_default_str();
  sc_rec->add_option("--batch", rec.batch, "f,tx,rx")->delimiter(',')->expected(3);
  sc_rec->add_option("--eta", rec.eta)->capture_default_str();
  sc_rec->add_option("--alpha", rec.alpha)->capture_default_str();
  sc_rec->add_option("--tol", rec.tol)->capture_default_str();
  sc_rec->add_option("--max-iters", rec.max_iters)->capture_default_str();
  sc_rec->add_option("--time-budget-s", rec.time_budget);
  sc_rec->add_option("--seed", rec.seed)->capture_default_str();
  sc_rec->add_option("--out", rec.out)->required();
  sc_rec->add_option("--report", rec.report, "JSON solve report");
  sc_rec->add_option("--slices", rec.slices, "Also export |s| slices as <prefix>_z<k>.csv");
  sc_rec->add_option("--threads", rec.threads, "Worker cap, 0 = all cores")->capture_default_str();
  sc_rec->add_flag("--allow-fingerprint-mismatch", rec.allow_mismatch);

  PsnrArgs ps;
  auto* sc_psnr = app.add_subcommand("psnr", "PSNR of a reconstruction against a reference");
  sc_psnr->add_option("--recon", ps.recon)->required();
  sc_psnr->add_option("--reference", ps.reference)->required();

  BenchmarkArgs bench;
  auto* sc_bench = app.add_subcommand("benchmark", "SPGM composition sweep against a PGM reference");
  sc_bench->add_option("--scenario", bench.scenario)->required();
  sc_bench->add_option("--measurements", bench.measurements)->required();
  sc_bench->add_option("--compositions", bench.compositions, "f,tx,rx;f,tx,rx;...")->required();
  sc_bench->add_option("--seeds", bench.seeds, "Comma-separated seeds")->capture_default_str();
  sc_bench->add_option("--out", bench.out, "CSV path")->required();
  sc_bench->add_option("--eta", bench.eta)->capture_default_str();
  sc_bench->add_option("--alpha", bench.alpha)->capture_default_str();
  sc_bench->add_option("--tol", bench.tol)->capture_default_str();
  sc_bench->add_option("--max-iters", bench.max_iters)->capture_default_str();
  sc_bench->add_option("--threads", bench.threads, "Worker cap, 0 = all cores")->capture_default_str();
  sc_bench->add_flag("--allow-fingerprint-mismatch", bench.allow_mismatch);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\nrun 'nfmimo --help' for usage\n";
    return 2;
  }

  try {
    if (sc_init->parsed()) {
      if (!*preset && !init.custom) throw UsageError("scenario-init needs --preset or --custom");
      print_repro(out, *sc_init, "-");
      return cmd_scenario_init(init, out);
    }
    if (sc_info->parsed()) {
      print_repro(out, *sc_info, "-");
      return cmd_info(info, out);
    }
    if (sc_sim->parsed()) {
      print_repro(out, *sc_sim, std::to_string(sim.seed));
      return cmd_simulate(sim, out);
    }
    if (sc_rec->parsed()) {
      print_repro(out, *sc_rec, std::to_string(rec.seed));
      return cmd_reconstruct(rec, out);
    }
    if (sc_psnr->parsed()) {
      print_repro(out, *sc_psnr, "-");
      return cmd_psnr(ps, out);
    }
    if (sc_bench->parsed()) {
      print_repro(out, *sc_bench, bench.seeds);
      return cmd_benchmark(bench, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace nfmimo
