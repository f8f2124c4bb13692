// mfl: command-line front end.
//
//   mfl estimate --config run.json --out DIR
//   mfl track    --config track.json --out DIR
//   mfl sweep    --config sweep.json --out DIR
//   mfl fft      fringe.txt
//   mfl ingest   fringe.txt --out fringe.bin --binary
//   mfl bench
//
// Tables and reports go to stdout, progress to stderr.

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "mfl/analysis.hpp"
#include "mfl/errors.hpp"
#include "mfl/tracking.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace mfl;
using namespace mfl::cli;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<int> epochs;
  int jobs = 1;
  std::string out;
};

std::mutex g_progress_mutex;

void progress(const std::string& line) {
  std::lock_guard lock(g_progress_mutex);
  std::cerr << line << '\n';
}

// Writes through a ".partial" sibling and renames on success.
void write_atomic(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  fs::path partial = path;
  partial += ".partial";
  {
    std::ofstream out(partial, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + partial.string());
    body(out);
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + partial.string());
  }
  fs::rename(partial, path);
}

void write_json(const fs::path& path, const json& doc) {
  write_atomic(path, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
}

std::string run_name(int r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "run_%04d.ndjson", r);
  return buf;
}

// Runs body(0..n-1) on up to `jobs` threads. The first exception is rethrown.
void parallel_for(int n, int jobs, const std::function<void(int)>& body) {
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const int k = std::clamp(jobs, 1, std::max(1, n));
  std::vector<std::thread> pool;
  for (int t = 1; t < k; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

RunConfig load_config(const Common& c, const std::string& command) {
  if (c.config_path.empty()) throw ConfigError("--config is required for " + command);
  return resolve(load_json(c.config_path), command, Overrides{c.seed, c.runs, c.epochs});
}

json config_document(const RunConfig& config) {
  json doc = config.resolved;
  return json{{"config_hash", config.hash}, {"seed", config.seed}, {"config", doc}};
}

struct Ensemble {
  std::vector<RunTrace> runs;
  std::size_t failed = 0;
};

// R runs of one cell. Run r uses derive_seed(seed, r) whatever the worker count.
Ensemble run_cell(const RunConfig& config, int m, const EstimationConfig& est, bool tracking, int jobs,
                  const std::string& label) {
  Ensemble e;
  e.runs.resize(config.runs);
  const LikelihoodModel likelihood(config.xi);
  std::atomic<int> done{0};
  parallel_for(config.runs, jobs, [&](int r) {
    const auto run_seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
    auto backend = make_backend(config, m, derive_seed(run_seed, 1));
    RunTrace trace;
    if (tracking) {
      TrackerConfig tc;
      tc.base = est;
      tc.r_resample = config.r_resample;
      tc.p_reset = config.p_reset;
      trace = run_tracking(*backend, likelihood, *config.prior, tc, run_seed);
    } else {
      trace = run_estimation(*backend, likelihood, *config.prior, est, run_seed);
    }
    trace.header.config_hash = config.hash;
    e.runs[r] = std::move(trace);
    progress("[" + label + "] run " + std::to_string(++done) + "/" + std::to_string(config.runs));
  });
  for (const auto& t : e.runs) {
    if (t.error) ++e.failed;
  }
  return e;
}

// Runs that stopped early are left out of the summary tables.
std::vector<RunTrace> complete_runs(const Ensemble& e) {
  std::vector<RunTrace> out;
  for (const auto& t : e.runs) {
    if (!t.error) out.push_back(t);
  }
  return out;
}

void write_cell(const fs::path& dir, const RunConfig& config, const Ensemble& e,
                const std::optional<EnsembleSummary>& summary) {
  fs::create_directories(dir);
  for (std::size_t r = 0; r < e.runs.size(); ++r) {
    write_atomic(dir / run_name(static_cast<int>(r)), [&](std::ostream& out) { write_trace(out, e.runs[r]); });
  }
  if (summary) {
    write_atomic(dir / "summary.tsv", [&](std::ostream& out) {
      out << "# config_hash " << config.hash << "\n# seed " << config.seed << '\n';
      write_summary(out, *summary);
    });
  }
}

json final_stats(const std::vector<RunTrace>& runs, const EnsembleSummary& s) {
  std::vector<double> b_mean;
  for (const auto& t : runs) b_mean.push_back(t.field_mean(t.records.size() - 1));
  const std::size_t last = s.median_tau.size() - 1;
  return json{{"epochs", last + 1},
              {"b_mean_median", median(b_mean)},
              {"b_sd_median", s.b_sd.median[last]},
              {"T_median", s.median_t[last]},
              {"T_bar_median", s.median_t_bar[last]},
              {"eta_median", s.median_eta[last]},
              {"eta_bar_median", s.median_eta_bar[last]}};
}

int cmd_run(const Common& c, const std::string& command) {
  const RunConfig config = load_config(c, command);
  const bool tracking = command == "track";
  const fs::path dir = c.out.empty() ? fs::path("mfl-" + command) : fs::path(c.out);
  const auto est = estimation_for(config, config.m, config.seed);

  const Ensemble e = run_cell(config, config.m, est, tracking, c.jobs, command);
  const auto good = complete_runs(e);
  std::optional<EnsembleSummary> summary;
  if (!good.empty()) summary = summarize(good, config.overheads);

  fs::create_directories(dir);
  write_json(dir / "config.json", config_document(config));
  write_cell(dir, config, e, summary);

  json report{{"command", command},
              {"config_hash", config.hash},
              {"seed", config.seed},
              {"runs", config.runs},
              {"failed_runs", e.failed},
              {"n_particles", est.n_particles},
              {"n_bar", est.outcome.calibration.n_bar},
              {"n_max", est.outcome.calibration.n_max}};
  if (summary) report["final"] = final_stats(good, *summary);
  if (tracking) {
    json resets = json::array();
    for (const auto& t : e.runs) resets.push_back(t.reset_count());
    report["resets"] = resets;
    if (config.backend == RunConfig::BackendKind::kSimulator && !good.empty()) {
      json nms = json::array();
      std::vector<double> values;
      for (const auto& t : good) {
        values.push_back(nms_error(t, config.simulator.waveform));
        nms.push_back(values.back());
      }
      report["nms"] = nms;
      report["nms_median"] = median(values);
    }
  }
  write_json(dir / "report.json", report);
  std::cout << report.dump() << '\n';
  if (e.failed) {
    std::cerr << "error: " << e.failed << " of " << config.runs << " runs stopped early; see the traces\n";
    return 1;
  }
  return 0;
}

int cmd_sweep(const Common& c) {
  const RunConfig config = load_config(c, "sweep");
  const fs::path dir = c.out.empty() ? fs::path("mfl-sweep") : fs::path(c.out);
  fs::create_directories(dir);
  write_json(dir / "config.json", config_document(config));

  const double b_lo = config.resolved["prior"]["b_min"].get<double>();
  const double b_hi = config.resolved["prior"]["b_max"].get<double>();
  const double prior_sd = (b_hi - b_lo) / std::sqrt(12.0);
  const auto tau_max = config.estimation.heuristic.tau_max;

  std::ostringstream table;
  table << "# config_hash " << config.hash << "\n# seed " << config.seed << '\n';
  table << "M\tn_particles\ta\tt_resample\tfit_first\tfit_last\texponent\texponent_err\tb_sd_final\teta_bar_final\n";
  bool any_failed = false;
  for (int m : config.sweep_m) {
    const auto est = estimation_for(config, m, config.seed);
    const std::string label = "sweep M=" + std::to_string(m);
    const Ensemble e = run_cell(config, m, est, false, c.jobs, label);
    const auto good = complete_runs(e);
    any_failed = any_failed || e.failed > 0;
    char name[32];
    std::snprintf(name, sizeof name, "M_%04d", m);
    std::optional<EnsembleSummary> summary;
    if (!good.empty()) summary = summarize(good, config.overheads);
    write_cell(dir / name, config, e, summary);

    table << m << '\t' << est.n_particles << '\t' << est.resampler.a << '\t' << est.resampler.t_resample;
    if (!summary) {
      table << "\tnan\tnan\tnan\tnan\tnan\tnan\n";
      continue;
    }
    const auto& s = *summary;
    const std::size_t n = s.median_tau.size();
    std::size_t first = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (s.b_sd.median[i] <= prior_sd / config.fit_start_ratio) {
        first = i;
        break;
      }
    }
    std::size_t last = n;
    if (tau_max) last = saturation_index(s.median_tau, *tau_max).value_or(n);
    std::vector<std::vector<double>> x, y;
    for (const auto& t : good) {
      x.push_back(phase_time(t));
      auto eta = sensitivity(t);
      for (auto& v : eta) v *= v;
      y.push_back(std::move(eta));
    }
    table << '\t' << first << '\t' << last;
    if (last >= first + 3 && good.size() >= 10) {
      const auto rep = fit_scaling(x, y, first, last, derive_seed(config.seed, static_cast<std::uint64_t>(m)));
      table << '\t' << rep.exponent << '\t' << rep.exponent_err;
    } else if (last >= first + 3) {
      const auto fit = fit_loglog(std::span(s.median_t).subspan(first, last - first),
                                  std::span(s.median_eta).subspan(first, last - first));
      // eta^2 ~ T^k  <=>  eta ~ T^(k/2)
      table << '\t' << 2.0 * fit.slope << "\tnan";
    } else {
      progress("[" + label + "] fit window too short; exponent not reported");
      table << "\tnan\tnan";
    }
    table << '\t' << s.b_sd.median[n - 1] << '\t' << s.median_eta_bar[n - 1] << '\n';
  }
  const std::string text = table.str();
  write_atomic(dir / "scaling.tsv", [&](std::ostream& out) { out << text; });
  std::cout << text;
  return any_failed ? 1 : 0;
}

int cmd_fft(const std::string& path, const std::string& out) {
  const FringeDataset data = load_fringe(path);
  data.validate();
  const auto est = fft_estimate(data);
  json report{{"dataset", path},
              {"points", data.records.size()},
              {"omega", est.omega},
              {"b", est.omega / data.gamma},
              {"width", est.width},
              {"b_width", est.width / data.gamma},
              {"peak_bin", est.peak_bin},
              {"bin_omega", est.frequencies[est.peak_bin]}};
  if (!out.empty()) {
    fs::create_directories(out);
    write_json(fs::path(out) / "fft.json", report);
  }
  std::cout << report.dump() << '\n';
  return 0;
}

struct IngestOptions {
  std::string input;
  bool binary = false;
  bool synthesize = false;
  int points = 500;
  double dtau = 20e-9;
  std::uint32_t sequences = 100;
};

int cmd_ingest(const Common& c, const IngestOptions& o) {
  FringeDataset data;
  if (o.synthesize) {
    const RunConfig config = load_config(c, "ingest");
    if (config.backend != RunConfig::BackendKind::kSimulator) {
      throw ConfigError("field 'backend.kind' must be simulator to synthesise a fringe");
    }
    SimulatorConfig sim = config.simulator;
    sim.sequences_per_epoch = 1;
    data = synthesize_fringe(sim, o.points, o.dtau, o.sequences, config.seed);
  } else {
    if (o.input.empty()) throw ConfigError("ingest needs an input file or --synthesize");
    data = load_fringe(o.input);
  }
  data.validate();
  if (!c.out.empty()) {
    const fs::path target(c.out);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path partial = target;
    partial += ".partial";
    save_fringe(partial.string(), data, o.binary);
    fs::rename(partial, target);
  }
  std::uint64_t total = 0;
  for (const auto& r : data.records) total += r.total();
  json report{{"format", data.format == FringeDataset::Format::kCounts ? "counts" : "pl"},
              {"records", data.records.size()},
              {"dtau_ns", data.dtau_ns},
              {"m_total", data.m_total},
              {"n_bar", data.n_bar},
              {"n_max", data.n_max},
              {"total_counts", total}};
  std::cout << report.dump() << '\n';
  return 0;
}

int cmd_bench(const Common& c, std::vector<std::size_t> sizes, int reps) {
  if (sizes.empty()) sizes = {1000, 1500, 10000, 100000};
  if (reps < 1) throw ConfigError("--reps must be >= 1");
  const auto prior = Prior::uniform(0.0, kDefaultGamma * 100e-6);
  const LikelihoodModel model;
  const ResamplerConfig rs;
  std::ostringstream table;
  table << "n_particles\tmedian_s\tper_particle_s\n";
  for (std::size_t n : sizes) {
    if (n < 2) throw ConfigError("--particles entries must be >= 2");
    auto ens = init_ensemble(prior, n, c.seed.value_or(1));
    Rng rng(derive_seed(c.seed.value_or(1), n));
    std::uniform_real_distribution<double> tau_dist(0.1e-6, 10e-6);
    std::vector<double> times;
    for (int i = 0; i < reps; ++i) {
      const double tau = tau_dist(rng);
      const Outcome outcome = static_cast<Outcome>(rng() & 1U);
      const auto t0 = std::chrono::steady_clock::now();
      try {
        bayes_update(ens, outcome, tau, model);
      } catch (const DegenerateUpdateError&) {
        reset_to_prior(ens, prior);
      }
      maybe_resample(ens, rs);
      times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      if (i % 50 == 49) reset_to_prior(ens, prior);
    }
    const double med = median(times);
    table << n << '\t' << med << '\t' << med / static_cast<double>(n) << '\n';
    progress("[bench] " + std::to_string(n) + " particles done");
  }
  const std::string text = table.str();
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_atomic(fs::path(c.out) / "bench.tsv", [&](std::ostream& out) { out << text; });
  }
  std::cout << text;
  return 0;
}

void add_common(CLI::App* sub, Common& c, bool runs) {
  sub->add_option("--config", c.config_path, "JSON run configuration");
  sub->add_option("--seed", c.seed, "base seed (overrides the config)");
  if (runs) {
    sub->add_option("--runs", c.runs, "number of runs R")->check(CLI::PositiveNumber);
    sub->add_option("--epochs", c.epochs, "epochs per run")->check(CLI::PositiveNumber);
    sub->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
  }
  sub->add_option("--out", c.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian magnetic field learning with a single spin"};
  app.require_subcommand(1);

  Common common;
  auto* estimate = app.add_subcommand("estimate", "learn a static field");
  add_common(estimate, common, true);
  auto* track = app.add_subcommand("track", "follow a time-varying field with resets");
  add_common(track, common, true);
  auto* sweep = app.add_subcommand("sweep", "ensemble runs over M with scaling fits");
  add_common(sweep, common, true);

  std::string fft_path;
  auto* fft = app.add_subcommand("fft", "Fourier baseline of a fringe file");
  fft->add_option("dataset", fft_path, "fringe file")->required();
  fft->add_option("--out", common.out, "output directory");

  IngestOptions ingest_opts;
  auto* ingest = app.add_subcommand("ingest", "validate or convert a fringe file");
  ingest->add_option("input", ingest_opts.input, "fringe file (text or binary)");
  ingest->add_option("--config", common.config_path, "simulator configuration for --synthesize");
  ingest->add_option("--seed", common.seed, "seed for --synthesize");
  ingest->add_option("--out", common.out, "output file");
  ingest->add_flag("--binary", ingest_opts.binary, "write the binary form");
  ingest->add_flag("--synthesize", ingest_opts.synthesize, "simulate a fringe instead of reading one");
  ingest->add_option("--points", ingest_opts.points, "fringe points")->check(CLI::PositiveNumber);
  ingest->add_option("--dtau", ingest_opts.dtau, "tau step, seconds")->check(CLI::PositiveNumber);
  ingest->add_option("--sequences", ingest_opts.sequences, "sequences per point")->check(CLI::PositiveNumber);

  std::vector<std::size_t> bench_sizes;
  int bench_reps = 200;
  auto* bench = app.add_subcommand("bench", "time one update and resample step");
  bench->add_option("--particles", bench_sizes, "particle counts");
  bench->add_option("--reps", bench_reps, "repetitions per size");
  bench->add_option("--seed", common.seed, "seed");
  bench->add_option("--out", common.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (estimate->parsed()) return cmd_run(common, "estimate");
    if (track->parsed()) return cmd_run(common, "track");
    if (sweep->parsed()) return cmd_sweep(common);
    if (fft->parsed()) return cmd_fft(fft_path, common.out);
    if (ingest->parsed()) return cmd_ingest(common, ingest_opts);
    if (bench->parsed()) return cmd_bench(common, bench_sizes, bench_reps);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
