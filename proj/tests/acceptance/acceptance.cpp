// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mfl/analysis.hpp"
#include "mfl/errors.hpp"
#include "mfl/heuristics.hpp"
#include "mfl/inference.hpp"
#include "mfl/tracking.hpp"

using namespace mfl;

namespace {

constexpr std::uint64_t kSeed = 1;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> column(const RunTrace& tr, double (*get)(const EpochRecord&)) {
  std::vector<double> v;
  v.reserve(tr.records.size());
  for (const auto& r : tr.records) v.push_back(get(r));
  return v;
}

// Least-squares slope of y against x.
double slope(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

// ---------------------------------------------------------------------------
// 1, 2, 10: one ensemble of noiseless single-parameter runs.

struct ScalingEnsemble {
  std::vector<RunTrace> runs;
  std::vector<double> truth;  // tesla
  double prior_sd = 0.0;      // tesla
  double tau_max = 10e-6;
  double b_max = 100e-6;
  double seconds = 0.0;
};

ScalingEnsemble scaling_ensemble() {
  const auto t0 = std::chrono::steady_clock::now();
  ScalingEnsemble ens;
  PhysicalConstants c;
  const int runs = 100;
  const auto rule = particle_count_rule(1, 1);
  EstimationConfig cfg;
  cfg.epochs = 150;
  cfg.n_particles = rule.n_part;
  cfg.heuristic.tau_max = ens.tau_max;
  cfg.outcome = {OutcomeRule::kMajority, {0.5, 1.0}};
  cfg.resampler = {0.98, rule.t_resample};
  const Prior prior = Prior::uniform(0.0, c.field_to_omega(ens.b_max));
  ens.prior_sd = ens.b_max / std::sqrt(12.0);
  for (int r = 0; r < runs; ++r) {
    Rng pick(derive_seed(kSeed, 1000 + r));
    const double b = std::uniform_real_distribution<double>(0.0, ens.b_max)(pick);
    SimulatorConfig sc;
    sc.waveform = FieldWaveform::constant(c.field_to_omega(b));
    sc.seed = derive_seed(kSeed, 2000 + r);
    SimulatorBackend backend(sc);
    ens.runs.push_back(run_estimation(backend, LikelihoodModel(1.0), prior, cfg, derive_seed(kSeed, r)));
    ens.truth.push_back(b);
  }
  ens.seconds = seconds_since(t0);
  return ens;
}

struct Window {
  std::size_t first = 0;
  std::size_t sat = 0;
  std::vector<double> median_sd;
};

// Fit window: from the first epoch where the median sigma(B) is below a fifth
// of the prior width to the epoch where the median tau reaches 0.95 tau_max.
std::optional<Window> fit_window(const ScalingEnsemble& ens) {
  std::vector<std::vector<double>> sd, tau;
  for (const auto& tr : ens.runs) {
    std::vector<double> s;
    for (std::size_t i = 0; i < tr.records.size(); ++i) s.push_back(tr.field_sd(i));
    sd.push_back(s);
    tau.push_back(column(tr, [](const EpochRecord& r) { return r.tau; }));
  }
  Window w;
  w.median_sd = percentile_bands(sd).median;
  const auto sat = saturation_index(percentile_bands(tau).median, ens.tau_max);
  if (!sat) return std::nullopt;
  w.sat = *sat;
  while (w.first < w.median_sd.size() && w.median_sd[w.first] > ens.prior_sd / 5.0) ++w.first;
  if (w.first + 3 > w.sat) return std::nullopt;
  return w;
}

Verdict criterion1(const ScalingEnsemble& ens) {
  const auto w = fit_window(ens);
  if (!w) return {false, "no pre-saturation window"};
  std::vector<std::vector<double>> t, eta2;
  for (const auto& tr : ens.runs) {
    t.push_back(phase_time(tr));
    auto e = sensitivity(tr);
    for (auto& x : e) x *= x;
    eta2.push_back(e);
  }
  const auto rep = fit_scaling(t, eta2, w->first, w->sat, derive_seed(kSeed, 9));
  const bool ok = rep.exponent >= -1.1 && rep.exponent <= -0.9 && ens.seconds < 120.0;
  return {ok, fmt("exponent %.3f +- %.3f over epochs [%zu, %zu), %.1f s", rep.exponent, rep.exponent_err,
                  w->first, w->sat, ens.seconds)};
}

Verdict criterion2(const ScalingEnsemble& ens) {
  const auto w = fit_window(ens);
  if (!w) return {false, "no pre-saturation window"};
  std::vector<double> x_pre, y_pre, x_post, y_post;
  for (std::size_t i = 0; i < w->median_sd.size(); ++i) {
    const double y = std::log(w->median_sd[i]);
    if (i >= w->first && i < w->sat) {
      x_pre.push_back(static_cast<double>(i));
      y_pre.push_back(y);
    } else if (i >= w->sat) {
      x_post.push_back(static_cast<double>(i));
      y_post.push_back(y);
    }
  }
  if (x_post.size() < 3) return {false, "too few saturated epochs"};
  const double pre = slope(x_pre, y_pre);
  const double post = slope(x_post, y_post);
  const double ratio = std::abs(pre) / std::abs(post);
  return {ratio >= 5.0, fmt("log sigma slope %.4f before, %.4f after saturation (ratio %.1f)", pre, post, ratio)};
}

Verdict criterion10(const ScalingEnsemble& ens) {
  const double j_pi = 1.0 / (ens.prior_sd * ens.prior_sd);
  const auto bound = van_trees_series(ens.runs, j_pi);
  const std::size_t n = ens.runs.size();
  std::size_t checked = 0, violations = 0;
  double worst = 0.0;
  for (std::size_t i = 9; i < bound.size(); i += 10) {
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double l = quadratic_loss(ens.runs[r].field_mean(i), ens.truth[r]);
      sum += l;
      sum2 += l * l;
    }
    const double mse = sum / static_cast<double>(n);
    const double var = std::max(0.0, sum2 / static_cast<double>(n) - mse * mse);
    const double se = std::sqrt(var / static_cast<double>(n - 1));
    ++checked;
    if (mse + 5.0 * se < bound[i]) ++violations;
    worst = std::max(worst, bound[i] / (mse + 5.0 * se));
  }
  return {violations == 0,
          fmt("%zu of %zu checkpoints below the bound, max bound/(MSE+5se) %.3g", violations, checked, worst)};
}

// ---------------------------------------------------------------------------
// 3: grid posterior.

double oracle_p1(double omega, double tau) {
  const double s = std::sin(0.5 * omega * tau);
  return s * s;
}

Verdict criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  PhysicalConstants c;
  const std::size_t n = 200;
  const double hi = c.field_to_omega(100e-6);
  std::vector<double> grid(n), w(n, 1.0 / static_cast<double>(n));
  for (std::size_t j = 0; j < n; ++j) grid[j] = hi * (static_cast<double>(j) + 0.5) / static_cast<double>(n);
  ParticleEnsemble ens(grid, {}, w, derive_seed(kSeed, 30));
  SimulatorConfig sc;
  sc.waveform = FieldWaveform::constant(c.field_to_omega(37.3e-6));
  sc.seed = derive_seed(kSeed, 31);
  SimulatorBackend backend(sc);
  HeuristicConfig hc;
  hc.tau_max = 10e-6;
  Rng design(derive_seed(kSeed, 32));
  const LikelihoodModel model(1.0);
  std::vector<double> taus;
  std::vector<Outcome> outs;
  for (int epoch = 1; epoch <= 20; ++epoch) {
    const double tau = choose_tau(epoch, ens, hc, design).tau;
    const auto d = backend.next(tau);
    const Outcome o = outcome_majority(d.photon_count, 0.5);
    bayes_update(ens, o, d.tau_actual, model);
    taus.push_back(d.tau_actual);
    outs.push_back(o);
  }
  std::vector<double> logw(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < taus.size(); ++k) {
      const double p1 = oracle_p1(grid[j], taus[k]);
      logw[j] += std::log(outs[k] == 1 ? p1 : 1.0 - p1);
    }
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  double z = 0.0;
  for (auto& v : logw) z += (v = std::exp(v - top));
  double mean = 0.0;
  for (std::size_t j = 0; j < n; ++j) mean += logw[j] / z * grid[j];
  double var = 0.0;
  for (std::size_t j = 0; j < n; ++j) var += logw[j] / z * (grid[j] - mean) * (grid[j] - mean);
  const auto m = posterior_moments(ens);
  const double dm = std::abs(m.mean(0) - mean) / std::abs(mean);
  const double dv = std::abs(m.covariance(0, 0) - var) / var;
  const double secs = seconds_since(t0);
  return {dm <= 1e-10 && dv <= 1e-10 && secs < 1.0,
          fmt("relative mean error %.2e, variance error %.2e, %.3f s", dm, dv, secs)};
}

// ---------------------------------------------------------------------------
// 4: lossy readout.

Verdict criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  PhysicalConstants c;
  const int m = 8;
  const double p_click = 0.2;
  const double b_max = 100e-6;
  const double tau_max = 10e-6;
  // n_max above the mean bright count leaves P(1) short of L(1).
  const OutcomeExtractor extractor{OutcomeRule::kProbabilistic, {0.0, 2.0}};

  SimulatorConfig cal;
  const double omega_cal = c.field_to_omega(40e-6);
  cal.waveform = FieldWaveform::constant(omega_cal);
  cal.sequences_per_epoch = m;
  cal.p_click_1 = p_click;
  cal.seed = derive_seed(kSeed, 40);
  SimulatorBackend cal_backend(cal);
  Rng rng(derive_seed(kSeed, 41));
  std::vector<double> taus;
  std::vector<Outcome> outs;
  for (int i = 0; i < 5000; ++i) {
    const auto d = cal_backend.next(std::uniform_real_distribution<double>(0.0, tau_max)(rng));
    taus.push_back(d.tau_actual);
    outs.push_back(extractor(d.photon_count, rng));
  }
  const double xi = estimate_xi(taus, outs, ModelParams{omega_cal, std::nullopt});

  const auto rule = particle_count_rule(m, m);
  EstimationConfig cfg;
  cfg.epochs = 500;
  cfg.n_particles = rule.n_part;
  cfg.heuristic.tau_max = tau_max;
  cfg.outcome = extractor;
  cfg.resampler = {rule.a, rule.t_resample};
  const Prior prior = Prior::uniform(0.0, c.field_to_omega(b_max));
  auto median_error = [&](double model_xi) {
    std::vector<double> err;
    for (int r = 0; r < 100; ++r) {
      Rng pick(derive_seed(kSeed, 4000 + r));
      const double truth = std::uniform_real_distribution<double>(0.1, 0.9)(pick) * c.field_to_omega(b_max);
      SimulatorConfig sc = cal;
      sc.waveform = FieldWaveform::constant(truth);
      sc.seed = derive_seed(kSeed, 4200 + r);
      SimulatorBackend backend(sc);
      const auto tr = run_estimation(backend, LikelihoodModel(model_xi), prior, cfg, derive_seed(kSeed, 4400 + r));
      err.push_back(std::abs(tr.records.back().omega_mean - truth) / truth);
    }
    return median(err);
  };
  const double corrected = median_error(xi);
  const double plain = median_error(1.0);
  const double secs = seconds_since(t0);
  return {corrected < 0.03 && plain >= 3.0 * corrected && secs < 300.0,
          fmt("fitted xi %.3f, median error %.4f corrected vs %.4f uncorrected (x%.1f), %.1f s", xi, corrected,
              plain, plain / corrected, secs)};
}

// ---------------------------------------------------------------------------
// 5: overhead ledger.

Verdict criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  PhysicalConstants c;
  const int m = 8;
  EstimationConfig cfg;
  cfg.epochs = 500;
  cfg.n_particles = 2000;
  cfg.heuristic.tau_max = 10e-6;
  cfg.outcome = {OutcomeRule::kMajority, {0.5 * m, static_cast<double>(m)}};
  SimulatorConfig sc;
  sc.waveform = FieldWaveform::constant(c.field_to_omega(42e-6));
  sc.sequences_per_epoch = m;
  sc.seed = derive_seed(kSeed, 50);
  SimulatorBackend backend(sc);
  const auto tr = run_estimation(backend, LikelihoodModel(1.0), Prior::uniform(0.0, c.field_to_omega(100e-6)), cfg,
                                 derive_seed(kSeed, 51));
  const auto taus = column(tr, [](const EpochRecord& r) { return r.tau; });
  const OverheadBudget budget;
  const double t_bar = absolute_time(taus, {}, m, budget);
  const double eta_bar = sensitivity_from(0.45e-6, t_bar);
  const double rel = std::abs(eta_bar - 60e-9) / 60e-9;
  const double secs = seconds_since(t0);
  return {rel <= 0.15 && secs < 1.0,
          fmt("T_bar %.2f ms (sum tau %.2f ms), eta_bar %.1f nT s^1/2 (%.0f%% off), %.2f s", t_bar * 1e3,
              std::accumulate(taus.begin(), taus.end(), 0.0) * 1e3, eta_bar * 1e9, rel * 100.0, secs)};
}

// ---------------------------------------------------------------------------
// 6, 7: tracking.

Verdict criterion6() {
  const auto t0 = std::chrono::steady_clock::now();
  PhysicalConstants c;
  const double b0 = 10e-6, b1 = 300e-6, jump = 0.03;
  TrackerConfig cfg;
  cfg.base.epochs = 200;
  cfg.base.n_particles = 2000;
  cfg.base.heuristic.tau_max = 10e-6;
  cfg.base.resampler = {0.98, 0.5};
  cfg.r_resample = 4;
  cfg.p_reset = 20;
  const Prior prior = Prior::uniform(0.0, c.field_to_omega(1.3 * b1));
  const int runs = 100, window = 15;
  int detected = 0, usable = 0;
  std::vector<std::vector<double>> err;
  for (int r = 0; r < runs; ++r) {
    SimulatorConfig sc;
    sc.waveform = FieldWaveform::stepwise({{0.0, c.field_to_omega(b0)}, {jump, c.field_to_omega(b1)}});
    sc.sequences_per_epoch = 1000;
    sc.seed = derive_seed(kSeed, 6000 + r);
    cfg.base.outcome.calibration = calibrate(sc, 200, 1e-6, derive_seed(kSeed, 6200 + r));
    SimulatorBackend backend(sc);
    const auto tr = run_tracking(backend, LikelihoodModel(1.0), prior, cfg, derive_seed(kSeed, 6400 + r));
    std::size_t k = 0;
    while (k < tr.records.size() && tr.records[k].t_start < jump) ++k;
    if (k + window >= tr.records.size()) continue;
    ++usable;
    bool fired = false;
    for (std::size_t i = k; i < k + 10; ++i) fired = fired || tr.records[i].reset;
    detected += fired ? 1 : 0;
    std::vector<double> e;
    for (std::size_t i = k; i <= k + window; ++i) {
      e.push_back(std::abs(tr.records[i].omega_mean - *tr.records[i].true_omega) / *tr.records[i].true_omega);
    }
    err.push_back(e);
  }
  if (err.empty()) return {false, "jump never reached"};
  const auto med = percentile_bands(err).median;
  std::optional<std::size_t> settle;
  for (std::size_t i = 0; i < med.size() && !settle; ++i) {
    if (med[i] < 0.05) settle = i;
  }
  const double frac = static_cast<double>(detected) / runs;
  const double secs = seconds_since(t0);
  const bool ok = settle && usable == runs && frac >= 0.9 && secs < 120.0;
  return {ok, fmt("reset at the jump in %d/%d runs, median error %s, %.1f s", detected, runs,
                  settle ? fmt("below 5%% after %zu epochs", *settle).c_str() : "never below 5%", secs)};
}

struct TrackingError {
  double nms = 0.0;
  double baseline = 0.0;
};

TrackingError sinusoid_tracking(double xi) {
  PhysicalConstants c;
  const double b0 = 50e-6, w = 0.1 * b0;
  const double nu = 18e-3 / w;  // peak slope w * nu = 18 uT/ms
  TrackerConfig cfg;
  cfg.base.epochs = 500;
  cfg.base.n_particles = 2000;
  cfg.base.heuristic.tau_max = 1e-3;
  cfg.base.outcome = {OutcomeRule::kMajority, {0.5, 1.0}};
  cfg.base.resampler = {0.9, 0.5};
  cfg.r_resample = 2;
  cfg.p_reset = 3;
  const Prior prior = Prior::uniform(0.0, c.field_to_omega(2.0 * b0));
  std::vector<double> nms, base;
  for (int r = 0; r < 100; ++r) {
    SimulatorConfig sc;
    sc.waveform = FieldWaveform::sinusoid(c.field_to_omega(b0), c.field_to_omega(w), nu);
    sc.p_click_1 = xi;
    sc.seed = derive_seed(kSeed, 7000 + r);
    SimulatorBackend backend(sc);
    const auto tr = run_tracking(backend, LikelihoodModel(xi), prior, cfg, derive_seed(kSeed, 7200 + r));
    nms.push_back(nms_error(tr, sc.waveform));
    std::vector<double> truth;
    for (const auto& rec : tr.records) truth.push_back(sc.waveform.omega_at(rec.t_start));
    const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
    const std::vector<double> constant(truth.size(), mean);
    base.push_back(nms_error(constant, truth, sc.waveform.nominal_omega()));
  }
  return {median(nms), median(base)};
}

Verdict criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto ideal = sinusoid_tracking(1.0);
  const auto lossy = sinusoid_tracking(0.88);
  const double secs = seconds_since(t0);
  return {ideal.nms < 0.03 && lossy.nms < lossy.baseline && secs < 300.0,
          fmt("median nms %.4f binomial, %.4f with xi = 0.88, constant-estimate baseline %.4f, %.1f s", ideal.nms,
              lossy.nms, lossy.baseline, secs)};
}

// ---------------------------------------------------------------------------
// 8: FFT comparison.

Verdict criterion8() {
  const auto t0 = std::chrono::steady_clock::now();
  PhysicalConstants c;
  const double truth = c.field_to_omega(100e-6);
  SimulatorConfig sc;
  sc.waveform = FieldWaveform::constant(truth);
  auto data = std::make_shared<FringeDataset>(synthesize_fringe(sc, 500, 20e-9, 1000, derive_seed(kSeed, 80)));
  const auto fft = fft_estimate(*data);
  const int m = 10;
  EstimationConfig cfg;
  cfg.epochs = 500;
  cfg.n_particles = 2000;
  cfg.heuristic.tau_min = 20e-9;
  cfg.heuristic.tau_max = 10e-6;
  cfg.outcome = {OutcomeRule::kMajority, calibrate(*data, m, 500, derive_seed(kSeed, 81))};
  cfg.resampler = {0.98, 0.5};
  std::vector<double> sd, err;
  for (int r = 0; r < 20; ++r) {
    ReplayBackend backend(data, m, SweepSelection::kRandom, OverheadBudget::none(), derive_seed(kSeed, 8000 + r));
    const auto tr = run_estimation(backend, LikelihoodModel(1.0), Prior::uniform(0.0, 2.0 * truth), cfg,
                                   derive_seed(kSeed, 8200 + r));
    sd.push_back(tr.records.back().omega_sd);
    err.push_back(std::abs(tr.records.back().omega_mean - truth));
  }
  const double ratio = median(sd) / fft.width;
  const double secs = seconds_since(t0);
  return {ratio <= 0.1 && secs < 30.0,
          fmt("MFL sigma %.3g rad/s vs FFT HWHM %.3g rad/s (ratio %.3f), MFL |error| %.3g, FFT |error| %.3g, %.1f s",
              median(sd), fft.width, ratio, median(err), std::abs(fft.omega - truth), secs)};
}

// ---------------------------------------------------------------------------
// 9: joint (B, T2*) learning.

Verdict criterion9() {
  const auto t0 = std::chrono::steady_clock::now();
  PhysicalConstants c;
  const double t2 = 16e-6;
  const Prior prior = Prior::uniform(0.0, c.field_to_omega(20e-6), 1.0 / 40e-6, 1.0 / 8e-6);
  EstimationConfig cfg;
  cfg.epochs = 500;
  cfg.n_particles = 2000;
  cfg.heuristic.tau_max = 2.0 * t2;
  cfg.heuristic.multiparam_activation_epoch = 100;
  cfg.outcome = {OutcomeRule::kMajority, {0.5, 1.0}};
  cfg.resampler = {0.98, 0.5};
  std::vector<std::vector<double>> norms;
  std::vector<double> t2_est;
  int failed = 0;
  for (int r = 0; r < 100; ++r) {
    Rng pick(derive_seed(kSeed, 9000 + r));
    const double b = std::uniform_real_distribution<double>(5e-6, 15e-6)(pick);
    SimulatorConfig sc;
    sc.waveform = FieldWaveform::constant(c.field_to_omega(b));
    sc.inv_t2 = 1.0 / t2;
    sc.seed = derive_seed(kSeed, 9200 + r);
    SimulatorBackend backend(sc);
    const auto tr = run_estimation(backend, LikelihoodModel(1.0), prior, cfg, derive_seed(kSeed, 9400 + r));
    if (tr.error) {
      ++failed;
      continue;
    }
    norms.push_back(column(tr, [](const EpochRecord& e) { return e.cov_norm; }));
    t2_est.push_back(1.0 / tr.records.back().inv_t2_mean);
  }
  if (norms.empty()) return {false, "every run stopped early"};
  const auto med = percentile_bands(norms).median;
  std::vector<double> windows;
  for (std::size_t w = 100; w + 50 <= med.size(); w += 50) {
    windows.push_back(std::accumulate(med.begin() + static_cast<std::ptrdiff_t>(w),
                                      med.begin() + static_cast<std::ptrdiff_t>(w + 50), 0.0) /
                      50.0);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < windows.size(); ++i) monotone = monotone && windows[i] <= windows[i - 1];
  const double t2_med = median(t2_est);
  const bool within = t2_med >= 0.5 * t2 && t2_med <= 2.0 * t2;
  const double secs = seconds_since(t0);
  std::string trail;
  for (double v : windows) trail += fmt(" %.3f", v);
  return {monotone && within && failed == 0 && secs < 300.0,
          fmt("window norms%s, median T2* %.1f us, %d runs stopped early, %.1f s", trail.c_str(), t2_med * 1e6,
              failed, secs)};
}

// ---------------------------------------------------------------------------
// 11: update cost.

double median_update_seconds(std::size_t n, int reps) {
  PhysicalConstants c;
  const Prior prior = Prior::uniform(0.0, c.field_to_omega(100e-6));
  auto ens = init_ensemble(prior, n, derive_seed(kSeed, 110 + n));
  SimulatorConfig sc;
  sc.waveform = FieldWaveform::constant(c.field_to_omega(42e-6));
  sc.seed = derive_seed(kSeed, 111);
  SimulatorBackend backend(sc);
  HeuristicConfig hc;
  hc.tau_max = 10e-6;
  Rng design(derive_seed(kSeed, 112));
  const LikelihoodModel model(1.0);
  const ResamplerConfig rc{0.98, 0.5};
  std::vector<double> times;
  for (int i = 0; i < reps; ++i) {
    const double tau = pgh_single(ens, hc, design);
    const auto d = backend.next(tau);
    const Outcome o = outcome_majority(d.photon_count, 0.5);
    const auto t0 = std::chrono::steady_clock::now();
    bayes_update(ens, o, d.tau_actual, model);
    maybe_resample(ens, rc);
    times.push_back(seconds_since(t0));
  }
  return median(times);
}

Verdict criterion11() {
  const double t1500 = median_update_seconds(1500, 400);
  const std::vector<double> sizes{1e3, 1e4, 1e5};
  std::vector<double> x, y;
  for (double n : sizes) {
    x.push_back(std::log(n));
    y.push_back(std::log(median_update_seconds(static_cast<std::size_t>(n), n > 5e4 ? 60 : 200)));
  }
  const double k = slope(x, y);
  return {t1500 < 1e-3 && k >= 0.8 && k <= 1.2,
          fmt("median %.3f ms at 1500 particles, cost ~ n^%.3f from 1e3 to 1e5", t1500 * 1e3, k)};
}

// ---------------------------------------------------------------------------
// 12: property suites.

Verdict criterion12() {
  const std::string list = MFL_UNIT_TEST_BINARIES;
  std::vector<std::string> bins;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto end = list.find(',', start);
    const auto item = list.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!item.empty()) bins.push_back(item);
    if (end == std::string::npos) break;
    start = end + 1;
  }
  std::string failed;
  for (const auto& b : bins) {
    const std::string cmd = "\"" + b + "\" > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) failed += " " + b.substr(b.find_last_of('/') + 1);
  }
  return {failed.empty() && !bins.empty(),
          failed.empty() ? fmt("%zu suites green", bins.size()) : "failing:" + failed};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, auto&& check) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s  %2d %s: %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
  };

  const auto ens = scaling_ensemble();
  report(1, "Heisenberg scaling", [&] { return criterion1(ens); });
  report(2, "plateau after saturation", [&] { return criterion2(ens); });
  report(3, "grid posterior equivalence", criterion3);
  report(4, "lossy readout correction", criterion4);
  report(5, "absolute sensitivity ledger", criterion5);
  report(6, "tracking step response", criterion6);
  report(7, "dynamic tracking error", criterion7);
  report(8, "FFT comparison", criterion8);
  report(9, "multi-parameter learning", criterion9);
  report(10, "van Trees consistency", [&] { return criterion10(ens); });
  report(11, "update cost", criterion11);
  report(12, "property suites", criterion12);
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
