#include "mfl/analysis.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>

#include "mfl/errors.hpp"

namespace mfl {

std::vector<double> phase_time(const RunTrace& trace) {
  std::vector<double> t;
  t.reserve(trace.records.size());
  double acc = 0.0;
  for (const auto& r : trace.records) {
    acc += r.tau;
    t.push_back(acc);
  }
  return t;
}

std::vector<double> sensitivity(const RunTrace& trace) {
  if (trace.records.empty()) throw DomainError("sensitivity of an empty trace");
  const auto t = phase_time(trace);
  std::vector<double> eta(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) eta[i] = sensitivity_from(trace.field_sd(i), t[i]);
  return eta;
}

double absolute_time(std::span<const double> taus, std::span<const double> tau_comp, int m,
                     const OverheadBudget& budget) {
  if (!tau_comp.empty() && tau_comp.size() != taus.size()) throw DomainError("tau_comp length mismatch");
  double total = 0.0;
  for (double t : taus) total += t;
  for (double t : tau_comp) total += t;
  return total + static_cast<double>(taus.size()) * m * budget.per_sequence();
}

std::vector<double> absolute_time(const RunTrace& trace, const OverheadBudget& budget, int m, std::size_t n_part) {
  std::vector<double> out;
  out.reserve(trace.records.size());
  const double default_comp = static_cast<double>(n_part) * budget.tau_comp_per_particle;
  const double per_epoch = m * budget.per_sequence();
  double acc = 0.0;
  for (const auto& r : trace.records) {
    acc += r.tau + r.tau_comp.value_or(default_comp) + per_epoch;
    out.push_back(acc);
  }
  return out;
}

// ---------------------------------------------------------------------------

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DomainError("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw DomainError("percentile outside [0, 100]");
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double v_lo = values[lo];
  if (hi == lo) return v_lo;
  const double v_hi = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return v_lo + (pos - static_cast<double>(lo)) * (v_hi - v_lo);
}

double median(std::vector<double> values) { return percentile(std::move(values), 50.0); }

Bands percentile_bands(const std::vector<std::vector<double>>& runs) {
  if (runs.empty()) throw DomainError("percentile bands need at least one run");
  const std::size_t n = runs.front().size();
  for (const auto& r : runs) {
    if (r.size() != n) throw DomainError("percentile bands need runs of equal length");
  }
  Bands b;
  b.median.resize(n);
  b.lower.resize(n);
  b.upper.resize(n);
  std::vector<double> column(runs.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < runs.size(); ++r) column[r] = runs[r][i];
    b.median[i] = percentile(column, 50.0);
    b.lower[i] = percentile(column, 15.865);
    b.upper[i] = percentile(column, 84.135);
  }
  return b;
}

double bootstrap_error(std::span<const double> samples, std::uint64_t seed) {
  const std::size_t r = samples.size();
  if (r < 10) throw DomainError("bootstrap needs at least 10 samples");
  const std::size_t repeats = r / 10;
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, r - 1);
  std::vector<double> medians;
  medians.reserve(repeats);
  std::vector<double> draw(r);
  for (std::size_t k = 0; k < repeats; ++k) {
    for (auto& d : draw) d = samples[pick(rng)];
    medians.push_back(median(draw));
  }
  const double mean = std::accumulate(medians.begin(), medians.end(), 0.0) / static_cast<double>(repeats);
  double var = 0.0;
  for (double m : medians) var += (m - mean) * (m - mean);
  return std::sqrt(var / static_cast<double>(repeats));
}

LineFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("fit_loglog: length mismatch");
  if (x.size() < 3) throw DomainError("fit_loglog needs at least 3 points");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const auto n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DomainError("fit_loglog needs positive values");
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  if (!(std::abs(denom) > 0.0)) throw DomainError("fit_loglog: x values are all equal");
  LineFit f;
  f.slope = (n * sxy - sx * sy) / denom;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

ScalingReport fit_scaling(const std::vector<std::vector<double>>& x_runs,
                          const std::vector<std::vector<double>>& y_runs, std::size_t first, std::size_t last,
                          std::uint64_t seed) {
  if (x_runs.size() != y_runs.size() || x_runs.empty()) throw DomainError("fit_scaling: run count mismatch");
  ScalingReport rep;
  rep.fit_first = first;
  rep.fit_last = last;
  rep.median_x = percentile_bands(x_runs).median;
  rep.y = percentile_bands(y_runs);
  if (last > rep.median_x.size() || last < first + 3) throw DomainError("fit_scaling: bad fit range");
  const auto span_of = [&](const std::vector<double>& v) {
    return std::span<const double>(v).subspan(first, last - first);
  };
  rep.exponent = fit_loglog(span_of(rep.median_x), span_of(rep.y.median)).slope;
  rep.run_exponents.reserve(x_runs.size());
  for (std::size_t r = 0; r < x_runs.size(); ++r) {
    rep.run_exponents.push_back(fit_loglog(span_of(x_runs[r]), span_of(y_runs[r])).slope);
  }
  rep.exponent_err = rep.run_exponents.size() >= 10 ? bootstrap_error(rep.run_exponents, seed) : 0.0;
  return rep;
}

std::optional<std::size_t> saturation_index(std::span<const double> median_tau, double tau_max, double fraction) {
  for (std::size_t i = 0; i < median_tau.size(); ++i) {
    if (median_tau[i] >= fraction * tau_max) return i;
  }
  return std::nullopt;
}

double quadratic_loss(double estimate, double truth) { return (estimate - truth) * (estimate - truth); }

double quadratic_loss(std::span<const double> estimate, std::span<const double> truth,
                      std::span<const double> scale) {
  if (estimate.size() != truth.size() || estimate.size() != scale.size()) {
    throw DomainError("quadratic_loss: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < estimate.size(); ++k) {
    const double d = (estimate[k] - truth[k]) / scale[k];
    acc += d * d;
  }
  return acc;
}

std::vector<double> van_trees_series(const std::vector<RunTrace>& runs, double prior_information, double inv_t2) {
  if (runs.empty()) throw DomainError("van Trees series needs runs");
  const std::size_t n = runs.front().records.size();
  for (const auto& r : runs) {
    if (r.records.size() != n) throw DomainError("van Trees series needs runs of equal length");
  }
  const double gamma = runs.front().header.gamma;
  std::vector<double> bound(n);
  double info = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double epoch_info = 0.0;
    for (const auto& r : runs) {
      const double tau = r.records[i].tau;
      const double g = gamma * tau * std::exp(-tau * inv_t2);
      epoch_info += g * g;
    }
    info += epoch_info / static_cast<double>(runs.size());
    bound[i] = 1.0 / (prior_information + info);
  }
  return bound;
}

// ---------------------------------------------------------------------------
// FFT

namespace {

constexpr int kFitHalfWindow = 5;
constexpr double kNoiseFloorFactor = 20.0;
constexpr std::size_t kMinFringePoints = 10;
// The fringe is zero-padded to this multiple of its length so that the fit
// window spans the main lobe even when the peak sits on a bin.
constexpr std::size_t kZeroPadFactor = 4;

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

std::vector<double> power_spectrum(std::span<const double> signal, std::size_t padded) {
  const int n = static_cast<int>(padded);
  const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / static_cast<double>(signal.size());
  std::vector<double> in(padded, 0.0);
  for (std::size_t i = 0; i < signal.size(); ++i) in[i] = signal[i] - mean;
  const int bins = n / 2 + 1;
  std::vector<std::complex<double>> out(static_cast<std::size_t>(bins));
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(n, in.data(), reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  std::vector<double> power(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) power[k] = std::norm(out[k]);
  return power;
}

}  // namespace

Lorentzian fit_lorentzian(std::span<const double> x, std::span<const double> y, Lorentzian start, double min_hwhm) {
  if (x.size() != y.size() || x.size() < 3) throw DomainError("Lorentzian fit needs >= 3 points");
  if (!(start.hwhm > 0.0) || !(min_hwhm > 0.0)) throw DomainError("Lorentzian widths must be positive");
  // Parameters (A, x0, log g); the log keeps the width positive.
  Eigen::Vector3d p(start.amplitude, start.center, std::log(std::max(start.hwhm, min_hwhm)));
  const double log_floor = std::log(min_hwhm);
  const auto n = static_cast<Eigen::Index>(x.size());

  auto residuals = [&](const Eigen::Vector3d& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    const double g = std::exp(q[2]);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = (x[static_cast<std::size_t>(i)] - q[1]) / g;
      const double den = 1.0 + u * u;
      r[i] = q[0] / den - y[static_cast<std::size_t>(i)];
      if (jac) {
        (*jac)(i, 0) = 1.0 / den;
        (*jac)(i, 1) = q[0] * 2.0 * u / (g * den * den);
        (*jac)(i, 2) = q[0] * 2.0 * u * u / (den * den);
      }
    }
    return r.squaredNorm();
  };

  Eigen::VectorXd r(n), r_trial(n);
  Eigen::MatrixXd jac(n, 3);
  double cost = residuals(p, r, &jac);
  double lambda = 1e-3;
  for (int iter = 0; iter < 200; ++iter) {
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    const Eigen::Vector3d grad = jac.transpose() * r;
    Eigen::Matrix3d a = jtj;
    a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
    const Eigen::Vector3d step = a.ldlt().solve(-grad);
    Eigen::Vector3d trial = p + step;
    trial[2] = std::max(trial[2], log_floor);
    const double trial_cost = residuals(trial, r_trial, nullptr);
    if (std::isfinite(trial_cost) && trial_cost < cost) {
      const double gain = cost - trial_cost;
      p = trial;
      cost = residuals(p, r, &jac);
      lambda = std::max(lambda * 0.3, 1e-12);
      if (gain <= 1e-14 * (cost + 1e-300) || step.norm() < 1e-12) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  return {p[0], p[1], std::exp(p[2])};
}

SpectrumEstimate fft_estimate(std::span<const double> fringe, double dt) {
  if (fringe.size() < kMinFringePoints) {
    throw DomainError("FFT estimate needs at least 10 fringe points, got " + std::to_string(fringe.size()));
  }
  if (!(dt > 0.0)) throw DomainError("FFT sampling step must be positive");
  const auto [lo_it, hi_it] = std::minmax_element(fringe.begin(), fringe.end());
  if (*hi_it - *lo_it <= 1e-12 * std::max(std::abs(*lo_it), std::abs(*hi_it))) {
    throw NoPeakError("flat fringe has no spectral peak");
  }
  SpectrumEstimate est;
  const std::size_t padded = fringe.size() * kZeroPadFactor;
  est.power = power_spectrum(fringe, padded);
  const std::size_t bins = est.power.size();
  const double bin_width = 2.0 * std::numbers::pi / (static_cast<double>(padded) * dt);
  est.frequencies.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) est.frequencies[k] = static_cast<double>(k) * bin_width;

  const auto peak = std::max_element(est.power.begin() + 1, est.power.end());
  est.peak_bin = static_cast<std::size_t>(peak - est.power.begin());
  const double peak_power = *peak;
  std::vector<double> ac(est.power.begin() + 1, est.power.end());
  const double floor = median(ac);
  if (!(peak_power > 0.0) || peak_power < kNoiseFloorFactor * floor) {
    throw NoPeakError("no spectral peak above the noise floor");
  }

  const auto k0 = static_cast<std::ptrdiff_t>(est.peak_bin);
  const auto lo = std::max<std::ptrdiff_t>(1, k0 - kFitHalfWindow);
  const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(bins) - 1, k0 + kFitHalfWindow);
  std::vector<double> xs, ys;
  for (auto k = lo; k <= hi; ++k) {
    xs.push_back(static_cast<double>(k - k0));
    ys.push_back(est.power[static_cast<std::size_t>(k)] / peak_power);
  }
  // Start from the discrete maximum with the half-maximum crossing as width.
  double half = 0.5;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (xs[i] > 0.0 && ys[i] < 0.5) {
      half = std::max(0.5, xs[i]);
      break;
    }
  }
  Lorentzian fit;
  if (xs.size() >= 3) {
    fit = fit_lorentzian(xs, ys, {1.0, 0.0, half}, 1e-3);
    if (std::abs(fit.center) > kFitHalfWindow) fit.center = 0.0;
  } else {
    fit = {1.0, 0.0, half};
  }
  est.omega = (static_cast<double>(k0) + fit.center) * bin_width;
  est.width = fit.hwhm * bin_width;
  return est;
}

SpectrumEstimate fft_estimate(const FringeDataset& dataset) {
  dataset.validate();
  return fft_estimate(dataset.mean_signal(), dataset.dtau_ns * 1e-9);
}

// ---------------------------------------------------------------------------

double estimate_xi(std::span<const double> taus, std::span<const Outcome> outcomes, const ModelParams& truth) {
  if (taus.size() != outcomes.size() || taus.empty()) throw DomainError("estimate_xi: bad input lengths");
  std::vector<double> p1(taus.size());
  std::size_t ones = 0;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    p1[i] = likelihood_ramsey(truth, taus[i], 1);
    ones += outcomes[i] == 1 ? 1 : 0;
  }
  if (ones == 0) return 0.0;
  // The log-likelihood is concave in xi; bisect on its derivative.
  auto score = [&](double xi) {
    double s = 0.0;
    for (std::size_t i = 0; i < taus.size(); ++i) {
      if (outcomes[i] == 1) s += 1.0 / xi;
      else s -= p1[i] / (1.0 - xi * p1[i]);
    }
    return s;
  };
  double lo = 0.0, hi = 1.0;
  const double at_one = score(1.0);
  if (std::isfinite(at_one) && at_one >= 0.0) return 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double s = score(mid);
    if (std::isfinite(s) && s > 0.0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------

EnsembleSummary summarize(const std::vector<RunTrace>& runs, const OverheadBudget& budget) {
  if (runs.empty()) throw DomainError("summary needs at least one run");
  std::vector<std::vector<double>> b_sd, tau, t, t_bar, eta, eta_bar;
  for (const auto& run : runs) {
    std::vector<double> sd, ta;
    for (std::size_t i = 0; i < run.records.size(); ++i) {
      sd.push_back(run.field_sd(i));
      ta.push_back(run.records[i].tau);
    }
    auto tt = phase_time(run);
    auto tb = absolute_time(run, budget, run.header.sequences_per_epoch, run.header.n_particles);
    std::vector<double> e(sd.size()), eb(sd.size());
    for (std::size_t i = 0; i < sd.size(); ++i) {
      e[i] = sensitivity_from(sd[i], tt[i]);
      eb[i] = sensitivity_from(sd[i], tb[i]);
    }
    b_sd.push_back(std::move(sd));
    tau.push_back(std::move(ta));
    t.push_back(std::move(tt));
    t_bar.push_back(std::move(tb));
    eta.push_back(std::move(e));
    eta_bar.push_back(std::move(eb));
  }
  EnsembleSummary s;
  s.b_sd = percentile_bands(b_sd);
  s.median_tau = percentile_bands(tau).median;
  s.median_t = percentile_bands(t).median;
  s.median_t_bar = percentile_bands(t_bar).median;
  s.median_eta = percentile_bands(eta).median;
  s.median_eta_bar = percentile_bands(eta_bar).median;
  return s;
}

void write_summary(std::ostream& out, const EnsembleSummary& s) {
  out << "epoch\tb_sd_median\tb_sd_lower\tb_sd_upper\ttau_median\tT\tT_bar\teta\teta_bar\n";
  char buf[512];
  for (std::size_t i = 0; i < s.b_sd.median.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\n", i + 1,
                  s.b_sd.median[i], s.b_sd.lower[i], s.b_sd.upper[i], s.median_tau[i], s.median_t[i],
                  s.median_t_bar[i], s.median_eta[i], s.median_eta_bar[i]);
    out << buf;
  }
}

}  // namespace mfl
