#pragma once
// Post-processing of run traces: sensitivities, the overhead time ledger,
// log-log scaling fits with bootstrap errors, percentile bands, the FFT
// baseline and readout-fidelity estimation.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mfl/experiments.hpp"
#include "mfl/model.hpp"
#include "mfl/overheads.hpp"
#include "mfl/tracking.hpp"

namespace mfl {

// ---------------------------------------------------------------------------
// Sensitivity

/// Cumulative phase-accumulation time T_i = sum_{j<=i} tau_j.
std::vector<double> phase_time(const RunTrace& trace);

/// eta_i = sigma(B_est)_i * sqrt(T_i), in T s^1/2.
std::vector<double> sensitivity(const RunTrace& trace);

/// Total time including overheads:
///   sum (tau_i + tau_comp_i) + N * M * (tau_las + tau_wait + tau_ttl + tau_mw).
/// `tau_comp` may be empty (treated as zero) or hold one value per tau.
double absolute_time(std::span<const double> taus, std::span<const double> tau_comp, int m,
                     const OverheadBudget& budget);

/// Cumulative absolute time per epoch. Uses the measured tau_comp where the
/// trace has it, otherwise n_part * budget.tau_comp_per_particle.
std::vector<double> absolute_time(const RunTrace& trace, const OverheadBudget& budget, int m, std::size_t n_part);

inline double sensitivity_from(double sigma_b, double time) { return sigma_b * std::sqrt(time); }

// ---------------------------------------------------------------------------
// Statistics

/// Linear-interpolated percentile (q in [0, 100]) of an unsorted sample.
double percentile(std::vector<double> values, double q);
double median(std::vector<double> values);

struct Bands {
  std::vector<double> median;
  std::vector<double> lower;  // 15.865th percentile
  std::vector<double> upper;  // 84.135th percentile
};

/// runs[r][i] is the value of run r at epoch i; all runs must have equal length.
Bands percentile_bands(const std::vector<std::vector<double>>& runs);

/// Resamples the R samples with replacement floor(0.1 R) times and returns the
/// population standard deviation of the resampled medians (0 for a single
/// resample).
double bootstrap_error(std::span<const double> samples, std::uint64_t seed);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least squares of log(y) against log(x). Needs >= 3 positive points.
LineFit fit_loglog(std::span<const double> x, std::span<const double> y);

struct ScalingReport {
  double exponent = 0.0;
  double exponent_err = 0.0;
  std::size_t fit_first = 0;  // inclusive epoch index
  std::size_t fit_last = 0;   // exclusive
  std::vector<double> median_x;
  Bands y;
  std::vector<double> run_exponents;
};

/// Fits the median y against the median x over epochs [first, last) and
/// bootstraps the per-run exponents for the error.
ScalingReport fit_scaling(const std::vector<std::vector<double>>& x_runs,
                          const std::vector<std::vector<double>>& y_runs, std::size_t first, std::size_t last,
                          std::uint64_t seed);

/// First index where the series reaches fraction * tau_max.
std::optional<std::size_t> saturation_index(std::span<const double> median_tau, double tau_max,
                                            double fraction = 0.95);

/// (estimate - truth)^2.
double quadratic_loss(double estimate, double truth);
/// Sum of ((estimate_k - truth_k) / scale_k)^2.
double quadratic_loss(std::span<const double> estimate, std::span<const double> truth,
                      std::span<const double> scale);

/// van Trees bound on E[(B_est - B)^2] per epoch for an ensemble of runs,
/// using the Fisher information averaged over the runs' tau sequences.
std::vector<double> van_trees_series(const std::vector<RunTrace>& runs, double prior_information,
                                     double inv_t2 = 0.0);

// ---------------------------------------------------------------------------
// FFT baseline

struct SpectrumEstimate {
  double omega = 0.0;  // rad/s, Lorentzian centre
  double width = 0.0;  // rad/s, Lorentzian half width at half maximum
  std::size_t peak_bin = 0;
  std::vector<double> frequencies;  // rad/s, bins 0..P/2 of the padded length P
  std::vector<double> power;
};

/// Spectrum of the mean-subtracted fringe sampled every dt seconds, zero-padded
/// to four times its length, and a Lorentzian fit over +-5 bins around the
/// dominant non-DC peak.
SpectrumEstimate fft_estimate(std::span<const double> fringe, double dt);
SpectrumEstimate fft_estimate(const FringeDataset& dataset);

struct Lorentzian {
  double amplitude = 0.0;
  double center = 0.0;
  double hwhm = 0.0;

  double operator()(double x) const {
    const double u = (x - center) / hwhm;
    return amplitude / (1.0 + u * u);
  }
};

/// Levenberg-Marquardt fit of a Lorentzian. The half width is kept >= min_hwhm.
Lorentzian fit_lorentzian(std::span<const double> x, std::span<const double> y, Lorentzian start,
                          double min_hwhm);

// ---------------------------------------------------------------------------
// Readout fidelity

/// Maximum-likelihood xi for outcomes recorded at known parameters under the
/// lossy likelihood L'(1) = xi * L(1).
double estimate_xi(std::span<const double> taus, std::span<const Outcome> outcomes, const ModelParams& truth);

// ---------------------------------------------------------------------------
// Ensemble report

struct EnsembleSummary {
  Bands b_sd;
  std::vector<double> median_tau;
  std::vector<double> median_t;
  std::vector<double> median_t_bar;
  std::vector<double> median_eta;
  std::vector<double> median_eta_bar;
};

EnsembleSummary summarize(const std::vector<RunTrace>& runs, const OverheadBudget& budget);

/// Tab-separated, one row per epoch:
/// epoch, b_sd_median, b_sd_lower, b_sd_upper, tau_median, T, T_bar, eta, eta_bar.
void write_summary(std::ostream& out, const EnsembleSummary& summary);

}  // namespace mfl
