#pragma once
// The epoch loop: choose tau, measure, extract an outcome, update, resample.
// run_tracking adds change detection with a reset to the initial prior.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mfl/experiments.hpp"
#include "mfl/heuristics.hpp"
#include "mfl/inference.hpp"

namespace mfl {

struct EstimationConfig {
  int epochs = 100;
  std::size_t n_particles = 1500;
  ResamplerConfig resampler;
  HeuristicConfig heuristic;
  OutcomeExtractor outcome;
  // Record the measured update cost per epoch. Off by default so that traces
  // are reproducible byte for byte.
  bool measure_comp_time = false;

  void validate() const;
};

struct TrackerConfig {
  EstimationConfig base;
  int r_resample = 5;
  int p_reset = 3;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double tau_requested = 0.0;
  double tau = 0.0;  // tau actually delivered by the backend
  double photon_count = 0.0;
  Outcome outcome = 0;
  double omega_mean = 0.0;
  double omega_sd = 0.0;
  double inv_t2_mean = 0.0;  // zero for 1-D models
  double inv_t2_sd = 0.0;
  double cov_norm = 0.0;     // normalised (B, T2*) Frobenius norm; zero for 1-D
  double ess = 0.0;          // after the update, before resampling
  bool resampled = false;
  bool reset = false;
  bool noise_skipped = false;
  HeuristicMode mode = HeuristicMode::kSingle;
  double t_start = 0.0;      // backend clock at the start of the epoch
  double wall_clock = 0.0;   // backend clock after the epoch
  std::optional<double> tau_comp;
  std::optional<double> true_omega;
};

struct TraceHeader {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string mode;  // "estimate" or "track"
  std::size_t n_particles = 0;
  int sequences_per_epoch = 1;
  int epochs = 0;
  double xi = 1.0;
  double a = 0.0;
  double t_resample = 0.0;
  std::optional<int> r_resample;
  std::optional<int> p_reset;
  double gamma = kDefaultGamma;
};

struct RunTrace {
  TraceHeader header;
  std::vector<EpochRecord> records;
  Moments final_posterior;
  // Set when the run stopped early; records then hold the completed epochs.
  std::optional<std::string> error;

  double field_mean(std::size_t i) const { return records[i].omega_mean / header.gamma; }
  double field_sd(std::size_t i) const { return records[i].omega_sd / header.gamma; }
  std::size_t reset_count() const;
};

/// Plain MFL. The backend's clock and random stream are advanced in place.
RunTrace run_estimation(Backend& backend, const LikelihoodModel& likelihood, const Prior& prior,
                        const EstimationConfig& config, std::uint64_t seed);

/// MFL with the reset rule. When the ESS drops below threshold at epoch i:
/// resample if i - last_resample >= r_resample or i - last_reset <= p_reset,
/// otherwise redraw the ensemble from the prior. Both markers start at 0.
RunTrace run_tracking(Backend& backend, const LikelihoodModel& likelihood, const Prior& prior,
                      const TrackerConfig& config, std::uint64_t seed);

/// Time-averaged normalised squared error against the truth at each epoch
/// start time, normalised by the waveform's nominal omega.
double nms_error(const RunTrace& trace, const FieldWaveform& truth);
double nms_error(std::span<const double> estimates, std::span<const double> truth, double omega0);

// NDJSON: one header object, one object per epoch, one closing object with the
// final posterior. Field order is fixed; see README.
void write_trace(std::ostream& out, const RunTrace& trace);
RunTrace read_trace(std::istream& in);

}  // namespace mfl
