#pragma once
// Measurement sources: a photon-counting Ramsey simulator driven by a
// time-dependent field, replay of recorded fringes, and the two rules that
// turn a photon count into a binary outcome.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mfl/inference.hpp"
#include "mfl/model.hpp"
#include "mfl/overheads.hpp"

namespace mfl {

// ---------------------------------------------------------------------------
// True field

/// omega(t) of the field being sensed. Time is the backend clock in seconds.
class FieldWaveform {
 public:
  enum class Kind { kConstant, kStepwise, kSinusoid, kChirp, kOrnsteinUhlenbeck };

  static FieldWaveform constant(double omega);
  /// Right-continuous steps: value is omega_k for t_k <= t < t_{k+1}; before
  /// t_0 the first level applies.
  static FieldWaveform stepwise(std::vector<std::pair<double, double>> steps);
  /// omega0 + amplitude * cos(nu * t)
  static FieldWaveform sinusoid(double omega0, double amplitude, double nu);
  /// omega0 + amplitude * cos((nu0 - k t) * t)
  static FieldWaveform chirp(double omega0, double amplitude, double nu0, double k);
  /// Exact OU transitions on a grid of spacing dt, piecewise constant between
  /// grid points. Stationary variance is diffusion / (2 * reversion).
  static FieldWaveform ornstein_uhlenbeck(double mean, double reversion, double diffusion, double dt,
                                          std::uint64_t seed);

  Kind kind() const { return kind_; }
  double omega_at(double t) const;
  /// Centre used to normalise tracking errors.
  double nominal_omega() const;
  /// Same waveform with a different random path (only meaningful for OU).
  FieldWaveform reseeded(std::uint64_t seed) const;

  // Parameters, for serialisation.
  double omega0() const { return omega0_; }
  double amplitude() const { return amplitude_; }
  double nu() const { return nu_; }
  double chirp_rate() const { return chirp_k_; }
  double reversion() const { return reversion_; }
  double diffusion() const { return diffusion_; }
  double dt() const { return dt_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::pair<double, double>>& steps() const { return steps_; }

 private:
  FieldWaveform() = default;

  Kind kind_ = Kind::kConstant;
  double omega0_ = 0.0;
  double amplitude_ = 0.0;
  double nu_ = 0.0;
  double chirp_k_ = 0.0;
  double reversion_ = 0.0;
  double diffusion_ = 0.0;
  double dt_ = 0.0;
  std::uint64_t seed_ = 0;
  std::vector<std::pair<double, double>> steps_;

  // Lazily extended OU path; copies carry their own cache.
  mutable std::vector<double> ou_path_;
  mutable Rng ou_rng_;
};

// ---------------------------------------------------------------------------
// Data

struct EpochDatum {
  double tau_requested = 0.0;
  double tau_actual = 0.0;
  double photon_count = 0.0;
  Outcome outcome = 0;
  double t_start = 0.0;        // backend clock when the datum was taken
  double wall_clock = 0.0;     // experimental time consumed by this epoch
  double true_omega = std::numeric_limits<double>::quiet_NaN();
};

struct SimulatorConfig {
  FieldWaveform waveform = FieldWaveform::constant(0.0);
  double inv_t2 = 0.0;
  int sequences_per_epoch = 1;
  double p_click_1 = 1.0;
  double p_click_0 = 0.0;
  OverheadBudget overheads = OverheadBudget::none();
  std::uint64_t seed = 0;

  void validate() const;
};

/// Runs M Ramsey sequences at tau with the field frozen at t_now.
EpochDatum simulate_epoch(const SimulatorConfig& config, double tau, double t_now, int m, Rng& rng);

/// Recorded fringe. Taus are stored in nanoseconds exactly as in the file.
struct FringeRecord {
  double tau_ns = 0.0;
  std::vector<std::uint32_t> counts;  // one entry per recorded sequence (counts format)
  double pl = 0.0;                    // mean normalised PL (pl format)

  std::uint64_t total() const;
};

struct FringeDataset {
  enum class Format { kCounts, kPl };

  Format format = Format::kCounts;
  double gamma = kDefaultGamma;
  double dtau_ns = 20.0;
  std::uint32_t m_total = 0;
  double n_bar = 0.0;  // per-sequence calibration
  double n_max = 0.0;
  std::vector<FringeRecord> records;

  void validate() const;
  /// Nearest record to tau (seconds); exact midpoints go to the smaller tau.
  std::size_t nearest_index(double tau) const;
  double tau_seconds(std::size_t i) const { return records[i].tau_ns * 1e-9; }
  /// Mean signal per record: mean count per sequence, or the stored PL.
  std::vector<double> mean_signal() const;
};

FringeDataset read_fringe_text(std::istream& in);
void write_fringe_text(std::ostream& out, const FringeDataset& data);
FringeDataset read_fringe_binary(std::istream& in);
void write_fringe_binary(std::ostream& out, const FringeDataset& data);
/// Dispatches on the leading magic bytes.
FringeDataset load_fringe(const std::string& path);
void save_fringe(const std::string& path, const FringeDataset& data, bool binary);

/// Renders a simulated fringe of `m_total` sequences per tau on a uniform grid
/// tau_k = k * dtau, k = 1..points.
FringeDataset synthesize_fringe(const SimulatorConfig& config, int points, double dtau, std::uint32_t m_total,
                                std::uint64_t seed);

enum class SweepSelection { kRandom, kPeak };

/// Sums M sequences at the recorded tau nearest to `tau_requested`.
/// kRandom draws without replacement; kPeak takes a contiguous block.
EpochDatum replay_epoch(const FringeDataset& dataset, double tau_requested, int m, SweepSelection selection,
                        Rng& rng);

// ---------------------------------------------------------------------------
// Outcome extraction

Outcome outcome_majority(double n, double n_bar);

struct ProbabilisticOutcome {
  Outcome outcome = 0;
  bool clamped = false;  // n exceeded n_max (multi-photon event)
};

ProbabilisticOutcome outcome_probabilistic(double n, double n_max, Rng& rng);

struct Calibration {
  double n_bar = 0.0;
  double n_max = 0.0;
};

/// Mean count over n_cal simulated epochs with taus spread uniformly over
/// (0, tau_window]; n_max = M * p_click_1.
Calibration calibrate(const SimulatorConfig& config, int n_cal, double tau_window, std::uint64_t seed);

/// Mean and maximum of n_cal M-sequence sums cycling over records
/// [first, first + window) of the dataset.
Calibration calibrate(const FringeDataset& dataset, int m, int n_cal, std::uint64_t seed,
                      std::size_t first = 0, std::size_t window = 0);

enum class OutcomeRule { kMajority, kProbabilistic };

struct OutcomeExtractor {
  OutcomeRule rule = OutcomeRule::kMajority;
  Calibration calibration;

  Outcome operator()(double n, Rng& rng) const;
};

// ---------------------------------------------------------------------------
// Sessions

/// A stateful source of epochs with its own clock and random stream.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual EpochDatum next(double tau) = 0;
  virtual double clock() const = 0;
  virtual int sequences_per_epoch() const = 0;
  /// Smallest tau the source can deliver, if discretised.
  virtual std::optional<double> tau_step() const { return std::nullopt; }
};

class SimulatorBackend final : public Backend {
 public:
  explicit SimulatorBackend(SimulatorConfig config);
  EpochDatum next(double tau) override;
  double clock() const override { return clock_; }
  int sequences_per_epoch() const override { return config_.sequences_per_epoch; }
  const SimulatorConfig& config() const { return config_; }

 private:
  SimulatorConfig config_;
  Rng rng_;
  double clock_ = 0.0;
};

class ReplayBackend final : public Backend {
 public:
  ReplayBackend(std::shared_ptr<const FringeDataset> dataset, int m, SweepSelection selection,
                OverheadBudget overheads, std::uint64_t seed);
  EpochDatum next(double tau) override;
  double clock() const override { return clock_; }
  int sequences_per_epoch() const override { return m_; }
  std::optional<double> tau_step() const override { return dataset_->dtau_ns * 1e-9; }

 private:
  std::shared_ptr<const FringeDataset> dataset_;
  int m_;
  SweepSelection selection_;
  OverheadBudget overheads_;
  Rng rng_;
  double peak_offset_ = 0.0;  // fixes the contiguous block for kPeak sessions
  double clock_ = 0.0;
};

}  // namespace mfl
