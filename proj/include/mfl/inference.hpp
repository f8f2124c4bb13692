#pragma once
// Sequential Monte Carlo approximation of the posterior over (omega, 1/T2*).

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "mfl/model.hpp"

namespace mfl {

using Rng = std::mt19937_64;

/// Derives an independent, well-mixed seed for stream `index` from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

// Parameter axes, in storage order.
enum Axis : std::size_t { kOmega = 0, kInvT2 = 1 };

class Prior {
 public:
  enum class Kind { kUniformBox, kGaussian };

  /// Uniform over omega only (T2* = inf).
  static Prior uniform(double omega_lo, double omega_hi);
  /// Uniform box over (omega, inv_t2).
  static Prior uniform(double omega_lo, double omega_hi, double inv_t2_lo, double inv_t2_hi);
  static Prior gaussian(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

  Kind kind() const { return kind_; }
  std::size_t dimension() const { return static_cast<std::size_t>(mean_.size()); }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  /// Exact prior covariance (uniform: diag(width^2 / 12)).
  const Eigen::MatrixXd& covariance() const { return covariance_; }

  /// Draws one point; components are kept inside the model's hard bounds (>= 0).
  void sample(Rng& rng, std::span<double> out) const;

 private:
  Prior() = default;
  void validate() const;

  Kind kind_ = Kind::kUniformBox;
  Eigen::VectorXd lower_, upper_, mean_;
  Eigen::MatrixXd covariance_, chol_;
};

struct Particle {
  ModelParams position;
  double weight = 0.0;
};

/// Weighted particle cloud plus the random state that evolves it.
/// Storage is structure-of-arrays; `inv_t2()` is empty for 1-D models.
class ParticleEnsemble {
 public:
  ParticleEnsemble() = default;
  ParticleEnsemble(std::vector<double> omega, std::vector<double> inv_t2, std::vector<double> weights,
                   std::uint64_t seed);

  std::size_t size() const { return omega_.size(); }
  std::size_t dimension() const { return inv_t2_.empty() ? 1 : 2; }

  std::span<const double> omega() const { return omega_; }
  std::span<const double> inv_t2() const { return inv_t2_; }
  std::span<const double> weights() const { return weights_; }
  Particle particle(std::size_t i) const;
  double coordinate(std::size_t i, std::size_t axis) const {
    return axis == kOmega ? omega_[i] : inv_t2_[i];
  }

  Rng& rng() { return rng_; }

  // Raw access for the update/resample routines; callers must restore normalisation.
  std::span<double> omega_mut() { return omega_; }
  std::span<double> inv_t2_mut() { return inv_t2_; }
  std::span<double> weights_mut() { return weights_; }
  std::vector<double>& scratch() { return scratch_; }

  double& coordinate_mut(std::size_t i, std::size_t axis) {
    return axis == kOmega ? omega_[i] : inv_t2_[i];
  }

  bool operator==(const ParticleEnsemble& other) const {
    return omega_ == other.omega_ && inv_t2_ == other.inv_t2_ && weights_ == other.weights_ &&
           rng_ == other.rng_;
  }

 private:
  std::vector<double> omega_;
  std::vector<double> inv_t2_;
  std::vector<double> weights_;
  std::vector<double> scratch_;
  Rng rng_;
};

struct ResamplerConfig {
  double a = 0.9;
  double t_resample = 0.5;

  void validate() const;
};

struct ParticleCountRule {
  std::size_t n_part = 0;
  double t_resample = 0.5;
  double a = 0.9;
};

/// Empirical particle-count / resampler schedule for M averaged sequences per
/// epoch out of at most m_max. Natural log; t_resample(M = 1) is pinned to 0.5.
ParticleCountRule particle_count_rule(int m, int m_max);

ParticleEnsemble init_ensemble(const Prior& prior, std::size_t n_part, std::uint64_t seed);

/// Redraws every position from `prior` and resets the weights to 1/n, keeping
/// the ensemble's own random stream.
void reset_to_prior(ParticleEnsemble& ensemble, const Prior& prior);

/// w_i <- w_i * L_i, renormalised. Throws DegenerateUpdateError when all L_i are zero.
void bayes_update(ParticleEnsemble& ensemble, std::span<const double> likelihoods);
void bayes_update(ParticleEnsemble& ensemble, Outcome outcome, double tau, const LikelihoodModel& model);
void bayes_update(ParticleEnsemble& ensemble, const std::function<double(const ModelParams&)>& likelihood);

/// 1 / sum w_i^2.
double effective_sample_size(const ParticleEnsemble& ensemble);

struct ResampleResult {
  bool resampled = false;
  // Covariance was not positive definite; parents were copied without noise.
  bool noise_skipped = false;
};

ResampleResult resample_liu_west(ParticleEnsemble& ensemble, const ResamplerConfig& config);

/// Resamples iff ESS < n * t_resample (strict).
ResampleResult maybe_resample(ParticleEnsemble& ensemble, const ResamplerConfig& config);

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  ModelParams mean_params() const;
  double omega_variance() const { return covariance(0, 0); }
};

Moments posterior_moments(const ParticleEnsemble& ensemble);

}  // namespace mfl
