#pragma once
// Experiment design: the particle guess heuristic (PGH) and its
// covariance-norm generalisation for joint (B, T2*) learning.

#include <optional>

#include "mfl/inference.hpp"

namespace mfl {

struct HeuristicConfig {
  std::optional<double> tau_max;  // seconds
  std::optional<double> tau_min;  // seconds
  int multiparam_activation_epoch = 100;
  // Normalisers for the joint covariance. Unset values are taken from the
  // posterior support when the multi-parameter mode activates.
  std::optional<double> norm_b;   // tesla
  std::optional<double> norm_t2;  // seconds
  // Time unit multiplying 1/||Sigma||_F. Defaults to norm_t2.
  std::optional<double> multi_tau_unit;
  PhysicalConstants constants;
  int collision_retries = 64;

  void validate() const;
  double clamp(double tau) const;
};

/// tau = 1/|omega_0 - omega_1| for two weight-sampled particles, clamped.
double pgh_single(const ParticleEnsemble& ensemble, const HeuristicConfig& config, Rng& rng);

struct Normalizers {
  double b = 0.0;   // tesla
  double t2 = 0.0;  // seconds
};

/// b = largest B and t2 = smallest T2* among particles with nonzero weight.
Normalizers normalizers_from_support(const ParticleEnsemble& ensemble, const PhysicalConstants& constants);

/// ||cov(B/b, T2*/t2)||_F over the ensemble. Particles with inv_t2 == 0 use
/// T2* = 1e6 * t2.
double normalized_covariance_norm(const ParticleEnsemble& ensemble, const Normalizers& norm,
                                  const PhysicalConstants& constants);

struct MultiPghResult {
  double tau = 0.0;
  double frobenius_norm = 0.0;
  bool saturated = false;  // zero norm, tau forced to tau_max
};

MultiPghResult pgh_multi(const ParticleEnsemble& ensemble, const HeuristicConfig& config);

enum class HeuristicMode { kSingle, kMulti };

struct TauChoice {
  double tau = 0.0;
  HeuristicMode mode = HeuristicMode::kSingle;
  bool saturated = false;
};

/// Epochs are 1-based. Single-parameter PGH on the omega marginal until the
/// activation epoch, then the covariance-norm rule for 2-D ensembles.
TauChoice choose_tau(int epoch, const ParticleEnsemble& ensemble, const HeuristicConfig& config, Rng& rng);

}  // namespace mfl
