#pragma once
// Single-spin Ramsey model: constants, parameters, likelihoods and
// information bounds. Everything here is a pure function.

#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace mfl {

/// Electron gyromagnetic ratio, rad s^-1 T^-1 (2*pi * 28 MHz/mT).
inline constexpr double kDefaultGamma = 2.0 * std::numbers::pi * 28.0e9;

struct PhysicalConstants {
  double gamma = kDefaultGamma;

  double field_to_omega(double tesla) const { return gamma * tesla; }
  double omega_to_field(double omega) const { return omega / gamma; }
};

/// A single hypothesis about the spin environment. `inv_t2` is the
/// dephasing rate 1/T2*; absent means T2* is infinite.
struct ModelParams {
  double omega = 0.0;
  std::optional<double> inv_t2;

  double field(const PhysicalConstants& c) const { return c.omega_to_field(omega); }
};

/// Calibrated photon statistics for a readout channel.
struct ReadoutModel {
  double xi = 1.0;
  double n_bar = 0.0;
  double n_max = 0.0;
  int sequences_per_epoch = 1;

  void validate() const;
};

using Outcome = int;  // 0 or 1

/// L(outcome | omega, inv_t2; tau) for a Ramsey fringe with dephasing.
double likelihood_ramsey(const ModelParams& params, double tau, Outcome outcome);

/// Ramsey likelihood with a one-sided readout loss: L'(1) = xi * L(1).
double likelihood_lossy(const ModelParams& params, double tau, Outcome outcome,
                        const ReadoutModel& readout);

/// Likelihood family used by the updater. xi == 1 is the plain Ramsey model.
class LikelihoodModel {
 public:
  LikelihoodModel() = default;
  explicit LikelihoodModel(double xi);

  double xi() const { return xi_; }

  double operator()(double omega, double inv_t2, double tau, Outcome outcome) const;

  // Batched evaluation over a particle cloud. `inv_t2` may be empty (T2* = inf).
  void evaluate(std::span<const double> omega, std::span<const double> inv_t2, double tau,
                Outcome outcome, std::span<double> out) const;

 private:
  double xi_ = 1.0;
};

/// Fisher information of a single noiseless Ramsey shot with respect to B.
double fisher_information(double tau, const PhysicalConstants& constants = {});

/// Cramer-Rao variance bound for T2*-limited magnetometry at field B.
/// Throws SingularityError where sin(B*gamma*tau) vanishes.
double fisher_bound_dephasing(double field, double tau, double inv_t2,
                              const PhysicalConstants& constants = {});

struct DesignPoint {
  double tau = 0.0;
  double inv_t2 = 0.0;
};

/// van Trees (Bayesian Cramer-Rao) bound on E[(B_est - B)^2].
/// Returns +infinity when prior and data carry no information.
double van_trees_bound(double prior_information, std::span<const DesignPoint> experiments,
                       const PhysicalConstants& constants = {});

}  // namespace mfl
