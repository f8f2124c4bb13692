#include "mfl/model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mfl/errors.hpp"

namespace mfl {

namespace {

void check_tau(double tau) {
  if (!(tau >= 0.0)) throw DomainError("tau must be nonnegative, got " + std::to_string(tau));
}

void check_outcome(Outcome outcome) {
  if (outcome != 0 && outcome != 1) throw DomainError("outcome must be 0 or 1");
}

void check_xi(double xi) {
  if (!(xi >= 0.0 && xi <= 1.0)) throw DomainError("xi must lie in [0,1], got " + std::to_string(xi));
}

inline double prob_zero(double omega, double inv_t2, double tau) {
  const double c = std::cos(0.5 * omega * tau);
  if (inv_t2 == 0.0) return c * c;
  const double contrast = std::exp(-tau * inv_t2);
  return contrast * c * c + 0.5 * (1.0 - contrast);
}

}  // namespace

void ReadoutModel::validate() const {
  check_xi(xi);
  if (!(n_bar >= 0.0) || !(n_max >= n_bar)) throw DomainError("readout requires n_max >= n_bar >= 0");
  if (sequences_per_epoch < 1) throw DomainError("readout requires M >= 1");
}

double likelihood_ramsey(const ModelParams& params, double tau, Outcome outcome) {
  check_tau(tau);
  check_outcome(outcome);
  const double p0 = prob_zero(params.omega, params.inv_t2.value_or(0.0), tau);
  return outcome == 0 ? p0 : 1.0 - p0;
}

double likelihood_lossy(const ModelParams& params, double tau, Outcome outcome,
                        const ReadoutModel& readout) {
  check_xi(readout.xi);
  const double p1 = readout.xi * likelihood_ramsey(params, tau, 1);
  return outcome == 1 ? p1 : 1.0 - p1;
}

LikelihoodModel::LikelihoodModel(double xi) : xi_(xi) { check_xi(xi); }

double LikelihoodModel::operator()(double omega, double inv_t2, double tau, Outcome outcome) const {
  const double p1 = xi_ * (1.0 - prob_zero(omega, inv_t2, tau));
  return outcome == 1 ? p1 : 1.0 - p1;
}

void LikelihoodModel::evaluate(std::span<const double> omega, std::span<const double> inv_t2,
                               double tau, Outcome outcome, std::span<double> out) const {
  check_tau(tau);
  check_outcome(outcome);
  const std::size_t n = omega.size();
  const double half_tau = 0.5 * tau;
  if (inv_t2.empty()) {
    if (xi_ == 1.0) {
      for (std::size_t i = 0; i < n; ++i) {
        const double c = std::cos(half_tau * omega[i]);
        const double p0 = c * c;
        out[i] = outcome == 0 ? p0 : 1.0 - p0;
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const double c = std::cos(half_tau * omega[i]);
        const double p1 = xi_ * (1.0 - c * c);
        out[i] = outcome == 1 ? p1 : 1.0 - p1;
      }
    }
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double p1 = xi_ * (1.0 - prob_zero(omega[i], inv_t2[i], tau));
    out[i] = outcome == 1 ? p1 : 1.0 - p1;
  }
}

double fisher_information(double tau, const PhysicalConstants& constants) {
  check_tau(tau);
  const double g = constants.gamma * tau;
  return g * g;
}

double fisher_bound_dephasing(double field, double tau, double inv_t2,
                              const PhysicalConstants& constants) {
  if (!(tau > 0.0)) throw DomainError("tau must be positive");
  if (!(inv_t2 > 0.0)) throw DomainError("dephasing rate must be positive");
  const double phase = field * constants.gamma * tau;
  const double s = std::sin(phase);
  // A phase that is a multiple of pi within rounding is treated as the pole.
  if (std::abs(s) <= 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(phase))) {
    throw SingularityError("fisher_bound_dephasing: sin(B*gamma*tau) = 0");
  }
  const double c = std::cos(phase);
  const double gt = inv_t2 * tau;
  const double em1 = std::expm1(gt);
  const double num = std::exp(2.0 * gt) - em1 * em1 * c * c;
  const double g = constants.gamma * tau;
  return num / (s * s * g * g * em1 * em1);
}

double van_trees_bound(double prior_information, std::span<const DesignPoint> experiments,
                       const PhysicalConstants& constants) {
  if (!(prior_information >= 0.0)) throw DomainError("prior information must be nonnegative");
  if (std::isinf(prior_information)) return 0.0;
  double info = prior_information;
  for (const auto& e : experiments) {
    check_tau(e.tau);
    const double x = constants.gamma * e.tau * std::exp(-e.tau * e.inv_t2);
    info += x * x;
  }
  if (info == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / info;
}

}  // namespace mfl
