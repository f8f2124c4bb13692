#include "mfl/heuristics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mfl/errors.hpp"

namespace mfl {

namespace {

constexpr double kInfiniteT2Factor = 1e6;

std::size_t draw_by_weight(std::span<const double> cumulative, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, cumulative.back());
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), unif(rng));
  if (it == cumulative.end()) --it;
  return static_cast<std::size_t>(it - cumulative.begin());
}

}  // namespace

void HeuristicConfig::validate() const {
  if (tau_max && !(*tau_max > 0.0)) throw ConfigError("tau_max must be positive");
  if (tau_min && !(*tau_min > 0.0)) throw ConfigError("tau_min must be positive");
  if (tau_min && tau_max && *tau_min > *tau_max) throw ConfigError("tau_min exceeds tau_max");
  if (multiparam_activation_epoch < 1) throw ConfigError("activation epoch must be >= 1");
  if (norm_b && !(*norm_b > 0.0)) throw ConfigError("norm_b must be positive");
  if (norm_t2 && !(*norm_t2 > 0.0)) throw ConfigError("norm_t2 must be positive");
  if (multi_tau_unit && !(*multi_tau_unit > 0.0)) throw ConfigError("multi_tau_unit must be positive");
}

double HeuristicConfig::clamp(double tau) const {
  if (tau_max) tau = std::min(tau, *tau_max);
  if (tau_min) tau = std::max(tau, *tau_min);
  return tau;
}

double pgh_single(const ParticleEnsemble& ensemble, const HeuristicConfig& config, Rng& rng) {
  const auto omega = ensemble.omega();
  if (omega.size() < 2) throw DegenerateEnsembleError("PGH needs at least two particles");
  std::vector<double> cumulative(omega.size());
  std::partial_sum(ensemble.weights().begin(), ensemble.weights().end(), cumulative.begin());

  for (int attempt = 0; attempt < config.collision_retries; ++attempt) {
    const double w0 = omega[draw_by_weight(cumulative, rng)];
    const double w1 = omega[draw_by_weight(cumulative, rng)];
    if (w0 != w1) return config.clamp(1.0 / std::abs(w0 - w1));
  }
  // Every draw collided: the weighted mass sits on (nearly) one position.
  const auto [lo, hi] = std::minmax_element(omega.begin(), omega.end());
  if (*lo == *hi) throw DegenerateEnsembleError("all particles share one omega");
  if (config.tau_max) return *config.tau_max;
  throw DegenerateEnsembleError("PGH draws keep colliding and no tau_max is configured");
}

Normalizers normalizers_from_support(const ParticleEnsemble& ensemble, const PhysicalConstants& constants) {
  if (ensemble.dimension() != 2) throw DomainError("normalisers need a (B, T2*) ensemble");
  Normalizers n;
  double max_omega = 0.0;
  double max_rate = 0.0;
  const auto w = ensemble.weights();
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    if (w[i] <= 0.0) continue;
    max_omega = std::max(max_omega, ensemble.omega()[i]);
    max_rate = std::max(max_rate, ensemble.inv_t2()[i]);
  }
  n.b = constants.omega_to_field(max_omega);
  n.t2 = max_rate > 0.0 ? 1.0 / max_rate : std::numeric_limits<double>::infinity();
  if (!(n.b > 0.0) || !std::isfinite(n.t2)) throw DegenerateEnsembleError("posterior support gives degenerate normalisers");
  return n;
}

double normalized_covariance_norm(const ParticleEnsemble& ensemble, const Normalizers& norm,
                                  const PhysicalConstants& constants) {
  if (ensemble.dimension() != 2) throw DomainError("covariance norm needs a (B, T2*) ensemble");
  const auto w = ensemble.weights();
  const auto omega = ensemble.omega();
  const auto rate = ensemble.inv_t2();
  const double scale_b = 1.0 / (constants.gamma * norm.b);
  const double sentinel = kInfiniteT2Factor;  // (1e6 * t2) / t2
  auto t2_over = [&](std::size_t i) { return rate[i] > 0.0 ? 1.0 / (rate[i] * norm.t2) : sentinel; };

  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    mx += w[i] * omega[i] * scale_b;
    my += w[i] * t2_over(i);
  }
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double dx = omega[i] * scale_b - mx;
    const double dy = t2_over(i) - my;
    sxx += w[i] * dx * dx;
    syy += w[i] * dy * dy;
    sxy += w[i] * dx * dy;
  }
  return std::sqrt(sxx * sxx + syy * syy + 2.0 * sxy * sxy);
}

MultiPghResult pgh_multi(const ParticleEnsemble& ensemble, const HeuristicConfig& config) {
  Normalizers norm;
  if (config.norm_b && config.norm_t2) {
    norm = {*config.norm_b, *config.norm_t2};
  } else {
    norm = normalizers_from_support(ensemble, config.constants);
    if (config.norm_b) norm.b = *config.norm_b;
    if (config.norm_t2) norm.t2 = *config.norm_t2;
  }
  const double unit = config.multi_tau_unit.value_or(norm.t2);
  MultiPghResult r;
  r.frobenius_norm = normalized_covariance_norm(ensemble, norm, config.constants);
  if (!(r.frobenius_norm > 0.0)) {
    if (!config.tau_max) throw DegenerateEnsembleError("zero covariance norm and no tau_max configured");
    r.tau = *config.tau_max;
    r.saturated = true;
    return r;
  }
  r.tau = config.clamp(unit / r.frobenius_norm);
  r.saturated = config.tau_max && r.tau == *config.tau_max;
  return r;
}

TauChoice choose_tau(int epoch, const ParticleEnsemble& ensemble, const HeuristicConfig& config, Rng& rng) {
  TauChoice choice;
  if (ensemble.dimension() == 2 && epoch >= config.multiparam_activation_epoch) {
    const auto multi = pgh_multi(ensemble, config);
    choice.tau = multi.tau;
    choice.mode = HeuristicMode::kMulti;
    choice.saturated = multi.saturated;
    return choice;
  }
  choice.tau = pgh_single(ensemble, config, rng);
  choice.mode = HeuristicMode::kSingle;
  choice.saturated = config.tau_max && choice.tau == *config.tau_max;
  return choice;
}

}  // namespace mfl
