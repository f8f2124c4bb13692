#include "mfl/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mfl/errors.hpp"

namespace mfl {

namespace {

constexpr int kBoundRedraws = 100;

void normalise(std::span<double> w, double total) {
  const double inv = 1.0 / total;
  for (double& x : w) x *= inv;
}

// Weighted draw of one index given an inclusive prefix sum of the weights.
std::size_t draw_index(std::span<const double> cumulative, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, cumulative.back());
  const double u = unif(rng);
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) --it;
  return static_cast<std::size_t>(it - cumulative.begin());
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 finaliser over base + golden-ratio stride.
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Prior

Prior Prior::uniform(double omega_lo, double omega_hi) {
  Prior p;
  p.kind_ = Kind::kUniformBox;
  p.lower_ = Eigen::VectorXd::Constant(1, omega_lo);
  p.upper_ = Eigen::VectorXd::Constant(1, omega_hi);
  p.validate();
  p.mean_ = 0.5 * (p.lower_ + p.upper_);
  p.covariance_ = ((p.upper_ - p.lower_).array().square() / 12.0).matrix().asDiagonal();
  return p;
}

Prior Prior::uniform(double omega_lo, double omega_hi, double inv_t2_lo, double inv_t2_hi) {
  Prior p;
  p.kind_ = Kind::kUniformBox;
  p.lower_ = Eigen::Vector2d(omega_lo, inv_t2_lo);
  p.upper_ = Eigen::Vector2d(omega_hi, inv_t2_hi);
  p.validate();
  p.mean_ = 0.5 * (p.lower_ + p.upper_);
  p.covariance_ = ((p.upper_ - p.lower_).array().square() / 12.0).matrix().asDiagonal();
  return p;
}

Prior Prior::gaussian(Eigen::VectorXd mean, Eigen::MatrixXd covariance) {
  Prior p;
  p.kind_ = Kind::kGaussian;
  p.mean_ = std::move(mean);
  p.covariance_ = std::move(covariance);
  p.validate();
  p.chol_ = p.covariance_.llt().matrixL();
  p.lower_ = Eigen::VectorXd::Zero(p.mean_.size());
  p.upper_ = Eigen::VectorXd::Constant(p.mean_.size(), std::numeric_limits<double>::infinity());
  return p;
}

void Prior::validate() const {
  if (kind_ == Kind::kUniformBox) {
    if (lower_.size() < 1 || lower_.size() > 2) throw ConfigError("prior dimension must be 1 or 2");
    for (Eigen::Index i = 0; i < lower_.size(); ++i) {
      if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || !(upper_[i] > lower_[i])) {
        throw ConfigError("uniform prior support is empty or unbounded on axis " + std::to_string(i));
      }
      if (lower_[i] < 0.0) throw ConfigError("uniform prior must lie in the nonnegative orthant");
    }
    return;
  }
  if (mean_.size() < 1 || mean_.size() > 2) throw ConfigError("prior dimension must be 1 or 2");
  if (covariance_.rows() != mean_.size() || covariance_.cols() != mean_.size()) {
    throw ConfigError("gaussian prior covariance has the wrong shape");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
  if (llt.info() != Eigen::Success) throw ConfigError("gaussian prior covariance is not positive definite");
}

void Prior::sample(Rng& rng, std::span<double> out) const {
  const auto d = static_cast<Eigen::Index>(dimension());
  if (kind_ == Kind::kUniformBox) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Eigen::Index i = 0; i < d; ++i) out[i] = lower_[i] + (upper_[i] - lower_[i]) * unif(rng);
    return;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(d), x(d);
  for (int attempt = 0; attempt < kBoundRedraws; ++attempt) {
    for (Eigen::Index i = 0; i < d; ++i) z[i] = normal(rng);
    x = mean_ + chol_ * z;
    if ((x.array() >= 0.0).all()) break;
  }
  for (Eigen::Index i = 0; i < d; ++i) out[i] = std::max(0.0, x[i]);
}

// ---------------------------------------------------------------------------
// Ensemble

ParticleEnsemble::ParticleEnsemble(std::vector<double> omega, std::vector<double> inv_t2,
                                   std::vector<double> weights, std::uint64_t seed)
    : omega_(std::move(omega)), inv_t2_(std::move(inv_t2)), weights_(std::move(weights)), rng_(seed) {
  if (omega_.size() < 1) throw DomainError("ensemble needs at least one particle");
  if (!inv_t2_.empty() && inv_t2_.size() != omega_.size()) throw DomainError("ensemble axis length mismatch");
  if (weights_.size() != omega_.size()) throw DomainError("ensemble weight length mismatch");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw DomainError("particle weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw DomainError("particle weights sum to zero");
  normalise(weights_, total);
}

Particle ParticleEnsemble::particle(std::size_t i) const {
  Particle p;
  p.position.omega = omega_[i];
  if (!inv_t2_.empty()) p.position.inv_t2 = inv_t2_[i];
  p.weight = weights_[i];
  return p;
}

void ResamplerConfig::validate() const {
  if (!(a > 0.0 && a <= 1.0)) throw ConfigError("resampler a must lie in (0,1]");
  if (!(t_resample > 0.0 && t_resample <= 1.0)) throw ConfigError("t_resample must lie in (0,1]");
}

ParticleCountRule particle_count_rule(int m, int m_max) {
  if (m < 1 || m_max < m) throw DomainError("particle_count_rule requires 1 <= M <= M_max");
  const double log_m = std::log(static_cast<double>(m));
  ParticleCountRule rule;
  rule.n_part = static_cast<std::size_t>(std::lround(25000.0 / (log_m + 1.0)));
  rule.t_resample = m == 1 ? 0.5 : std::max(0.1, 0.5 - 0.4 / log_m);
  rule.a = 0.9 + 0.08 * static_cast<double>(m) / static_cast<double>(m_max);
  return rule;
}

ParticleEnsemble init_ensemble(const Prior& prior, std::size_t n_part, std::uint64_t seed) {
  if (n_part < 2) throw DomainError("init_ensemble requires at least two particles");
  const std::size_t d = prior.dimension();
  std::vector<double> omega(n_part), inv_t2(d == 2 ? n_part : 0);
  std::vector<double> weights(n_part, 1.0 / static_cast<double>(n_part));
  ParticleEnsemble ens(std::move(omega), std::move(inv_t2), std::move(weights), seed);
  reset_to_prior(ens, prior);
  return ens;
}

void reset_to_prior(ParticleEnsemble& ensemble, const Prior& prior) {
  const std::size_t n = ensemble.size();
  const std::size_t d = prior.dimension();
  if (d != ensemble.dimension()) throw DomainError("prior and ensemble dimensions differ");
  double point[2];
  auto omega = ensemble.omega_mut();
  auto inv_t2 = ensemble.inv_t2_mut();
  for (std::size_t i = 0; i < n; ++i) {
    prior.sample(ensemble.rng(), std::span<double>(point, d));
    omega[i] = point[0];
    if (d == 2) inv_t2[i] = point[1];
  }
  std::fill(ensemble.weights_mut().begin(), ensemble.weights_mut().end(), 1.0 / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Bayes rule

void bayes_update(ParticleEnsemble& ensemble, std::span<const double> likelihoods) {
  auto w = ensemble.weights_mut();
  if (likelihoods.size() != w.size()) throw DomainError("likelihood vector has the wrong length");
  // Underflow guard: below this total the product is recomputed in log space.
  constexpr double kUnderflowRisk = 1e-300;
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) total += w[i] * likelihoods[i];
  if (total > kUnderflowRisk && std::isfinite(total)) {
    const double inv = 1.0 / total;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = w[i] * likelihoods[i] * inv;
    return;
  }
  std::vector<double> logw(w.size());
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.size(); ++i) {
    logw[i] = (w[i] > 0.0 && likelihoods[i] > 0.0) ? std::log(w[i]) + std::log(likelihoods[i])
                                                   : -std::numeric_limits<double>::infinity();
    max_log = std::max(max_log, logw[i]);
  }
  if (!std::isfinite(max_log)) throw DegenerateUpdateError("all particles have zero likelihood");
  total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(logw[i] - max_log);
    total += w[i];
  }
  normalise(w, total);
}

void bayes_update(ParticleEnsemble& ensemble, Outcome outcome, double tau, const LikelihoodModel& model) {
  auto& buf = ensemble.scratch();
  buf.resize(ensemble.size());
  model.evaluate(ensemble.omega(), ensemble.inv_t2(), tau, outcome, buf);
  bayes_update(ensemble, std::span<const double>(buf));
}

void bayes_update(ParticleEnsemble& ensemble, const std::function<double(const ModelParams&)>& likelihood) {
  auto& buf = ensemble.scratch();
  buf.resize(ensemble.size());
  for (std::size_t i = 0; i < ensemble.size(); ++i) buf[i] = likelihood(ensemble.particle(i).position);
  bayes_update(ensemble, std::span<const double>(buf));
}

double effective_sample_size(const ParticleEnsemble& ensemble) {
  double s = 0.0;
  for (double w : ensemble.weights()) s += w * w;
  return 1.0 / s;
}

// ---------------------------------------------------------------------------
// Moments and resampling

ModelParams Moments::mean_params() const {
  ModelParams p;
  p.omega = mean[0];
  if (mean.size() > 1) p.inv_t2 = mean[1];
  return p;
}

Moments posterior_moments(const ParticleEnsemble& ensemble) {
  const std::size_t d = ensemble.dimension();
  const auto w = ensemble.weights();
  Moments m;
  m.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  m.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * ensemble.coordinate(i, k);
    m.mean[static_cast<Eigen::Index>(k)] = acc;
  }
  // Centred two-pass accumulation.
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = r; c < d; ++c) {
      const double mr = m.mean[static_cast<Eigen::Index>(r)];
      const double mc = m.mean[static_cast<Eigen::Index>(c)];
      double acc = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        acc += w[i] * (ensemble.coordinate(i, r) - mr) * (ensemble.coordinate(i, c) - mc);
      }
      m.covariance(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = acc;
      m.covariance(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) = acc;
    }
  }
  return m;
}

ResampleResult resample_liu_west(ParticleEnsemble& ensemble, const ResamplerConfig& config) {
  config.validate();
  const std::size_t n = ensemble.size();
  const std::size_t d = ensemble.dimension();
  const Moments moments = posterior_moments(ensemble);
  const double a = config.a;

  ResampleResult result;
  result.resampled = true;

  Eigen::MatrixXd noise_chol;
  bool with_noise = a < 1.0;
  if (with_noise) {
    const Eigen::MatrixXd noise_cov = (1.0 - a * a) * moments.covariance;
    Eigen::LLT<Eigen::MatrixXd> llt(noise_cov);
    const bool finite = noise_cov.allFinite();
    if (!finite || llt.info() != Eigen::Success) {
      with_noise = false;
      result.noise_skipped = true;
    } else {
      noise_chol = llt.matrixL();
    }
  }

  auto& cumulative = ensemble.scratch();
  cumulative.resize(n);
  std::partial_sum(ensemble.weights().begin(), ensemble.weights().end(), cumulative.begin());

  std::vector<double> new_omega(n), new_inv_t2(d == 2 ? n : 0);
  Rng& rng = ensemble.rng();
  std::normal_distribution<double> normal(0.0, 1.0);
  double parent[2], centre[2], z[2], x[2];
  for (std::size_t k = 0; k < d; ++k) centre[k] = moments.mean[static_cast<Eigen::Index>(k)];

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = draw_index(cumulative, rng);
    for (std::size_t k = 0; k < d; ++k) parent[k] = ensemble.coordinate(j, k);
    if (!with_noise) {
      for (std::size_t k = 0; k < d; ++k) x[k] = parent[k];
    } else {
      bool inside = false;
      for (int attempt = 0; attempt < kBoundRedraws && !inside; ++attempt) {
        for (std::size_t k = 0; k < d; ++k) z[k] = normal(rng);
        inside = true;
        for (std::size_t r = 0; r < d; ++r) {
          double noise = 0.0;
          for (std::size_t c = 0; c <= r; ++c) {
            noise += noise_chol(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * z[c];
          }
          x[r] = a * parent[r] + (1.0 - a) * centre[r] + noise;
          if (x[r] < 0.0) inside = false;
        }
      }
      for (std::size_t k = 0; k < d; ++k) x[k] = std::max(0.0, x[k]);
    }
    new_omega[i] = x[0];
    if (d == 2) new_inv_t2[i] = x[1];
  }

  std::copy(new_omega.begin(), new_omega.end(), ensemble.omega_mut().begin());
  if (d == 2) std::copy(new_inv_t2.begin(), new_inv_t2.end(), ensemble.inv_t2_mut().begin());
  std::fill(ensemble.weights_mut().begin(), ensemble.weights_mut().end(), 1.0 / static_cast<double>(n));
  return result;
}

ResampleResult maybe_resample(ParticleEnsemble& ensemble, const ResamplerConfig& config) {
  const double threshold = static_cast<double>(ensemble.size()) * config.t_resample;
  if (effective_sample_size(ensemble) < threshold) return resample_liu_west(ensemble, config);
  return {};
}

}  // namespace mfl
