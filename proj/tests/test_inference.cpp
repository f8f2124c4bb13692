#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "mfl/errors.hpp"
#include "mfl/inference.hpp"
#include "property.hpp"

using namespace mfl;
using mfl::test::for_all;
using mfl::test::uniform;

namespace {

double weight_sum(const ParticleEnsemble& e) {
  return std::accumulate(e.weights().begin(), e.weights().end(), 0.0);
}

ParticleEnsemble random_ensemble(Rng& rng, std::size_t n, bool two_d) {
  std::vector<double> omega(n), inv_t2, w(n);
  for (auto& x : omega) x = uniform(rng, 0.0, 1e7);
  if (two_d) {
    inv_t2.resize(n);
    for (auto& x : inv_t2) x = uniform(rng, 1e4, 1e5);
  }
  for (auto& x : w) x = uniform(rng, 0.01, 1.0);
  return ParticleEnsemble(omega, inv_t2, w, rng());
}

}  // namespace

TEST_CASE("derived seeds differ per stream") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(42, i));
  CHECK(seen.size() == 1000);
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(2, 1));
}

TEST_CASE("priors") {
  CHECK_THROWS_AS(Prior::uniform(1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(Prior::uniform(-1.0, 1.0), ConfigError);
  Eigen::VectorXd m(1);
  m << 1.0;
  Eigen::MatrixXd s(1, 1);
  s << -1.0;
  CHECK_THROWS_AS(Prior::gaussian(m, s), ConfigError);
  const auto p = Prior::uniform(0.0, 6.0, 1.0, 4.0);
  CHECK(p.dimension() == 2);
  CHECK(p.mean()(0) == 3.0);
  CHECK(p.covariance()(0, 0) == doctest::Approx(3.0));
  CHECK(p.covariance()(1, 1) == doctest::Approx(0.75));
}

TEST_CASE("init_ensemble") {
  const auto prior = Prior::uniform(0.0, 1e6);
  const auto e = init_ensemble(prior, 4, 7);
  REQUIRE(e.size() == 4);
  for (double w : e.weights()) CHECK(w == 0.25);
  CHECK(e == init_ensemble(prior, 4, 7));
  CHECK_THROWS_AS(init_ensemble(prior, 1, 7), DomainError);

  const std::size_t n = 100000;
  const auto big = init_ensemble(prior, n, 8);
  const double mean = std::accumulate(big.omega().begin(), big.omega().end(), 0.0) / n;
  const double se = 1e6 / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean - 5e5) < 5.0 * se);
}

TEST_CASE("particle count rule") {
  const auto one = particle_count_rule(1, 1);
  CHECK(one.n_part == 25000);
  CHECK(one.t_resample == 0.5);
  const auto eight = particle_count_rule(8, 20275);
  // 25000 / (ln 8 + 1) = 25000 / 3.0794415 = 8118.3
  CHECK(eight.n_part == 8118);
  CHECK(eight.t_resample == doctest::Approx(0.5 - 0.4 / 2.0794415).epsilon(1e-6));
  CHECK(eight.t_resample == doctest::Approx(0.3076).epsilon(1e-3));
  CHECK(eight.a == doctest::Approx(0.9 + 0.08 * 8.0 / 20275.0));
  const auto full = particle_count_rule(20275, 20275);
  // 25000 / (ln 20275 + 1) = 25000 / 10.917 = 2290.0
  CHECK(full.n_part == 2290);
  CHECK(full.a == doctest::Approx(0.98));
  CHECK(particle_count_rule(100000, 100000).t_resample == doctest::Approx(0.5 - 0.4 / std::log(1e5)));
  CHECK_THROWS_AS(particle_count_rule(0, 5), DomainError);
  CHECK_THROWS_AS(particle_count_rule(6, 5), DomainError);
}

TEST_CASE("bayes update arithmetic") {
  ParticleEnsemble e({1.0, 2.0}, {}, {0.5, 0.5}, 1);
  const double l[] = {0.8, 0.2};
  bayes_update(e, l);
  CHECK(e.weights()[0] == doctest::Approx(0.8));
  CHECK(e.weights()[1] == doctest::Approx(0.2));
  const double c[] = {0.3, 0.3};
  bayes_update(e, c);
  CHECK(e.weights()[0] == doctest::Approx(0.8));
  const double z[] = {0.0, 0.0};
  CHECK_THROWS_AS(bayes_update(e, z), DegenerateUpdateError);
  // Tiny but nonzero likelihoods survive through the log-space path.
  const double tiny[] = {1e-320, 1e-321};
  bayes_update(e, tiny);
  CHECK(weight_sum(e) == doctest::Approx(1.0));
  CHECK(e.weights()[0] > e.weights()[1]);
}

TEST_CASE("effective sample size") {
  CHECK(effective_sample_size(ParticleEnsemble({1, 2, 3, 4}, {}, {1, 1, 1, 1}, 0)) == doctest::Approx(4.0));
  CHECK(effective_sample_size(ParticleEnsemble({1, 2, 3, 4}, {}, {1, 0, 0, 0}, 0)) == 1.0);
  CHECK(effective_sample_size(ParticleEnsemble({1, 2, 3, 4}, {}, {0.5, 0.5, 0, 0}, 0)) == 2.0);
}

TEST_CASE("maybe_resample threshold is strict") {
  ParticleEnsemble uniform_w({1, 2, 3, 4}, {}, {1, 1, 1, 1}, 0);
  CHECK_FALSE(maybe_resample(uniform_w, {0.9, 0.5}).resampled);
  // ESS = 2 = 4 * 0.5 exactly.
  ParticleEnsemble half({1, 2, 3, 4}, {}, {0.5, 0.5, 0, 0}, 0);
  CHECK_FALSE(maybe_resample(half, {0.9, 0.5}).resampled);
  std::vector<double> w(10, 0.0);
  w[0] = 1.0;
  ParticleEnsemble collapsed(std::vector<double>(10, 3.0), {}, w, 0);
  CHECK(maybe_resample(collapsed, {0.9, 0.5}).resampled);
}

TEST_CASE("liu-west edge cases") {
  ParticleEnsemble e({1.0, 2.0, 3.0, 4.0}, {}, {0.1, 0.2, 0.3, 0.4}, 5);
  resample_liu_west(e, {1.0, 0.5});
  for (double x : e.omega()) CHECK((x == 1.0 || x == 2.0 || x == 3.0 || x == 4.0));
  for (double w : e.weights()) CHECK(w == 0.25);

  ParticleEnsemble same(std::vector<double>(4, 0.5), {}, std::vector<double>(4, 1.0), 5);
  const auto r = resample_liu_west(same, {0.9, 0.5});
  CHECK(r.noise_skipped);
  for (double x : same.omega()) CHECK(x == 0.5);
}

TEST_CASE("liu-west preserves the first two moments") {
  Rng rng(11);
  const std::size_t n = 20000;
  std::vector<double> omega(n), w(n);
  std::normal_distribution<double> g(5e6, 1e5);
  for (auto& x : omega) x = g(rng);
  for (auto& x : w) x = uniform(rng, 0.0, 1.0);
  const ParticleEnsemble start(omega, {}, w, 12);
  const auto m0 = posterior_moments(start);
  double sum_mean = 0.0, sum_var = 0.0;
  const int reps = 1000;
  for (int k = 0; k < reps; ++k) {
    ParticleEnsemble e = start;
    e.rng().seed(derive_seed(13, k));
    resample_liu_west(e, {0.9, 0.5});
    const auto m = posterior_moments(e);
    sum_mean += m.mean(0);
    sum_var += m.covariance(0, 0);
  }
  const double var0 = m0.covariance(0, 0);
  const double ess = effective_sample_size(start);
  // Standard errors of the averaged mean and variance estimates.
  const double se_mean = std::sqrt(var0 * (1.0 + 1.0 / ess) / n / reps);
  const double se_var = var0 * std::sqrt(2.0 / n / reps) * 2.0;
  CHECK(std::abs(sum_mean / reps - m0.mean(0)) < 5.0 * se_mean);
  CHECK(std::abs(sum_var / reps - var0) < 5.0 * se_var + var0 / n);
}

TEST_CASE("posterior moments") {
  const auto one = posterior_moments(ParticleEnsemble({3.0, 3.0}, {}, {1, 1}, 0));
  CHECK(one.covariance(0, 0) == 0.0);
  const auto two = posterior_moments(ParticleEnsemble({0.0, 2.0}, {}, {1, 1}, 0));
  CHECK(two.mean(0) == 1.0);
  CHECK(two.covariance(0, 0) == 1.0);

  Rng rng(3);
  const std::size_t n = 100000;
  std::vector<double> omega(n), inv(n);
  std::normal_distribution<double> g(1e6, 2e4), h(5e4, 1e3);
  for (std::size_t i = 0; i < n; ++i) {
    omega[i] = g(rng);
    inv[i] = h(rng);
  }
  const auto m = posterior_moments(ParticleEnsemble(omega, inv, std::vector<double>(n, 1.0), 0));
  CHECK(std::abs(m.mean(0) - 1e6) < 5.0 * 2e4 / std::sqrt(n));
  CHECK(std::abs(m.mean(1) - 5e4) < 5.0 * 1e3 / std::sqrt(n));
  CHECK(std::abs(m.covariance(0, 0) - 4e8) < 5.0 * 4e8 * std::sqrt(2.0 / n));
  CHECK(m.mean_params().inv_t2.has_value());
}

TEST_CASE("property: public operations keep the ensemble normalised") {
  for_all(201, [](Rng& rng, int i) {
    const bool two_d = i % 2 == 1;
    auto e = random_ensemble(rng, 50 + i % 50, two_d);
    const std::size_t n = e.size();
    REQUIRE(weight_sum(e) == doctest::Approx(1.0).epsilon(1e-12));
    const LikelihoodModel model(uniform(rng, 0.5, 1.0));
    bayes_update(e, static_cast<Outcome>(rng() % 2), uniform(rng, 1e-8, 1e-5), model);
    REQUIRE(e.size() == n);
    REQUIRE(std::abs(weight_sum(e) - 1.0) <= 1e-12);
    for (double w : e.weights()) REQUIRE(w >= 0.0);
    maybe_resample(e, {uniform(rng, 0.5, 1.0), uniform(rng, 0.1, 1.0)});
    REQUIRE(e.size() == n);
    REQUIRE(std::abs(weight_sum(e) - 1.0) <= 1e-12);
    resample_liu_west(e, {uniform(rng, 0.5, 1.0), 0.5});
    REQUIRE(e.size() == n);
    REQUIRE(std::abs(weight_sum(e) - 1.0) <= 1e-12);
    for (std::size_t k = 0; k < n; ++k) {
      REQUIRE(e.weights()[k] >= 0.0);
      REQUIRE(e.omega()[k] >= 0.0);
      if (two_d) REQUIRE(e.inv_t2()[k] >= 0.0);
    }
  });
}

TEST_CASE("property: update commutes with weight scale") {
  for_all(202, [](Rng& rng, int) {
    const std::size_t n = 20;
    std::vector<double> omega(n), w(n), l(n);
    for (std::size_t k = 0; k < n; ++k) {
      omega[k] = uniform(rng, 0.0, 1e7);
      w[k] = uniform(rng, 0.01, 1.0);
      l[k] = uniform(rng, 0.0, 1.0);
    }
    const double scale = uniform(rng, 1e-3, 1e3);
    std::vector<double> scaled = w;
    for (auto& x : scaled) x *= scale;
    ParticleEnsemble a(omega, {}, w, 1), b(omega, {}, scaled, 1);
    bayes_update(a, l);
    bayes_update(b, l);
    for (std::size_t k = 0; k < n; ++k) REQUIRE(a.weights()[k] == doctest::Approx(b.weights()[k]).epsilon(1e-13));
  });
}

TEST_CASE("property: sequential updates match a grid posterior") {
  for_all(203, [](Rng& rng, int) {
    const std::size_t n = 100;
    std::vector<double> grid(n);
    for (std::size_t k = 0; k < n; ++k) grid[k] = 1e6 * (static_cast<double>(k) + 0.5);
    ParticleEnsemble e(grid, {}, std::vector<double>(n, 1.0), 1);
    std::vector<double> logw(n, 0.0);
    const LikelihoodModel model;
    for (int step = 0; step < 20; ++step) {
      const double tau = uniform(rng, 1e-8, 1e-6);
      const Outcome o = static_cast<Outcome>(rng() % 2);
      bayes_update(e, o, tau, model);
      for (std::size_t k = 0; k < n; ++k) {
        const double s = std::sin(0.5 * grid[k] * tau);
        logw[k] += std::log(o == 1 ? s * s : 1.0 - s * s);
      }
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    double z = 0.0, mean = 0.0, var = 0.0;
    for (auto& v : logw) z += (v = std::exp(v - top));
    for (std::size_t k = 0; k < n; ++k) mean += logw[k] / z * grid[k];
    for (std::size_t k = 0; k < n; ++k) var += logw[k] / z * (grid[k] - mean) * (grid[k] - mean);
    const auto m = posterior_moments(e);
    REQUIRE(std::abs(m.mean(0) - mean) <= 1e-10 * mean);
    REQUIRE(std::abs(m.covariance(0, 0) - var) <= 1e-10 * var + 1e-300);
  });
}

TEST_CASE("property: identical seeds give identical ensembles") {
  for_all(204, [](Rng& rng, int) {
    const std::uint64_t seed = rng();
    const auto prior = Prior::uniform(0.0, 1e7, 1e3, 1e5);
    auto a = init_ensemble(prior, 64, seed);
    auto b = init_ensemble(prior, 64, seed);
    const LikelihoodModel model;
    for (int k = 0; k < 5; ++k) {
      const double tau = uniform(rng, 1e-7, 1e-6);
      bayes_update(a, 1, tau, model);
      bayes_update(b, 1, tau, model);
      resample_liu_west(a, {0.9, 0.5});
      resample_liu_west(b, {0.9, 0.5});
    }
    REQUIRE(a == b);
  });
}

TEST_CASE("reset_to_prior redraws from the prior") {
  const auto prior = Prior::uniform(0.0, 1.0);
  auto e = init_ensemble(prior, 5000, 9);
  std::vector<double> w(5000, 0.0);
  w[0] = 1.0;
  std::copy(w.begin(), w.end(), e.weights_mut().begin());
  reset_to_prior(e, prior);
  for (double x : e.weights()) CHECK(x == doctest::Approx(1.0 / 5000));
  const auto m = posterior_moments(e);
  CHECK(std::abs(m.mean(0) - 0.5) < 5.0 * std::sqrt(1.0 / 12.0 / 5000));
  CHECK_THROWS_AS(reset_to_prior(e, Prior::uniform(0.0, 1.0, 0.0, 1.0)), DomainError);
}
