#include "mfl/tracking.hpp"

#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <json.hpp>
#include <ostream>

#include "mfl/errors.hpp"

namespace mfl {

using json = nlohmann::ordered_json;

void EstimationConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (n_particles < 2) throw ConfigError("n_particles must be >= 2");
  resampler.validate();
  heuristic.validate();
  if (outcome.rule == OutcomeRule::kMajority && !(outcome.calibration.n_bar > 0.0)) {
    throw ConfigError("majority voting needs a calibrated n_bar > 0");
  }
  if (outcome.rule == OutcomeRule::kProbabilistic && !(outcome.calibration.n_max > 0.0)) {
    throw ConfigError("probabilistic outcomes need a calibrated n_max > 0");
  }
}

void TrackerConfig::validate() const {
  base.validate();
  if (r_resample < 1) throw ConfigError("r_resample must be >= 1");
  if (p_reset < 0) throw ConfigError("p_reset must be >= 0");
}

std::size_t RunTrace::reset_count() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.reset ? 1 : 0;
  return n;
}

namespace {

struct ResetRule {
  int r_resample;
  int p_reset;
};

double covariance_norm(const ParticleEnsemble& ens, const HeuristicConfig& h) {
  if (ens.dimension() != 2) return 0.0;
  try {
    Normalizers norm;
    if (h.norm_b && h.norm_t2) {
      norm = {*h.norm_b, *h.norm_t2};
    } else {
      norm = normalizers_from_support(ens, h.constants);
      if (h.norm_b) norm.b = *h.norm_b;
      if (h.norm_t2) norm.t2 = *h.norm_t2;
    }
    return normalized_covariance_norm(ens, norm, h.constants);
  } catch (const DegenerateEnsembleError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

RunTrace run_loop(Backend& backend, const LikelihoodModel& likelihood, const Prior& prior,
                  const EstimationConfig& config, std::uint64_t seed, const std::optional<ResetRule>& rule) {
  config.validate();
  RunTrace trace;
  trace.header.seed = seed;
  trace.header.mode = rule ? "track" : "estimate";
  trace.header.n_particles = config.n_particles;
  trace.header.sequences_per_epoch = backend.sequences_per_epoch();
  trace.header.epochs = config.epochs;
  trace.header.xi = likelihood.xi();
  trace.header.a = config.resampler.a;
  trace.header.t_resample = config.resampler.t_resample;
  trace.header.gamma = config.heuristic.constants.gamma;
  if (rule) {
    trace.header.r_resample = rule->r_resample;
    trace.header.p_reset = rule->p_reset;
  }

  ParticleEnsemble ens = init_ensemble(prior, config.n_particles, derive_seed(seed, 0));
  Rng design_rng(derive_seed(seed, 1));
  Rng outcome_rng(derive_seed(seed, 2));
  const double threshold = static_cast<double>(ens.size()) * config.resampler.t_resample;
  int last_resample = 0;
  int last_reset = 0;
  HeuristicConfig heuristic = config.heuristic;

  trace.records.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.t_start = backend.clock();

    const auto started = std::chrono::steady_clock::now();
    TauChoice choice;
    try {
      if (ens.dimension() == 2 && epoch >= heuristic.multiparam_activation_epoch &&
          (!heuristic.norm_b || !heuristic.norm_t2)) {
        const auto support = normalizers_from_support(ens, heuristic.constants);
        if (!heuristic.norm_b) heuristic.norm_b = support.b;
        if (!heuristic.norm_t2) heuristic.norm_t2 = support.t2;
      }
      choice = choose_tau(epoch, ens, heuristic, design_rng);
    } catch (const std::exception& e) {
      trace.error = std::string("epoch ") + std::to_string(epoch) + ": " + e.what();
      break;
    }
    const auto design_done = std::chrono::steady_clock::now();

    const EpochDatum datum = backend.next(choice.tau);
    rec.tau_requested = choice.tau;
    rec.tau = datum.tau_actual;
    rec.photon_count = datum.photon_count;
    rec.mode = choice.mode;
    rec.outcome = config.outcome(datum.photon_count, outcome_rng);
    if (!std::isnan(datum.true_omega)) rec.true_omega = datum.true_omega;

    const auto update_started = std::chrono::steady_clock::now();
    try {
      bayes_update(ens, rec.outcome, rec.tau, likelihood);
    } catch (const DegenerateUpdateError& e) {
      trace.error = std::string("epoch ") + std::to_string(epoch) + ": " + e.what();
      break;
    }
    rec.ess = effective_sample_size(ens);
    if (rec.ess < threshold) {
      const bool resample = !rule || epoch - last_resample >= rule->r_resample || epoch - last_reset <= rule->p_reset;
      if (resample) {
        const auto r = resample_liu_west(ens, config.resampler);
        rec.resampled = r.resampled;
        rec.noise_skipped = r.noise_skipped;
        last_resample = epoch;
      } else {
        reset_to_prior(ens, prior);
        rec.reset = true;
        last_reset = epoch;
      }
    }
    const auto finished = std::chrono::steady_clock::now();
    if (config.measure_comp_time) {
      rec.tau_comp = std::chrono::duration<double>((design_done - started) + (finished - update_started)).count();
    }

    const Moments m = posterior_moments(ens);
    rec.omega_mean = m.mean[0];
    rec.omega_sd = std::sqrt(std::max(0.0, m.covariance(0, 0)));
    if (ens.dimension() == 2) {
      rec.inv_t2_mean = m.mean[1];
      rec.inv_t2_sd = std::sqrt(std::max(0.0, m.covariance(1, 1)));
      rec.cov_norm = covariance_norm(ens, heuristic);
    }
    rec.wall_clock = backend.clock();
    trace.records.push_back(rec);
  }
  trace.final_posterior = posterior_moments(ens);
  return trace;
}

}  // namespace

RunTrace run_estimation(Backend& backend, const LikelihoodModel& likelihood, const Prior& prior,
                        const EstimationConfig& config, std::uint64_t seed) {
  return run_loop(backend, likelihood, prior, config, seed, std::nullopt);
}

RunTrace run_tracking(Backend& backend, const LikelihoodModel& likelihood, const Prior& prior,
                      const TrackerConfig& config, std::uint64_t seed) {
  config.validate();
  return run_loop(backend, likelihood, prior, config.base, seed, ResetRule{config.r_resample, config.p_reset});
}

double nms_error(std::span<const double> estimates, std::span<const double> truth, double omega0) {
  if (omega0 == 0.0) throw DomainError("nms error needs a nonzero nominal omega");
  if (estimates.size() != truth.size()) throw DomainError("nms error: length mismatch");
  if (estimates.empty()) throw DomainError("nms error: empty series");
  double acc = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double d = estimates[i] - truth[i];
    acc += d * d;
  }
  return acc / (static_cast<double>(estimates.size()) * omega0 * omega0);
}

double nms_error(const RunTrace& trace, const FieldWaveform& truth) {
  std::vector<double> est, tru;
  est.reserve(trace.records.size());
  tru.reserve(trace.records.size());
  for (const auto& r : trace.records) {
    est.push_back(r.omega_mean);
    tru.push_back(truth.omega_at(r.t_start));
  }
  return nms_error(est, tru, truth.nominal_omega());
}

// ---------------------------------------------------------------------------
// NDJSON

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

void write_trace(std::ostream& out, const RunTrace& trace) {
  const auto& h = trace.header;
  json head;
  head["type"] = "header";
  head["mode"] = h.mode;
  head["seed"] = h.seed;
  head["config_hash"] = h.config_hash;
  head["n_particles"] = h.n_particles;
  head["M"] = h.sequences_per_epoch;
  head["epochs"] = h.epochs;
  head["xi"] = h.xi;
  head["a"] = h.a;
  head["t_resample"] = h.t_resample;
  head["r_resample"] = optional_json(h.r_resample);
  head["p_reset"] = optional_json(h.p_reset);
  head["gamma"] = h.gamma;
  out << head.dump() << '\n';

  for (const auto& r : trace.records) {
    json j;
    j["type"] = "epoch";
    j["epoch"] = r.epoch;
    j["tau_requested"] = r.tau_requested;
    j["tau"] = r.tau;
    j["photon_count"] = r.photon_count;
    j["outcome"] = r.outcome;
    j["omega_mean"] = r.omega_mean;
    j["omega_sd"] = r.omega_sd;
    j["b_mean"] = r.omega_mean / h.gamma;
    j["b_sd"] = r.omega_sd / h.gamma;
    j["inv_t2_mean"] = r.inv_t2_mean;
    j["inv_t2_sd"] = r.inv_t2_sd;
    j["cov_norm"] = number_or_null(r.cov_norm);
    j["ess"] = r.ess;
    j["resampled"] = r.resampled;
    j["reset"] = r.reset;
    j["noise_skipped"] = r.noise_skipped;
    j["mode"] = r.mode == HeuristicMode::kMulti ? "multi" : "single";
    j["t_start"] = r.t_start;
    j["wall_clock"] = r.wall_clock;
    j["tau_comp"] = optional_json(r.tau_comp);
    j["true_omega"] = optional_json(r.true_omega);
    out << j.dump() << '\n';
  }

  json fin;
  fin["type"] = "final";
  const auto& m = trace.final_posterior;
  std::vector<double> mean(m.mean.data(), m.mean.data() + m.mean.size());
  json cov = json::array();
  for (Eigen::Index r = 0; r < m.covariance.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.covariance.cols(); ++c) row.push_back(m.covariance(r, c));
    cov.push_back(row);
  }
  fin["mean"] = mean;
  fin["covariance"] = cov;
  fin["error"] = optional_json(trace.error);
  out << fin.dump() << '\n';
}

RunTrace read_trace(std::istream& in) {
  RunTrace trace;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false, have_final = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), line_no);
    }
    try {
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        auto& h = trace.header;
        h.mode = j.at("mode").get<std::string>();
        h.seed = j.at("seed").get<std::uint64_t>();
        h.config_hash = j.at("config_hash").get<std::string>();
        h.n_particles = j.at("n_particles").get<std::size_t>();
        h.sequences_per_epoch = j.at("M").get<int>();
        h.epochs = j.at("epochs").get<int>();
        h.xi = j.at("xi").get<double>();
        h.a = j.at("a").get<double>();
        h.t_resample = j.at("t_resample").get<double>();
        if (!j.at("r_resample").is_null()) h.r_resample = j.at("r_resample").get<int>();
        if (!j.at("p_reset").is_null()) h.p_reset = j.at("p_reset").get<int>();
        h.gamma = j.at("gamma").get<double>();
        have_header = true;
      } else if (type == "epoch") {
        EpochRecord r;
        r.epoch = j.at("epoch").get<int>();
        r.tau_requested = j.at("tau_requested").get<double>();
        r.tau = j.at("tau").get<double>();
        r.photon_count = j.at("photon_count").get<double>();
        r.outcome = j.at("outcome").get<int>();
        r.omega_mean = j.at("omega_mean").get<double>();
        r.omega_sd = j.at("omega_sd").get<double>();
        r.inv_t2_mean = j.at("inv_t2_mean").get<double>();
        r.inv_t2_sd = j.at("inv_t2_sd").get<double>();
        r.cov_norm = number_from(j.at("cov_norm"));
        r.ess = j.at("ess").get<double>();
        r.resampled = j.at("resampled").get<bool>();
        r.reset = j.at("reset").get<bool>();
        r.noise_skipped = j.at("noise_skipped").get<bool>();
        r.mode = j.at("mode").get<std::string>() == "multi" ? HeuristicMode::kMulti : HeuristicMode::kSingle;
        r.t_start = j.at("t_start").get<double>();
        r.wall_clock = j.at("wall_clock").get<double>();
        if (!j.at("tau_comp").is_null()) r.tau_comp = j.at("tau_comp").get<double>();
        if (!j.at("true_omega").is_null()) r.true_omega = j.at("true_omega").get<double>();
        trace.records.push_back(r);
      } else if (type == "final") {
        const auto mean = j.at("mean").get<std::vector<double>>();
        const auto cov = j.at("covariance").get<std::vector<std::vector<double>>>();
        auto& m = trace.final_posterior;
        m.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        m.covariance.resize(static_cast<Eigen::Index>(cov.size()), static_cast<Eigen::Index>(cov.size()));
        for (std::size_t r = 0; r < cov.size(); ++r) {
          if (cov[r].size() != cov.size()) throw ParseError("covariance is not square", line_no);
          for (std::size_t c = 0; c < cov.size(); ++c) {
            m.covariance(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cov[r][c];
          }
        }
        if (!j.at("error").is_null()) trace.error = j.at("error").get<std::string>();
        have_final = true;
      } else {
        throw ParseError("unknown record type '" + type + "'", line_no);
      }
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (!have_header) throw ParseError("trace has no header record", line_no);
  if (!have_final) throw ParseError("trace has no final record", line_no);
  return trace;
}

}  // namespace mfl
