#include "run_config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "mfl/errors.hpp"

namespace mfl::cli {

namespace {

constexpr std::uint64_t kCalibrationStream = 0x5ca1'ab1eULL;

// Reads one JSON object, copying every value it returns (defaults included)
// into `out` so the resolved document is complete and canonical.
class Reader {
 public:
  Reader(const json* in, json& out, std::string path) : in_(in), out_(out), path_(std::move(path)) {
    if (in_ && !in_->is_object()) throw ConfigError(label() + " must be an object");
    if (!out_.is_object()) out_ = json::object();
  }

  bool has(const char* key) const { return in_ && in_->contains(key) && !in_->at(key).is_null(); }

  template <class T>
  T get(const char* key, T fallback) {
    T v = has(key) ? convert<T>(key) : fallback;
    out_[key] = v;
    return v;
  }

  template <class T>
  T require(const char* key) {
    if (!has(key)) throw ConfigError("missing required field '" + field(key) + "'");
    T v = convert<T>(key);
    out_[key] = v;
    return v;
  }

  template <class T>
  std::optional<T> maybe(const char* key) {
    if (!has(key)) {
      out_[key] = nullptr;
      return std::nullopt;
    }
    T v = convert<T>(key);
    out_[key] = v;
    return v;
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    return has(key) ? &in_->at(key) : nullptr;
  }

  Reader child(const char* key) {
    seen_.insert(key);
    return Reader(has(key) ? &in_->at(key) : nullptr, out_[key], field(key));
  }

  void positive(const char* key, double v) const {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("field '" + field(key) + "' must be positive");
  }
  void nonnegative(const char* key, double v) const {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("field '" + field(key) + "' must be >= 0");
  }

  void finish() const {
    if (!in_) return;
    for (const auto& [k, _] : in_->items()) {
      if (!seen_.count(k) && !out_.contains(k)) throw ConfigError("unknown field '" + field(k.c_str()) + "'");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  json& out() { return out_; }

 private:
  std::string label() const { return path_.empty() ? "configuration" : "field '" + path_ + "'"; }

  template <class T>
  T convert(const char* key) {
    seen_.insert(key);
    const json& j = in_->at(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!j.is_number()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!j.is_number_integer() && !j.is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!j.is_string()) throw ConfigError("");
      }
      return j.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("field '" + field(key) + "' has the wrong type");
    }
  }

  const json* in_;
  json& out_;
  std::string path_;
  std::set<std::string> seen_;
};

OverheadBudget read_overheads(Reader parent, const json* raw, const std::string& path) {
  if (!raw || (raw->is_string() && raw->get<std::string>() == "standard")) {
    parent.out()["overheads"] = "standard";
    return OverheadBudget{};
  }
  if (raw->is_string() && raw->get<std::string>() == "none") {
    parent.out()["overheads"] = "none";
    return OverheadBudget::none();
  }
  if (!raw->is_object()) throw ConfigError("field '" + path + "' must be \"standard\", \"none\" or an object");
  Reader r(raw, parent.out()["overheads"], path);
  const OverheadBudget d;
  OverheadBudget b;
  b.tau_las = r.get("tau_las", d.tau_las);
  b.tau_wait = r.get("tau_wait", d.tau_wait);
  b.tau_ttl = r.get("tau_ttl", d.tau_ttl);
  b.tau_mw = r.get("tau_mw", d.tau_mw);
  b.tau_comp_per_particle = r.get("tau_comp_per_particle", d.tau_comp_per_particle);
  r.finish();
  try {
    b.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("field '" + path + "': " + e.what());
  }
  return b;
}

FieldWaveform read_waveform(Reader r, double gamma, std::uint64_t default_seed) {
  const auto kind = r.require<std::string>("kind");
  try {
    if (kind == "constant") {
      const double b = r.require<double>("b");
      r.finish();
      return FieldWaveform::constant(gamma * b);
    }
    if (kind == "stepwise") {
      const json* steps = r.raw("steps");
      if (!steps || !steps->is_array() || steps->empty()) {
        throw ConfigError("missing required field '" + r.field("steps") + "'");
      }
      std::vector<std::pair<double, double>> levels;
      for (const auto& s : *steps) {
        if (!s.is_array() || s.size() != 2 || !s[0].is_number() || !s[1].is_number()) {
          throw ConfigError("field '" + r.field("steps") + "' must hold [time, field] pairs");
        }
        levels.emplace_back(s[0].get<double>(), gamma * s[1].get<double>());
      }
      r.out()["steps"] = *steps;
      r.finish();
      return FieldWaveform::stepwise(std::move(levels));
    }
    if (kind == "sinusoid") {
      const double b0 = r.require<double>("b0");
      const double amp = r.require<double>("amplitude");
      const double nu = r.require<double>("nu");
      r.finish();
      return FieldWaveform::sinusoid(gamma * b0, gamma * amp, nu);
    }
    if (kind == "chirp") {
      const double b0 = r.require<double>("b0");
      const double amp = r.require<double>("amplitude");
      const double nu0 = r.require<double>("nu0");
      const double k = r.require<double>("k");
      r.finish();
      return FieldWaveform::chirp(gamma * b0, gamma * amp, nu0, k);
    }
    if (kind == "ou") {
      const double mean = r.require<double>("mean");
      const double reversion = r.require<double>("reversion");
      const double diffusion = r.require<double>("diffusion");
      const double dt = r.require<double>("dt");
      const auto seed = r.get<std::uint64_t>("seed", default_seed);
      r.finish();
      return FieldWaveform::ornstein_uhlenbeck(gamma * mean, reversion, gamma * gamma * diffusion, dt, seed);
    }
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.find("field '") != std::string::npos) throw;
    throw ConfigError("field '" + r.field("kind") + "' (" + kind + "): " + what);
  }
  throw ConfigError("field '" + r.field("kind") + "' must be one of constant, stepwise, sinusoid, chirp, ou");
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

RunConfig resolve(const json& document, const std::string& command, const Overrides& overrides) {
  json doc = document.is_null() ? json::object() : document;
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  if (overrides.seed) doc["seed"] = *overrides.seed;
  if (overrides.runs) doc["runs"] = *overrides.runs;
  if (overrides.epochs) doc["epochs"] = *overrides.epochs;

  RunConfig c;
  c.command = command;
  Reader top(&doc, c.resolved, "");
  top.out()["command"] = command;
  if (doc.contains("command") && doc["command"] != command) {
    throw ConfigError("configuration was resolved for '" + doc["command"].get<std::string>() + "', not '" + command +
                      "'");
  }
  top.raw("command");

  c.seed = top.get<std::uint64_t>("seed", 1);
  c.runs = top.get<int>("runs", 1);
  if (c.runs < 1) throw ConfigError("field 'runs' must be >= 1");
  const int epochs = top.get<int>("epochs", 200);
  if (epochs < 1) throw ConfigError("field 'epochs' must be >= 1");
  c.xi = top.get<double>("xi", 1.0);
  if (!(c.xi > 0.0 && c.xi <= 1.0)) throw ConfigError("field 'xi' must lie in (0, 1]");
  double gamma = top.get<double>("gamma", kDefaultGamma);
  top.positive("gamma", gamma);

  // Backend.
  {
    Reader b = top.child("backend");
    const auto kind = b.get<std::string>("kind", "simulator");
    c.m = b.get<int>("M", 1);
    if (c.m < 1) throw ConfigError("field 'backend.M' must be >= 1");
    c.overheads = read_overheads(b, b.raw("overheads"), "backend.overheads");
    if (kind == "simulator") {
      c.backend = RunConfig::BackendKind::kSimulator;
      c.simulator.waveform = read_waveform(b.child("waveform"), gamma, c.seed);
      const auto t2 = b.maybe<double>("t2");
      if (t2) b.positive("t2", *t2);
      c.simulator.inv_t2 = t2 ? 1.0 / *t2 : 0.0;
      c.simulator.p_click_1 = b.get<double>("p_click_1", 1.0);
      c.simulator.p_click_0 = b.get<double>("p_click_0", 0.0);
      c.simulator.sequences_per_epoch = c.m;
      c.simulator.overheads = c.overheads;
      try {
        c.simulator.validate();
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("field 'backend': ") + e.what());
      }
    } else if (kind == "replay") {
      c.backend = RunConfig::BackendKind::kReplay;
      const auto path = b.require<std::string>("dataset");
      const auto sel = b.get<std::string>("selection", "random");
      if (sel == "random") {
        c.selection = SweepSelection::kRandom;
      } else if (sel == "peak") {
        c.selection = SweepSelection::kPeak;
      } else {
        throw ConfigError("field 'backend.selection' must be random or peak");
      }
      try {
        auto data = std::make_shared<FringeDataset>(load_fringe(path));
        data->validate();
        c.dataset = std::move(data);
      } catch (const ParseError& e) {
        throw ConfigError("field 'backend.dataset': " + path + ": " + e.what());
      } catch (const std::exception& e) {
        throw ConfigError("field 'backend.dataset': " + std::string(e.what()));
      }
      gamma = c.dataset->gamma;
    } else {
      throw ConfigError("field 'backend.kind' must be simulator or replay");
    }
    b.finish();
  }

  // Prior. Synthesising a fringe file does not need one.
  if (command != "ingest" || doc.contains("prior")) {
    Reader p = top.child("prior");
    const double b_min = p.require<double>("b_min");
    const double b_max = p.require<double>("b_max");
    p.nonnegative("b_min", b_min);
    if (!(b_max > b_min)) throw ConfigError("field 'prior.b_max' must exceed prior.b_min");
    const auto t2_min = p.maybe<double>("t2_min");
    const auto t2_max = p.maybe<double>("t2_max");
    p.finish();
    if (t2_min.has_value() != t2_max.has_value()) {
      throw ConfigError(std::string("missing required field 'prior.") + (t2_min ? "t2_max" : "t2_min") + "'");
    }
    if (t2_min) {
      p.positive("t2_min", *t2_min);
      if (!(*t2_max > *t2_min)) throw ConfigError("field 'prior.t2_max' must exceed prior.t2_min");
      c.prior = std::make_shared<Prior>(Prior::uniform(gamma * b_min, gamma * b_max, 1.0 / *t2_max, 1.0 / *t2_min));
    } else {
      c.prior = std::make_shared<Prior>(Prior::uniform(gamma * b_min, gamma * b_max));
    }
  }

  // Inference and design.
  auto& est = c.estimation;
  est.epochs = epochs;
  {
    const json* parts = top.raw("particles");
    if (parts && parts->is_string() && parts->get<std::string>() == "auto") {
      c.auto_particles = true;
      top.out()["particles"] = "auto";
    } else if (!parts || parts->is_number_integer() || parts->is_number_unsigned()) {
      const auto n = parts ? parts->get<std::int64_t>() : 2000;
      if (n < 2) throw ConfigError("field 'particles' must be >= 2 or \"auto\"");
      est.n_particles = static_cast<std::size_t>(n);
      top.out()["particles"] = n;
    } else {
      throw ConfigError("field 'particles' must be an integer or \"auto\"");
    }
  }
  {
    Reader r = top.child("resampler");
    const auto a = r.maybe<double>("a");
    const auto t = r.maybe<double>("t_resample");
    r.finish();
    if (a) est.resampler.a = *a;
    if (t) est.resampler.t_resample = *t;
    try {
      est.resampler.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("field 'resampler': ") + e.what());
    }
    // Explicit values win over the particle-count rule.
    r.out()["a"] = a ? json(*a) : json(nullptr);
    r.out()["t_resample"] = t ? json(*t) : json(nullptr);
  }
  {
    Reader h = top.child("heuristic");
    auto& hc = est.heuristic;
    hc.constants.gamma = gamma;
    hc.tau_max = h.maybe<double>("tau_max");
    hc.tau_min = h.maybe<double>("tau_min");
    if (!hc.tau_min && c.dataset) {
      hc.tau_min = c.dataset->dtau_ns * 1e-9;
      h.out()["tau_min"] = *hc.tau_min;
    }
    hc.multiparam_activation_epoch = h.get<int>("activation_epoch", 100);
    hc.norm_b = h.maybe<double>("norm_b");
    hc.norm_t2 = h.maybe<double>("norm_t2");
    hc.multi_tau_unit = h.maybe<double>("tau_unit");
    h.finish();
    try {
      hc.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("field 'heuristic': ") + e.what());
    }
  }
  {
    Reader o = top.child("outcome");
    const auto rule = o.get<std::string>("rule", "majority");
    if (rule == "majority") {
      est.outcome.rule = OutcomeRule::kMajority;
    } else if (rule == "probabilistic") {
      est.outcome.rule = OutcomeRule::kProbabilistic;
    } else {
      throw ConfigError("field 'outcome.rule' must be majority or probabilistic");
    }
    const auto n_bar = o.maybe<double>("n_bar");
    const auto n_max = o.maybe<double>("n_max");
    c.calibration.epochs = o.get<int>("calibration_epochs", 1000);
    if (c.calibration.epochs < 1) throw ConfigError("field 'outcome.calibration_epochs' must be >= 1");
    c.calibration.tau_window = o.get<double>("calibration_window", est.heuristic.tau_max.value_or(10e-6));
    o.positive("calibration_window", c.calibration.tau_window);
    o.finish();
    const bool fixed = est.outcome.rule == OutcomeRule::kMajority ? n_bar.has_value() : n_max.has_value();
    if (fixed) {
      if (n_bar) o.positive("n_bar", *n_bar);
      if (n_max) o.positive("n_max", *n_max);
      c.calibration.fixed = Calibration{n_bar.value_or(0.0), n_max.value_or(0.0)};
    }
  }
  {
    Reader t = top.child("tracker");
    c.r_resample = t.get<int>("r_resample", 5);
    c.p_reset = t.get<int>("p_reset", 3);
    t.finish();
    if (c.r_resample < 1) throw ConfigError("field 'tracker.r_resample' must be >= 1");
    if (c.p_reset < 0) throw ConfigError("field 'tracker.p_reset' must be >= 0");
  }
  if (command == "sweep") {
    Reader s = top.child("sweep");
    const json* ms = s.raw("M");
    if (!ms) throw ConfigError("missing required field 'sweep.M'");
    if (!ms->is_array() || ms->empty()) throw ConfigError("field 'sweep.M' must be a non-empty list");
    for (const auto& v : *ms) {
      if (!v.is_number_integer() || v.get<int>() < 1) throw ConfigError("field 'sweep.M' entries must be integers >= 1");
      c.sweep_m.push_back(v.get<int>());
    }
    s.out()["M"] = *ms;
    c.sweep_m_max = s.get<int>("M_max", *std::max_element(c.sweep_m.begin(), c.sweep_m.end()));
    if (c.sweep_m_max < *std::max_element(c.sweep_m.begin(), c.sweep_m.end())) {
      throw ConfigError("field 'sweep.M_max' must be >= every sweep.M");
    }
    c.fit_start_ratio = s.get<double>("fit_start_ratio", 5.0);
    s.positive("fit_start_ratio", c.fit_start_ratio);
    s.finish();
    if (c.backend == RunConfig::BackendKind::kReplay) {
      for (int m : c.sweep_m) {
        for (const auto& rec : c.dataset->records) {
          if (rec.counts.size() < static_cast<std::size_t>(m)) {
            throw ConfigError("field 'sweep.M': M = " + std::to_string(m) + " exceeds the recorded sweeps");
          }
        }
      }
    }
  } else {
    top.raw("sweep");
    if (doc.contains("sweep")) top.out()["sweep"] = doc["sweep"];
  }
  if (c.backend == RunConfig::BackendKind::kReplay && command != "sweep") {
    for (const auto& rec : c.dataset->records) {
      if (rec.counts.size() < static_cast<std::size_t>(c.m)) {
        throw ConfigError("field 'backend.M': M = " + std::to_string(c.m) + " exceeds the recorded sweeps");
      }
    }
  }
  top.finish();

  if (c.calibration.fixed) {
    est.outcome.calibration = *c.calibration.fixed;
    try {
      est.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("field 'outcome': ") + e.what());
    }
  }
  c.hash = fnv1a_hex(c.resolved.dump());
  return c;
}

std::unique_ptr<Backend> make_backend(const RunConfig& config, int m, std::uint64_t run_seed) {
  if (config.backend == RunConfig::BackendKind::kReplay) {
    return std::make_unique<ReplayBackend>(config.dataset, m, config.selection, config.overheads, run_seed);
  }
  SimulatorConfig sim = config.simulator;
  sim.sequences_per_epoch = m;
  sim.seed = run_seed;
  return std::make_unique<SimulatorBackend>(sim);
}

EstimationConfig estimation_for(const RunConfig& config, int m, std::uint64_t cell_seed) {
  EstimationConfig est = config.estimation;
  if (config.auto_particles) {
    const int m_max = std::max(config.sweep_m_max, m);
    const auto rule = particle_count_rule(m, m_max);
    est.n_particles = rule.n_part;
    const auto& r = config.resolved.at("resampler");
    if (r.at("a").is_null()) est.resampler.a = rule.a;
    if (r.at("t_resample").is_null()) est.resampler.t_resample = rule.t_resample;
  }
  if (!config.calibration.fixed) {
    const auto seed = derive_seed(cell_seed, kCalibrationStream);
    if (config.backend == RunConfig::BackendKind::kReplay) {
      est.outcome.calibration = calibrate(*config.dataset, m, config.calibration.epochs, seed);
    } else {
      SimulatorConfig sim = config.simulator;
      sim.sequences_per_epoch = m;
      est.outcome.calibration = calibrate(sim, config.calibration.epochs, config.calibration.tau_window, seed);
    }
  }
  est.validate();
  return est;
}

}  // namespace mfl::cli
