#include "mfl/experiments.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string_view>

#include "mfl/errors.hpp"

namespace mfl {

void OverheadBudget::validate() const {
  if (tau_las < 0 || tau_wait < 0 || tau_ttl < 0 || tau_mw < 0 || tau_comp_per_particle < 0) {
    throw ConfigError("overheads must be nonnegative");
  }
}

// ---------------------------------------------------------------------------
// FieldWaveform

FieldWaveform FieldWaveform::constant(double omega) {
  if (!(omega >= 0.0) || !std::isfinite(omega)) throw ConfigError("constant field must be finite and >= 0");
  FieldWaveform w;
  w.kind_ = Kind::kConstant;
  w.omega0_ = omega;
  return w;
}

FieldWaveform FieldWaveform::stepwise(std::vector<std::pair<double, double>> steps) {
  if (steps.empty()) throw ConfigError("stepwise waveform needs at least one level");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!(steps[i].second >= 0.0)) throw ConfigError("stepwise levels must be >= 0");
    if (i > 0 && !(steps[i].first > steps[i - 1].first)) {
      throw ConfigError("stepwise times must be strictly increasing");
    }
  }
  FieldWaveform w;
  w.kind_ = Kind::kStepwise;
  w.steps_ = std::move(steps);
  w.omega0_ = w.steps_.front().second;
  return w;
}

FieldWaveform FieldWaveform::sinusoid(double omega0, double amplitude, double nu) {
  if (!(omega0 > 0.0)) throw ConfigError("sinusoid centre must be positive");
  if (!(amplitude >= 0.0 && amplitude < omega0)) throw ConfigError("sinusoid amplitude must satisfy 0 <= w < omega0");
  FieldWaveform w;
  w.kind_ = Kind::kSinusoid;
  w.omega0_ = omega0;
  w.amplitude_ = amplitude;
  w.nu_ = nu;
  return w;
}

FieldWaveform FieldWaveform::chirp(double omega0, double amplitude, double nu0, double k) {
  FieldWaveform w = sinusoid(omega0, amplitude, nu0);
  w.kind_ = Kind::kChirp;
  w.chirp_k_ = k;
  return w;
}

FieldWaveform FieldWaveform::ornstein_uhlenbeck(double mean, double reversion, double diffusion, double dt,
                                                std::uint64_t seed) {
  if (!(mean >= 0.0)) throw ConfigError("OU mean must be >= 0");
  if (!(reversion > 0.0)) throw ConfigError("OU reversion rate must be positive");
  if (!(diffusion >= 0.0)) throw ConfigError("OU diffusion must be >= 0");
  if (!(dt > 0.0)) throw ConfigError("OU grid spacing must be positive");
  FieldWaveform w;
  w.kind_ = Kind::kOrnsteinUhlenbeck;
  w.omega0_ = mean;
  w.reversion_ = reversion;
  w.diffusion_ = diffusion;
  w.dt_ = dt;
  w.seed_ = seed;
  w.ou_rng_.seed(seed);
  return w;
}

FieldWaveform FieldWaveform::reseeded(std::uint64_t seed) const {
  FieldWaveform w = *this;
  w.seed_ = seed;
  w.ou_path_.clear();
  w.ou_rng_.seed(seed);
  return w;
}

double FieldWaveform::omega_at(double t) const {
  switch (kind_) {
    case Kind::kConstant:
      return omega0_;
    case Kind::kStepwise: {
      auto it = std::upper_bound(steps_.begin(), steps_.end(), t,
                                 [](double value, const auto& step) { return value < step.first; });
      if (it == steps_.begin()) return steps_.front().second;
      return std::prev(it)->second;
    }
    case Kind::kSinusoid:
      return omega0_ + amplitude_ * std::cos(nu_ * t);
    case Kind::kChirp:
      return omega0_ + amplitude_ * std::cos((nu_ - chirp_k_ * t) * t);
    case Kind::kOrnsteinUhlenbeck: {
      const auto k = static_cast<std::size_t>(std::max(0.0, std::floor(t / dt_)));
      if (ou_path_.empty()) ou_path_.push_back(omega0_);
      if (k >= ou_path_.size()) {
        const double decay = std::exp(-reversion_ * dt_);
        const double sd = std::sqrt(diffusion_ / (2.0 * reversion_) * (1.0 - decay * decay));
        std::normal_distribution<double> normal(0.0, 1.0);
        while (ou_path_.size() <= k) {
          const double prev = ou_path_.back();
          ou_path_.push_back(omega0_ + (prev - omega0_) * decay + sd * normal(ou_rng_));
        }
      }
      return ou_path_[k];
    }
  }
  return omega0_;
}

double FieldWaveform::nominal_omega() const { return omega0_; }

// ---------------------------------------------------------------------------
// Simulator

void SimulatorConfig::validate() const {
  if (!(inv_t2 >= 0.0)) throw ConfigError("simulator inv_t2 must be >= 0");
  if (sequences_per_epoch < 1) throw ConfigError("sequences per epoch M must be >= 1");
  if (!(p_click_1 >= 0.0 && p_click_1 <= 1.0) || !(p_click_0 >= 0.0 && p_click_0 <= 1.0)) {
    throw ConfigError("click probabilities must lie in [0,1]");
  }
  if (p_click_1 == p_click_0) throw ConfigError("p_click_1 == p_click_0: outcomes carry no information");
  overheads.validate();
}

EpochDatum simulate_epoch(const SimulatorConfig& config, double tau, double t_now, int m, Rng& rng) {
  if (!(tau >= 0.0)) throw DomainError("tau must be nonnegative");
  if (m < 1) throw DomainError("M must be >= 1");
  EpochDatum d;
  d.tau_requested = tau;
  d.tau_actual = tau;
  d.t_start = t_now;
  d.true_omega = config.waveform.omega_at(t_now);
  ModelParams truth{d.true_omega, config.inv_t2 > 0.0 ? std::optional<double>(config.inv_t2) : std::nullopt};
  const double p1 = likelihood_ramsey(truth, tau, 1);
  // Sequences are independent, so the M-sequence count is binomial in the
  // per-sequence click probability.
  const double q = std::clamp(p1 * config.p_click_1 + (1.0 - p1) * config.p_click_0, 0.0, 1.0);
  std::binomial_distribution<int> counts(m, q);
  d.photon_count = counts(rng);
  d.wall_clock = m * (tau + config.overheads.per_sequence());
  return d;
}

SimulatorBackend::SimulatorBackend(SimulatorConfig config) : config_(std::move(config)), rng_(config_.seed) {
  config_.validate();
}

EpochDatum SimulatorBackend::next(double tau) {
  EpochDatum d = simulate_epoch(config_, tau, clock_, config_.sequences_per_epoch, rng_);
  clock_ += d.wall_clock;
  return d;
}

// ---------------------------------------------------------------------------
// Datasets

std::uint64_t FringeRecord::total() const {
  std::uint64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

void FringeDataset::validate() const {
  if (records.empty()) throw DomainError("fringe dataset is empty");
  if (!(dtau_ns > 0.0)) throw DomainError("fringe dataset dtau must be positive");
  if (!(gamma > 0.0)) throw DomainError("fringe dataset gamma must be positive");
  for (std::size_t i = 1; i < records.size(); ++i) {
    const double step = records[i].tau_ns - records[i - 1].tau_ns;
    if (!(step > 0.0)) throw DomainError("fringe taus must be strictly increasing");
    if (std::abs(step - dtau_ns) > 0.01 * dtau_ns) throw DomainError("fringe tau step is not uniform within 1%");
  }
}

std::size_t FringeDataset::nearest_index(double tau) const {
  const double tau_ns = tau * 1e9;
  auto it = std::lower_bound(records.begin(), records.end(), tau_ns,
                             [](const FringeRecord& r, double v) { return r.tau_ns < v; });
  if (it == records.begin()) return 0;
  if (it == records.end()) return records.size() - 1;
  const auto hi = static_cast<std::size_t>(it - records.begin());
  const std::size_t lo = hi - 1;
  return (tau_ns - records[lo].tau_ns) <= (records[hi].tau_ns - tau_ns) ? lo : hi;
}

std::vector<double> FringeDataset::mean_signal() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (format == Format::kPl) {
      out.push_back(r.pl);
    } else {
      out.push_back(r.counts.empty() ? 0.0
                                     : static_cast<double>(r.total()) / static_cast<double>(r.counts.size()));
    }
  }
  return out;
}

namespace {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double parse_double(std::string_view s, std::size_t line, const char* what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError(std::string("malformed ") + what + " '" + std::string(s) + "'", line);
  }
  return v;
}

std::uint32_t parse_u32(std::string_view s, std::size_t line) {
  std::uint32_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("malformed count '" + std::string(s) + "'", line);
  }
  return v;
}

constexpr std::array<char, 4> kMagic = {'M', 'F', 'L', 'D'};
constexpr std::uint16_t kBinaryVersion = 1;

template <class T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if constexpr (std::is_floating_point_v<T>) {
    static_assert(sizeof(T) == 8);
    auto u = std::bit_cast<std::uint64_t>(value);
    for (std::size_t i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(u >> (8 * i));
  } else {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <class T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw ParseError("truncated binary fringe file", 0);
  if constexpr (std::is_floating_point_v<T>) {
    std::uint64_t u = 0;
    for (std::size_t i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return std::bit_cast<double>(u);
  } else {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes[i]) << (8 * i));
    return v;
  }
}

}  // namespace

FringeDataset read_fringe_text(std::istream& in) {
  FringeDataset data;
  bool have_gamma = false, have_dtau = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("header line without '='", line_no);
      const std::string key = line.substr(1, eq - 1);
      const std::string_view value(line.data() + eq + 1, line.size() - eq - 1);
      if (!data.records.empty()) throw ParseError("header line after data rows", line_no);
      if (key == "gamma_rad_per_s_per_T") {
        data.gamma = parse_double(value, line_no, "gamma");
        have_gamma = true;
      } else if (key == "dtau_ns") {
        data.dtau_ns = parse_double(value, line_no, "dtau_ns");
        have_dtau = true;
      } else if (key == "M_total") {
        data.m_total = parse_u32(value, line_no);
      } else if (key == "n_bar") {
        data.n_bar = parse_double(value, line_no, "n_bar");
      } else if (key == "n_max") {
        data.n_max = parse_double(value, line_no, "n_max");
      } else if (key == "format") {
        if (value == "counts") data.format = FringeDataset::Format::kCounts;
        else if (value == "pl") data.format = FringeDataset::Format::kPl;
        else throw ParseError("unknown format '" + std::string(value) + "'", line_no);
      } else {
        throw ParseError("unknown header key '" + key + "'", line_no);
      }
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("record without a tab separator", line_no);
    FringeRecord rec;
    rec.tau_ns = parse_double(std::string_view(line.data(), tab), line_no, "tau_ns");
    std::string_view rest(line.data() + tab + 1, line.size() - tab - 1);
    if (data.format == FringeDataset::Format::kPl) {
      rec.pl = parse_double(rest, line_no, "PL value");
    } else {
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        rec.counts.push_back(parse_u32(rest.substr(0, comma), line_no));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
        if (rest.empty()) throw ParseError("trailing comma in counts", line_no);
      }
    }
    data.records.push_back(std::move(rec));
  }
  if (!have_gamma) throw ParseError("missing header gamma_rad_per_s_per_T", line_no);
  if (!have_dtau) throw ParseError("missing header dtau_ns", line_no);
  try {
    data.validate();
  } catch (const DomainError& e) {
    throw ParseError(e.what(), line_no);
  }
  return data;
}

void write_fringe_text(std::ostream& out, const FringeDataset& data) {
  out << "#gamma_rad_per_s_per_T=" << format_double(data.gamma) << '\n';
  out << "#dtau_ns=" << format_double(data.dtau_ns) << '\n';
  out << "#M_total=" << data.m_total << '\n';
  out << "#n_bar=" << format_double(data.n_bar) << '\n';
  out << "#n_max=" << format_double(data.n_max) << '\n';
  if (data.format == FringeDataset::Format::kPl) out << "#format=pl\n";
  for (const auto& r : data.records) {
    out << format_double(r.tau_ns) << '\t';
    if (data.format == FringeDataset::Format::kPl) {
      out << format_double(r.pl);
    } else {
      for (std::size_t i = 0; i < r.counts.size(); ++i) {
        if (i) out << ',';
        out << r.counts[i];
      }
    }
    out << '\n';
  }
}

FringeDataset read_fringe_binary(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ParseError("bad magic, expected MFLD", 0);
  const auto version = get_le<std::uint16_t>(in);
  if (version != kBinaryVersion) throw ParseError("unsupported binary version " + std::to_string(version), 0);
  FringeDataset data;
  const auto format = get_le<std::uint16_t>(in);
  if (format > 1) throw ParseError("unknown record format " + std::to_string(format), 0);
  data.format = format == 1 ? FringeDataset::Format::kPl : FringeDataset::Format::kCounts;
  data.gamma = get_le<double>(in);
  data.dtau_ns = get_le<double>(in);
  data.n_bar = get_le<double>(in);
  data.n_max = get_le<double>(in);
  data.m_total = get_le<std::uint32_t>(in);
  const auto n_records = get_le<std::uint32_t>(in);
  data.records.resize(n_records);
  for (auto& r : data.records) {
    r.tau_ns = get_le<double>(in);
    if (data.format == FringeDataset::Format::kPl) {
      r.pl = get_le<double>(in);
    } else {
      const auto n = get_le<std::uint32_t>(in);
      r.counts.resize(n);
      for (auto& c : r.counts) c = get_le<std::uint32_t>(in);
    }
  }
  try {
    data.validate();
  } catch (const DomainError& e) {
    throw ParseError(e.what(), 0);
  }
  return data;
}

void write_fringe_binary(std::ostream& out, const FringeDataset& data) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint16_t>(out, kBinaryVersion);
  put_le<std::uint16_t>(out, data.format == FringeDataset::Format::kPl ? 1 : 0);
  put_le<double>(out, data.gamma);
  put_le<double>(out, data.dtau_ns);
  put_le<double>(out, data.n_bar);
  put_le<double>(out, data.n_max);
  put_le<std::uint32_t>(out, data.m_total);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.records.size()));
  for (const auto& r : data.records) {
    put_le<double>(out, r.tau_ns);
    if (data.format == FringeDataset::Format::kPl) {
      put_le<double>(out, r.pl);
    } else {
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.counts.size()));
      for (auto c : r.counts) put_le<std::uint32_t>(out, c);
    }
  }
}

FringeDataset load_fringe(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::array<char, 4> head{};
  in.read(head.data(), head.size());
  const bool binary = in.gcount() == 4 && head == kMagic;
  in.clear();
  in.seekg(0);
  return binary ? read_fringe_binary(in) : read_fringe_text(in);
}

void save_fringe(const std::string& path, const FringeDataset& data, bool binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (binary) write_fringe_binary(out, data);
  else write_fringe_text(out, data);
  if (!out) throw std::runtime_error("write failed for " + path);
}

FringeDataset synthesize_fringe(const SimulatorConfig& config, int points, double dtau, std::uint32_t m_total,
                                std::uint64_t seed) {
  config.validate();
  if (points < 1 || !(dtau > 0.0) || m_total < 1) throw DomainError("synthesize_fringe: bad grid");
  Rng rng(seed);
  FringeDataset data;
  data.dtau_ns = dtau * 1e9;
  data.m_total = m_total;
  ModelParams truth{config.waveform.omega_at(0.0),
                    config.inv_t2 > 0.0 ? std::optional<double>(config.inv_t2) : std::nullopt};
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uint64_t total = 0;
  data.records.reserve(static_cast<std::size_t>(points));
  for (int k = 1; k <= points; ++k) {
    FringeRecord r;
    r.tau_ns = k * data.dtau_ns;
    const double p1 = likelihood_ramsey(truth, r.tau_ns * 1e-9, 1);
    const double q = p1 * config.p_click_1 + (1.0 - p1) * config.p_click_0;
    r.counts.resize(m_total);
    for (auto& c : r.counts) c = unif(rng) < q ? 1u : 0u;
    total += r.total();
    data.records.push_back(std::move(r));
  }
  data.n_bar = static_cast<double>(total) / (static_cast<double>(points) * m_total);
  data.n_max = std::max(config.p_click_1, config.p_click_0);
  return data;
}

namespace {

// Output iterator that accumulates instead of storing.
struct SumIterator {
  using iterator_category = std::output_iterator_tag;
  using value_type = void;
  using difference_type = std::ptrdiff_t;
  using pointer = void;
  using reference = void;

  std::uint64_t* sum;
  SumIterator& operator*() { return *this; }
  SumIterator& operator=(std::uint32_t v) {
    *sum += v;
    return *this;
  }
  SumIterator& operator++() { return *this; }
  SumIterator operator++(int) { return *this; }
};

double sum_sweeps(const FringeRecord& rec, int m, SweepSelection selection, double peak_offset, Rng& rng) {
  const auto available = rec.counts.size();
  if (m < 1) throw DomainError("M must be >= 1");
  if (static_cast<std::size_t>(m) > available) {
    throw DomainError("M = " + std::to_string(m) + " exceeds the " + std::to_string(available) +
                      " sweeps recorded at tau = " + format_double(rec.tau_ns) + " ns");
  }
  const auto mm = static_cast<std::size_t>(m);
  if (selection == SweepSelection::kPeak) {
    const auto start = static_cast<std::size_t>(peak_offset * static_cast<double>(available - mm + 1));
    std::uint64_t s = 0;
    for (std::size_t i = start; i < start + mm; ++i) s += rec.counts[i];
    return static_cast<double>(s);
  }
  if (mm == available) return static_cast<double>(rec.total());
  std::uint64_t s = 0;
  std::sample(rec.counts.begin(), rec.counts.end(), SumIterator{&s}, mm, rng);
  return static_cast<double>(s);
}

}  // namespace

EpochDatum replay_epoch(const FringeDataset& dataset, double tau_requested, int m, SweepSelection selection,
                        Rng& rng) {
  if (dataset.records.empty()) throw DomainError("fringe dataset is empty");
  if (dataset.format != FringeDataset::Format::kCounts) throw DomainError("replay needs per-sequence counts");
  EpochDatum d;
  d.tau_requested = tau_requested;
  const auto idx = dataset.nearest_index(tau_requested);
  d.tau_actual = dataset.tau_seconds(idx);
  double offset = 0.0;
  if (selection == SweepSelection::kPeak) offset = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  d.photon_count = sum_sweeps(dataset.records[idx], m, selection, offset, rng);
  d.wall_clock = m * d.tau_actual;
  return d;
}

ReplayBackend::ReplayBackend(std::shared_ptr<const FringeDataset> dataset, int m, SweepSelection selection,
                             OverheadBudget overheads, std::uint64_t seed)
    : dataset_(std::move(dataset)), m_(m), selection_(selection), overheads_(overheads), rng_(seed) {
  if (!dataset_) throw DomainError("replay backend needs a dataset");
  dataset_->validate();
  if (dataset_->format != FringeDataset::Format::kCounts) throw DomainError("replay needs per-sequence counts");
  if (m_ < 1) throw DomainError("M must be >= 1");
  overheads_.validate();
  peak_offset_ = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
}

EpochDatum ReplayBackend::next(double tau) {
  EpochDatum d;
  d.tau_requested = tau;
  d.t_start = clock_;
  const auto idx = dataset_->nearest_index(tau);
  d.tau_actual = dataset_->tau_seconds(idx);
  d.photon_count = sum_sweeps(dataset_->records[idx], m_, selection_, peak_offset_, rng_);
  d.wall_clock = m_ * (d.tau_actual + overheads_.per_sequence());
  clock_ += d.wall_clock;
  return d;
}

// ---------------------------------------------------------------------------
// Outcomes and calibration

Outcome outcome_majority(double n, double n_bar) {
  if (!(n >= 0.0)) throw DomainError("photon count must be >= 0");
  if (!(n_bar > 0.0)) throw DomainError("majority threshold n_bar must be positive");
  return n > n_bar ? 1 : 0;
}

ProbabilisticOutcome outcome_probabilistic(double n, double n_max, Rng& rng) {
  if (!(n >= 0.0)) throw DomainError("photon count must be >= 0");
  if (!(n_max > 0.0)) throw DomainError("n_max must be positive");
  ProbabilisticOutcome r;
  double p = n / n_max;
  if (p > 1.0) {
    p = 1.0;
    r.clamped = true;
  }
  // Draw unconditionally so the random stream does not depend on n.
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  r.outcome = u < p ? 1 : 0;
  return r;
}

Calibration calibrate(const SimulatorConfig& config, int n_cal, double tau_window, std::uint64_t seed) {
  if (n_cal < 1) throw DomainError("calibration needs at least one epoch");
  if (!(tau_window > 0.0)) throw DomainError("calibration window must be positive");
  config.validate();
  Rng rng(seed);
  double sum = 0.0;
  for (int j = 0; j < n_cal; ++j) {
    const double tau = tau_window * (j + 1) / n_cal;
    sum += simulate_epoch(config, tau, 0.0, config.sequences_per_epoch, rng).photon_count;
  }
  return {sum / n_cal, config.sequences_per_epoch * config.p_click_1};
}

Calibration calibrate(const FringeDataset& dataset, int m, int n_cal, std::uint64_t seed, std::size_t first,
                      std::size_t window) {
  if (n_cal < 1) throw DomainError("calibration needs at least one epoch");
  if (dataset.records.empty()) throw DomainError("empty calibration set");
  if (first >= dataset.records.size()) throw DomainError("calibration window starts past the data");
  if (window == 0) window = dataset.records.size() - first;
  window = std::min(window, dataset.records.size() - first);
  Rng rng(seed);
  double sum = 0.0, max = 0.0;
  for (int j = 0; j < n_cal; ++j) {
    const auto& rec = dataset.records[first + static_cast<std::size_t>(j) % window];
    const double n = sum_sweeps(rec, m, SweepSelection::kRandom, 0.0, rng);
    sum += n;
    max = std::max(max, n);
  }
  return {sum / n_cal, max};
}

Outcome OutcomeExtractor::operator()(double n, Rng& rng) const {
  if (rule == OutcomeRule::kMajority) return outcome_majority(n, calibration.n_bar);
  return outcome_probabilistic(n, calibration.n_max, rng).outcome;
}

}  // namespace mfl
