#pragma once
// Run configuration for the command-line front end: a JSON document with
// defaults filled in, flag overrides applied, and everything validated before
// a run starts.

#include <cstdint>
#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mfl/experiments.hpp"
#include "mfl/tracking.hpp"

namespace mfl::cli {

using json = nlohmann::ordered_json;

/// Command-line values that take precedence over the document.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<int> epochs;
};

struct CalibrationSpec {
  // Fixed values from the document, or calibrated per run cell.
  std::optional<Calibration> fixed;
  int epochs = 1000;
  double tau_window = 10e-6;
};

struct RunConfig {
  std::string command;
  json resolved;      // canonical document, embedded in every output
  std::string hash;   // FNV-1a of resolved.dump()
  std::uint64_t seed = 0;
  int runs = 1;

  enum class BackendKind { kSimulator, kReplay };
  BackendKind backend = BackendKind::kSimulator;
  SimulatorConfig simulator;
  std::shared_ptr<const FringeDataset> dataset;
  int m = 1;
  SweepSelection selection = SweepSelection::kRandom;
  OverheadBudget overheads;

  std::shared_ptr<const Prior> prior;
  double xi = 1.0;
  bool auto_particles = false;
  EstimationConfig estimation;
  int r_resample = 5;
  int p_reset = 3;
  CalibrationSpec calibration;

  // sweep
  std::vector<int> sweep_m;
  int sweep_m_max = 0;
  double fit_start_ratio = 5.0;
};

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

/// Fills defaults, applies overrides and validates. Throws ConfigError naming
/// the offending field (dotted path) on any problem.
RunConfig resolve(const json& document, const std::string& command, const Overrides& overrides);

json load_json(const std::string& path);

/// Backend for one run cell. `run_seed` drives the backend's random stream.
std::unique_ptr<Backend> make_backend(const RunConfig& config, int m, std::uint64_t run_seed);

/// Estimation settings for M sequences per epoch, with particle counts from
/// the rule when requested and the outcome threshold calibrated if needed.
EstimationConfig estimation_for(const RunConfig& config, int m, std::uint64_t cell_seed);

}  // namespace mfl::cli
