#pragma once

namespace mfl {

/// Fixed per-sequence experimental overheads and the per-particle compute cost,
/// all in seconds.
struct OverheadBudget {
  double tau_las = 3e-6;
  double tau_wait = 1e-6;
  double tau_ttl = 20e-9;
  double tau_mw = 50e-9;
  double tau_comp_per_particle = 0.4e-6;

  double per_sequence() const { return tau_las + tau_wait + tau_ttl + tau_mw; }

  static OverheadBudget none() { return {0.0, 0.0, 0.0, 0.0, 0.0}; }

  void validate() const;
};

}  // namespace mfl
