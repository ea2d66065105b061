// Direct integration of the delayed patch model by the method of steps
// (classical RK4 with cubic Hermite dense output, step dividing tau exactly),
// plus trajectory post-processing: convergence/periodicity detection and the
// simulation-based check of a predicted Hopf threshold.
#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "patchhopf/hopf.hpp"
#include "patchhopf/model.hpp"
#include "patchhopf/types.hpp"

namespace patchhopf {

// Initial data on [-tau, 0]. Sampled histories interpolate linearly.
class History {
public:
  static History constant(Vec value);
  static History sampled(std::vector<double> times, std::vector<Vec> states);

  Vec eval(double t) const;  // t <= 0; clamps to the sampled range
  int dim() const;

private:
  History() = default;
  std::optional<Vec> const_value_;
  std::vector<double> times_;   // increasing, in [-tau, 0]
  std::vector<Vec> states_;
};

class Trajectory {
public:
  Trajectory(std::vector<double> times, std::vector<Vec> states,
             std::vector<Vec> derivs, std::vector<std::string> warnings);

  const std::vector<double>& times() const { return times_; }
  const std::vector<Vec>& states() const { return states_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  double t_end() const { return times_.back(); }
  int dim() const { return static_cast<int>(states_.front().size()); }

  // Cubic Hermite interpolation between grid nodes (locally O(h^4), so the
  // delayed reads inside the integrator keep RK4 at order 4).
  Vec at(double t) const;

  // t, u_1..u_n rows with 17 significant digits.
  void write_csv(const std::string& path) const;

private:
  std::vector<double> times_;
  std::vector<Vec> states_;
  std::vector<Vec> derivs_;  // RHS at the nodes, for dense output
  std::vector<std::string> warnings_;
};

// Integrates from `history` to t_end. The step is snapped so it divides tau
// exactly (discontinuity points land on nodes); tau = 0 degenerates to plain
// RK4 on the ODE. Throws SolverError("divergence") when ||u|| exceeds 1e12;
// components dipping below -1e-8 add a positivity warning with the time.
Trajectory integrate(const ModelConfig& model, double d, double tau,
                     const History& history, double t_end, double step);

// Long-time verdicts for a trajectory relative to equilibrium u_eq.
struct Converged {
  double rate = 0.0;  // exponential decay estimate from the tail
};
struct Periodic {
  double amplitude = 0.0;  // max over components of trailing peak-to-trough
  double period = 0.0;     // mean peak spacing, averaged across components
};
struct Undetermined {
  std::string reason;
};
using Asymptotics = std::variant<Converged, Periodic, Undetermined>;

// Discards `transient_fraction` of the run, then: Converged when the
// sup-distance to u_eq ends below 1e-6 (relative to the equilibrium scale)
// and the analysis window contracts head to tail, or sits entirely at the
// accuracy floor of u_eq; Periodic when per-component peak amplitudes
// stabilize (successive drift < 1%) with consistent spacing; otherwise
// Undetermined with the reason.
Asymptotics detect_asymptotics(const Trajectory& traj, const Vec& u_eq,
                               double transient_fraction = 0.5);

std::string to_string(const Asymptotics& a);

// Integrates just below and just above a predicted threshold tau0 and checks
// the verdict flips from Converged to Periodic. History is 1.01 * u_eq; the
// window starts at 40 periods and doubles while verdicts stay Undetermined.
// The frequency comparison against nu runs in a separate near-threshold pass
// at tau = (1 + min(margin, 0.03)) * tau0: at the full margin the orbit has
// finite amplitude and its period is no longer the linear 2 pi / nu.
struct VerifyHopfReport {
  bool passed = false;
  Asymptotics below = Undetermined{"not run"};
  Asymptotics above = Undetermined{"not run"};
  Asymptotics freq = Undetermined{"not run"};
  double tau_below = 0.0;
  double tau_above = 0.0;
  double tau_freq = 0.0;
  double period_rel_err = 0.0;  // |2 pi/period - nu| / nu from the freq run
  std::string detail;
};

VerifyHopfReport verify_hopf(const ModelConfig& model, double d, const Vec& u_eq,
                             const HopfPoint& hopf, double margin = 0.15);

}  // namespace patchhopf
