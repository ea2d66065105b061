// Hopf machinery: the characteristic matrix of the linearization at u^d,
// purely imaginary crossings (nu, theta) and the delay thresholds
// tau_l = (theta + 2 l pi) / nu, simplicity and transversality certificates,
// curve continuation in d, regime classification, and the small-d expansion
// of the first threshold including the topology index of the dispersal
// matrix.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "patchhopf/equilibrium.hpp"
#include "patchhopf/model.hpp"
#include "patchhopf/spectral.hpp"
#include "patchhopf/types.hpp"

namespace patchhopf {

// Characteristic matrix of the linearization at equilibrium u:
//   Delta(mu) = d A + diag(f_j(u_j,u_j)) + diag(u_j a_j)
//             + e^{-mu tau} diag(u_j b_j) - mu I.
// Roots mu of det Delta = 0 are the stability exponents.
CMat eval_delta(const ModelConfig& model, double d, const Vec& u, Complex mu,
                double tau);

// A purely imaginary characteristic root i*nu with delay phase theta = nu*tau,
// plus the certificates attached to it.
struct HopfPoint {
  double d = 0.0;
  double nu = 0.0;     // crossing frequency, > 0
  double theta = 0.0;  // phase in (0, 2 pi)
  CVec phi;            // kernel vector, largest-modulus component real > 0
  CVec psi_adj;        // adjoint kernel vector, same phase convention
  std::vector<double> tau;       // thresholds (theta + 2 l pi)/nu, l = 0..L
  std::vector<Complex> S;        // simplicity certificates S_l, aligned with tau
  double transversality = 0.0;   // d Re(mu)/d tau at tau[0], from the quotient
  double residual = 0.0;         // ||Delta(i nu) phi||_2

  double tau0() const { return tau.at(0); }
};

// Newton start: an approximate crossing. `norm_target` fixes ||phi||_2 of the
// solution (1 for small-d starts, ||eta||_2 near d*).
struct HopfStart {
  CVec phi;
  double nu = 0.0;
  double theta = 0.0;
  double norm_target = 1.0;
};

// Asymptotic start near d*: phi ~ eta, theta* = arccos(-a~/b~),
// nu = (d*-d) h* with h* = beta* sqrt(b~^2 - a~^2) / <sigma, eta>.
// Throws RegimeError("no-hopf") when a~ - b~ <= 0 (then the equilibrium is
// stable for all delays near d*).
HopfStart start_near_dstar(const DstarExpansion& exp, const PerronData& P,
                           double d);

// Start from the uncoupled limit for oscillatory patch q:
// nu0_q = u0_q sqrt(b0_q^2 - a0_q^2), theta0_q = arccos(-a0_q/b0_q),
// phi = e_q. Throws RegimeError("not-oscillatory") when a0_q - b0_q <= 0.
HopfStart start_small_d(const GrowthLaw& law, const Vec& u0, int q);

struct HopfSolveOptions {
  int max_iters = 80;
  int max_halvings = 60;
  int L = 3;                       // thresholds l = 0..L
  double tol = 1e-12;              // Newton residual tolerance (relative)
  // Use the rescaled unknowns (w, r, h, theta) with nu = (d*-d) h; this keeps
  // the Jacobian well conditioned as d -> d*. Requires `perron`.
  bool scaled = false;
  const PerronData* perron = nullptr;
};

// Solves for a crossing at fixed d from `start`; u is the equilibrium there.
// Returns the point with thresholds, simplicity certificates (|S_l| must
// clear 1e-6, else SolverError("degenerate-crossing")) and transversality.
// Throws SolverError on Newton failure, RegimeError("crossing-collapsed")
// when nu falls to zero or theta hits the boundary of (0, 2 pi).
HopfPoint solve_hopf_point(const ModelConfig& model, double d, const Vec& u,
                           const HopfStart& start,
                           const HopfSolveOptions& opts = {});

// Adjoint kernel vector of Delta(i nu): null vector of Delta^H, normalized to
// ||.||_2 = norm_target with the largest-modulus component real positive.
// Precondition: Delta is singular to tolerance, else
// SolverError("not-singular").
CVec adjoint_eigenvector(const CMat& delta, double norm_target);

// One row of the first-crossing curve d -> tau_0(d).
struct HopfCurveRow {
  double d = 0.0;
  double tau0 = 0.0;
  double nu = 0.0;
  double theta = 0.0;
  std::string branch;  // "patch-q" for ascending families, "near-dstar"
};

struct HopfCurve {
  std::vector<HopfCurveRow> rows;  // sorted by d; min-threshold family per d
  // Full per-family data: key = patch index for uncoupled-limit families,
  // -1 for the branch continued down from d*.
  std::map<int, std::vector<HopfPoint>> families;
  // Grid points no family could solve, with the failure kind.
  std::vector<std::pair<double, std::string>> failed;
  double d_star = 0.0;
  // Relative tau0 gap between the ascending minimum and the descending
  // branch at their meeting point (the topmost grid d both sweeps reached).
  // Above 1e-6 a warning brackets where the first crossing switches family.
  double meeting_mismatch = 0.0;
  std::vector<std::string> warnings;
};

// Traces the first-crossing curve over `d_grid` (all points in (0, d*)):
// ascending continuation from the uncoupled limit for every oscillatory
// patch, descending continuation from the d* asymptotics, adaptive step
// bisection on Newton failures, and a consistency check where the sweeps
// overlap (mismatch > 1e-6 relative triggers refinement, then a warning).
HopfCurve hopf_curve(const ModelConfig& model, const std::vector<double>& d_grid);

// Stability classification of the positive equilibrium at dispersal d.
enum class Regime { SmallD, NearDstar };

struct StableAllDelays {};
struct HopfAt {
  double tau0;
  HopfPoint point;
};
struct Inconclusive {
  std::string reason;
};
using StabilityVerdict = std::variant<StableAllDelays, HopfAt, Inconclusive>;

// Near d*: sign of a~ - b~ decides. Small d: the patch partition decides,
// guarded by distinctness of the uncoupled crossing pairs and of the ratios
// theta0_q/nu0_q (ties -> Inconclusive).
StabilityVerdict classify(const ModelConfig& model, double d, Regime regime);

// Topology index of the dispersal matrix for the pure-delay logistic model:
//   T(A) = -(pi/2) a_qq + (1 - pi/2) (1/m_q) sum_{k != q} a_qk m_k,
// where q is the unique argmax of m. The sign of T(A) is the slope sign of
// the first threshold in d at d = 0.
struct TopologyIndex {
  double value = 0.0;
  int q_hat = 0;          // argmax m
  double tau_limit = 0.0; // pi / (2 m_qhat), the d -> 0 threshold
};

TopologyIndex topology_index(const DispersionMatrix& A, const Vec& m);

// First-order expansion of the first threshold:
//   tau(d) ~ pi/(2 m_qhat) + d T(A)/m_qhat^2.
// Also reports the underlying frequency/phase slopes at d = 0.
struct TauExpansion {
  double tau = 0.0;          // expansion value at d
  double tau_limit = 0.0;    // value at d = 0
  double slope = 0.0;        // T(A)/m_qhat^2
  double theta_prime0 = 0.0; // (1/m_q^2) sum_{k != q} a_qk m_k
  double nu_prime0 = 0.0;    // (1/m_q) sum_k a_qk m_k
};

TauExpansion tau_expansion(const DispersionMatrix& A, const Vec& m, double d);

// Independent check of a crossing: rightmost characteristic roots of the
// linearization computed by Chebyshev pseudospectral discretization of the
// solution-operator generator on [-tau, 0], N collocation intervals. The
// result is recomputed at 2N; `refinement_delta` is how far the rightmost
// root moved (> 1e-6 sets `resolution_warning`).
struct RightmostRoots {
  std::vector<Complex> roots;  // sorted by descending real part (at 2N)
  bool resolution_warning = false;
  double refinement_delta = 0.0;
};

RightmostRoots oracle_rightmost_roots(const ModelConfig& model, double d,
                                      const Vec& u, double tau, int N = 32,
                                      int count = 6);

// Delay at which the rightmost root crosses the imaginary axis, located by
// bisection of Re(mu_max) over [tau_lo, tau_hi]. Requires a sign change.
double oracle_tau_crossing(const ModelConfig& model, double d, const Vec& u,
                           double tau_lo, double tau_hi, int N = 32,
                           double tol = 1e-10);

}  // namespace patchhopf
