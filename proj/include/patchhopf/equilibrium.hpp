// Positive equilibria u^d of the coupled model for d in (0, d*), the
// uncoupled equilibrium u0, and the expansion data (beta*, xi*) describing
// how u^d collapses onto the Perron direction as d -> d*.
#pragma once

#include <vector>

#include "patchhopf/model.hpp"
#include "patchhopf/spectral.hpp"
#include "patchhopf/types.hpp"

namespace patchhopf {

// Per-patch equilibrium of the uncoupled system: the positive root of
// g_j(x) = f_j(x, x). Bracketing + bisection with a Newton polish.
Vec solve_u0(const GrowthLaw& law);

struct EquilibriumPoint {
  double d = 0.0;
  Vec u;                 // componentwise positive
  double residual = 0.0; // ||F(u)||_2 of the steady-state map
  int newton_iters = 0;
};

// Damped Newton on F_j(u) = d sum_k a_jk u_k + u_j f_j(u_j, u_j) from `guess`.
// Throws RegimeError("extinction") when d >= d* (no positive equilibrium) and
// SolverError("newton-stagnation") when damping cannot restore progress.
EquilibriumPoint solve_equilibrium(const ModelConfig& model, double d,
                                   const Vec& guess);

// Equilibria along an increasing d grid, each warm-started from the previous
// point (the first from u0). Errors are rethrown with the offending d.
std::vector<EquilibriumPoint> equilibrium_branch(const ModelConfig& model,
                                                 const std::vector<double>& d_grid);

// Leading-order data of the equilibrium branch at d*:
//   u^d = beta_star (d* - d) [eta + (d* - d) xi_star + O((d*-d)^2)].
struct DstarExpansion {
  double beta_star = 0.0;
  Vec xi_star;           // in X1: <sigma, xi_star> = 0
  double a_tilde = 0.0;  // sum_j a_j(0,0) eta_j^2 sigma_j
  double b_tilde = 0.0;  // sum_j b_j(0,0) eta_j^2 sigma_j
  double residual = 0.0; // linear-system residual for xi_star
};

// Computes beta*, xi* from the Perron data and the growth-law partials at the
// origin. Throws ValidationError when a_tilde + b_tilde >= 0 (the growth
// hypotheses force it negative; nonnegative means inconsistent inputs).
DstarExpansion dstar_expansion(const GrowthLaw& law, const PerronData& P);

// Slope of the equilibrium branch at d = 0 for the pure-delay logistic law
// (a_hat = 0, b_hat = 1, so u0 = m):  (u_j^d)'|_{d=0} = (1/m_j) sum_k a_jk m_k.
// Throws RegimeError("unsupported-law") for any other law.
Vec du_at_zero(const ModelConfig& model);

}  // namespace patchhopf
