// Spectral bound of d*A + diag(m), the critical dispersal rate d* where it
// crosses zero, and the Perron vectors there. Everything downstream (positive
// equilibria, Hopf curves) hangs off these quantities.
#pragma once

#include <utility>

#include "patchhopf/model.hpp"
#include "patchhopf/types.hpp"

namespace patchhopf {

// s(d) = max Re eig(d*A + diag(m)). Strictly decreasing in d for valid A.
double spectral_bound(const DispersionMatrix& A, const Vec& m, double d);

// Critical dispersal rate and the Perron pair at it.
struct PerronData {
  double d_star = 0.0;
  Mat system;          // d*A + diag(m), the matrix that is singular at d*
  Vec eta;             // right null vector of `system`, > 0, sum = 1
  Vec sigma;           // left null vector, > 0, sum = 1
  double residual_eta = 0.0;    // ||system * eta||_2
  double residual_sigma = 0.0;  // ||system^T * sigma||_2

  double eta_dot_sigma() const { return sigma.dot(eta); }
};

// Finds d* with s(d*) = 0 by bracketing + bisection, then extracts the
// Perron vectors by shifted power iteration on d*A + diag(m) + cI with
// c = 1 + max_j |a_jj d* + m_j|. Requires max_j m_j > 0 (else s(0) <= 0 and
// no crossing exists; throws RegimeError).
PerronData find_dstar(const DispersionMatrix& A, const Vec& m);

// Splits x = r*eta + w with <sigma, w> = 0. Returns (r, w).
std::pair<double, Vec> project_X1(const Vec& x, const PerronData& P);

}  // namespace patchhopf
