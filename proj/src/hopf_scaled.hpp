// Internal pieces of the rescaled crossing system (unknowns w, r, h, theta
// with nu = (d* - d) h). Split out so the unit tests can probe the algebraic
// consistency of the residual directly.
#pragma once

#include "patchhopf/equilibrium.hpp"
#include "patchhopf/model.hpp"
#include "patchhopf/spectral.hpp"
#include "patchhopf/types.hpp"

namespace patchhopf::internal {

struct ScaledData {
  double d = 0.0;
  double dd = 0.0;      // d* - d
  double d_star = 0.0;
  double beta = 0.0;    // branch amplitude: u = beta dd (eta + dd xi)
  Vec u;                // equilibrium at d
  Vec eta, sigma;
  Vec xi;               // second-order branch direction, in sigma-perp
  Vec qvec;             // (f_j(u,u) - m_j)/dd
  Vec a, b;             // growth-law partials at (u_j, u_j)
  Vec m;
  Mat core;             // d*A + diag(m)
  Mat B;                // n x (n-1) orthonormal basis of sigma-perp
};

ScaledData make_scaled_data(const ModelConfig& model, double d, const Vec& u,
                            const PerronData& P);

struct ScaledResidual {
  CVec y;       // d * core * w + dd (c + e) .* psi
  CVec F1;      // y - dd F2 * ones, lies in sigma-perp
  Complex F2;   // sum_j sigma_j (c_j + e_j) psi_j
  double F3;    // ||r eta + w||^2 - ||eta||^2
};

ScaledResidual scaled_residual(const ScaledData& D, const CVec& w, double r,
                               double h, double theta);

}  // namespace patchhopf::internal
