#include "patchhopf/spectral.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace patchhopf {
namespace {

Mat system_matrix(const DispersionMatrix& A, const Vec& m, double d) {
  if (m.size() != A.n())
    throw DimensionError("intrinsic-rate vector length does not match matrix");
  Mat M = d * A.matrix();
  M.diagonal() += m;
  return M;
}

double max_real_eig(const Mat& M) {
  Eigen::EigenSolver<Mat> es(M, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw SolverError("eigen-nonconvergence",
                      "QR iteration failed to converge on the system matrix");
  return es.eigenvalues().real().maxCoeff();
}

// Power iteration for the Perron vector of B (entrywise nonnegative,
// irreducible, positive diagonal). Normalized to sum 1.
Vec perron_vector(const Mat& B, const char* which) {
  const int n = static_cast<int>(B.rows());
  Vec v = Vec::Constant(n, 1.0 / n);
  constexpr int kMaxIters = 100000;
  for (int it = 0; it < kMaxIters; ++it) {
    Vec w = B * v;
    const double s = w.sum();
    if (!(s > 0.0))
      throw SolverError("power-iteration",
                        std::string("power iteration lost positivity (") +
                            which + ")");
    w /= s;
    const double change = (w - v).cwiseAbs().maxCoeff() / w.cwiseAbs().maxCoeff();
    v = w;
    if (change < 1e-13) return v;
  }
  throw SolverError("power-iteration",
                    std::string("power iteration did not converge in 100000 "
                                "iterations (") +
                        which + ")");
}

// One or two Newton corrections for the eigenpair (v, lambda) of M with the
// affine normalization 1^T v = 1; tightens the power-iteration output to
// machine precision.
void polish_eigenpair(const Mat& M, Vec& v, double& lambda) {
  const int n = static_cast<int>(M.rows());
  for (int pass = 0; pass < 2; ++pass) {
    Mat J(n + 1, n + 1);
    J.topLeftCorner(n, n) = M - lambda * Mat::Identity(n, n);
    J.topRightCorner(n, 1) = -v;
    J.bottomLeftCorner(1, n).setOnes();
    J(n, n) = 0.0;
    Eigen::VectorXd rhs(n + 1);
    rhs.head(n) = -(M * v - lambda * v);
    rhs[n] = 1.0 - v.sum();
    Eigen::VectorXd dx = J.partialPivLu().solve(rhs);
    v += dx.head(n);
    lambda += dx[n];
  }
}

}  // namespace

double spectral_bound(const DispersionMatrix& A, const Vec& m, double d) {
  if (d < 0.0) throw DimensionError("dispersal rate must be >= 0");
  return max_real_eig(system_matrix(A, m, d));
}

PerronData find_dstar(const DispersionMatrix& A, const Vec& m) {
  if (m.size() != A.n())
    throw DimensionError("intrinsic-rate vector length does not match matrix");
  const double m_max = m.maxCoeff();
  if (!(m_max > 0.0))
    throw RegimeError("no-dstar",
                      "max intrinsic rate is not positive; the spectral bound "
                      "never crosses zero");

  // s(0) = max m_j > 0 and s is strictly decreasing: bracket by doubling.
  double lo = 0.0, hi = 1.0;
  int doublings = 0;
  while (spectral_bound(A, m, hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 60)
      throw SolverError("bracket",
                        "spectral bound stayed positive out to d = 2^60");
  }
  while (hi - lo > 1e-12 * hi) {
    const double mid = 0.5 * (lo + hi);
    (spectral_bound(A, m, mid) > 0.0 ? lo : hi) = mid;
  }

  PerronData P;
  P.d_star = 0.5 * (lo + hi);
  const Mat M = system_matrix(A, m, P.d_star);
  const double s_res = std::abs(max_real_eig(M));
  if (s_res > 1e-10 * std::max(1.0, m_max))
    throw SolverError("bisection",
                      "|s(d*)| = " + std::to_string(s_res) +
                          " exceeds tolerance after bisection");

  // Shifted power iteration: B = M + cI is nonnegative and irreducible, its
  // Perron value is c + s(d*) ~ c, and its Perron vectors are the null
  // vectors of M.
  const double c = 1.0 + (A.matrix().diagonal() * P.d_star + m).cwiseAbs().maxCoeff();
  const Mat B = M + c * Mat::Identity(A.n(), A.n());

  Vec eta = perron_vector(B, "right");
  Vec sigma = perron_vector(B.transpose(), "left");
  double lam_eta = 0.0, lam_sigma = 0.0;  // eigenvalues of M itself, ~ 0
  polish_eigenpair(M, eta, lam_eta);
  polish_eigenpair(M.transpose(), sigma, lam_sigma);

  if ((eta.array() <= 0.0).any() || (sigma.array() <= 0.0).any())
    throw SolverError("power-iteration",
                      "Perron vector lost strict positivity after polish");
  eta /= eta.sum();
  sigma /= sigma.sum();

  P.system = M;
  P.eta = eta;
  P.sigma = sigma;
  P.residual_eta = (M * eta).norm();
  P.residual_sigma = (M.transpose() * sigma).norm();
  const double res_tol = 1e-10 * std::max(1.0, m_max);
  if (P.residual_eta > res_tol || P.residual_sigma > res_tol) {
    std::ostringstream os;
    os << "Perron residuals " << P.residual_eta << ", " << P.residual_sigma
       << " exceed " << res_tol;
    throw SolverError("power-iteration", os.str());
  }
  return P;
}

std::pair<double, Vec> project_X1(const Vec& x, const PerronData& P) {
  if (x.size() != P.eta.size())
    throw DimensionError("vector length does not match Perron data");
  const double r = P.sigma.dot(x) / P.sigma.dot(P.eta);
  return {r, x - r * P.eta};
}

}  // namespace patchhopf
