#include "patchhopf/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/LU>

namespace patchhopf {
namespace {

Vec steady_state_map(const ModelConfig& model, double d, const Vec& u) {
  const int n = model.n();
  Vec F = d * (model.A.matrix() * u);
  for (int j = 0; j < n; ++j) F[j] += u[j] * model.law->eval(j, u[j], u[j]);
  return F;
}

Mat steady_state_jacobian(const ModelConfig& model, double d, const Vec& u) {
  const int n = model.n();
  Mat J = d * model.A.matrix();
  for (int j = 0; j < n; ++j) {
    const double f = model.law->eval(j, u[j], u[j]);
    const double a = model.law->dx(j, u[j], u[j]);
    const double b = model.law->dy(j, u[j], u[j]);
    J(j, j) += f + u[j] * (a + b);
  }
  return J;
}

}  // namespace

Vec solve_u0(const GrowthLaw& law) {
  const int n = law.patches();
  Vec u0(n);
  for (int j = 0; j < n; ++j) {
    auto g = [&](double x) { return law.eval(j, x, x); };
    if (!(g(0.0) > 0.0))
      throw ValidationError("intrinsic rate of patch " + std::to_string(j + 1) +
                            " is not positive");
    double hi = 1.0;
    int tries = 0;
    while (g(hi) > 0.0 && tries++ < 600) hi *= 2.0;
    if (g(hi) > 0.0)
      throw ValidationError("per-capita rate of patch " + std::to_string(j + 1) +
                            " never becomes negative");
    double lo = 0.0;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) > 0.0 ? lo : hi) = mid;
    }
    // Newton polish; keep the bracket value if the slope is unusable.
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 30; ++it) {
      const double gp = law.dx(j, x, x) + law.dy(j, x, x);
      if (!(gp < 0.0)) break;
      const double step = g(x) / gp;
      const double x_new = x - step;
      if (!(x_new > 0.0)) break;
      x = x_new;
      if (std::abs(step) <= 1e-15 * x) break;
    }
    u0[j] = x;
  }
  return u0;
}

EquilibriumPoint solve_equilibrium(const ModelConfig& model, double d,
                                   const Vec& guess) {
  if (d < 0.0) throw DimensionError("dispersal rate must be >= 0");
  if (guess.size() != model.n())
    throw DimensionError("guess has wrong number of patches");
  if ((guess.array() <= 0.0).any())
    throw DimensionError("guess must be componentwise positive");
  if (d > 0.0 && spectral_bound(model.A, model.m(), d) <= 0.0) {
    std::ostringstream os;
    os << "no positive equilibrium at d = " << d
       << ": the spectral bound is nonpositive (extinction regime)";
    throw RegimeError("extinction", os.str());
  }

  Vec u = guess;
  Vec F = steady_state_map(model, d, u);
  double res = F.norm();
  int iters = 0;
  constexpr int kMaxIters = 100;
  constexpr int kMaxHalvings = 60;
  while (res > 1e-12 * (1.0 + u.norm())) {
    if (++iters > kMaxIters) {
      std::ostringstream os;
      os << "Newton did not converge at d = " << d << " (residual " << res
         << "); continue along the branch from a closer d";
      throw SolverError("newton-stagnation", os.str());
    }
    const Mat J = steady_state_jacobian(model, d, u);
    const Vec du = J.partialPivLu().solve(-F);
    double lambda = 1.0;
    int halvings = 0;
    for (;; lambda *= 0.5) {
      const Vec u_try = u + lambda * du;
      if ((u_try.array() > 0.0).all()) {
        const Vec F_try = steady_state_map(model, d, u_try);
        if (F_try.norm() < res) {
          u = u_try;
          F = F_try;
          res = F.norm();
          break;
        }
      }
      if (++halvings > kMaxHalvings) {
        std::ostringstream os;
        os << "Newton stagnated at d = " << d << " (residual " << res
           << " not reduced after 60 halvings); warm-start from a nearby "
              "equilibrium";
        throw SolverError("newton-stagnation", os.str());
      }
    }
  }
  return EquilibriumPoint{d, u, res, iters};
}

std::vector<EquilibriumPoint> equilibrium_branch(const ModelConfig& model,
                                                 const std::vector<double>& d_grid) {
  if (!std::is_sorted(d_grid.begin(), d_grid.end()))
    throw DimensionError("d grid must be sorted ascending");
  std::vector<EquilibriumPoint> branch;
  branch.reserve(d_grid.size());
  Vec guess = solve_u0(*model.law);
  for (double d : d_grid) {
    branch.push_back(solve_equilibrium(model, d, guess));
    guess = branch.back().u;
  }
  return branch;
}

DstarExpansion dstar_expansion(const GrowthLaw& law, const PerronData& P) {
  const int n = law.patches();
  if (P.eta.size() != n || P.system.rows() != n)
    throw DimensionError("Perron data does not match the growth law");
  auto [a, b] = partials_at(law, Vec::Zero(n));
  const Vec m = law.intrinsic_rates();

  DstarExpansion out;
  out.a_tilde = (a.array() * P.eta.array().square() * P.sigma.array()).sum();
  out.b_tilde = (b.array() * P.eta.array().square() * P.sigma.array()).sum();
  const double ab = out.a_tilde + out.b_tilde;
  if (!(ab < 0.0))
    throw ValidationError(
        "a~ + b~ must be negative under the growth hypotheses; got " +
        std::to_string(ab));

  const double weighted_m = (m.array() * P.eta.array() * P.sigma.array()).sum();
  out.beta_star = weighted_m / (-P.d_star * ab);

  // xi* solves d* (d*A + diag m) xi = -rhs with <sigma, xi> = 0. The core is
  // singular with null pair (eta, sigma), and <sigma, rhs> = 0 holds exactly
  // by the choice of beta*, so bordering by (eta, sigma) pins the unique X1
  // representative without perturbing the equation.
  Vec rhs(n);
  for (int j = 0; j < n; ++j)
    rhs[j] = P.eta[j] *
             (m[j] + P.d_star * out.beta_star * (a[j] + b[j]) * P.eta[j]);

  Mat K = Mat::Zero(n + 1, n + 1);
  K.topLeftCorner(n, n) = P.d_star * P.system;
  K.topRightCorner(n, 1) = P.eta;
  K.bottomLeftCorner(1, n) = P.sigma.transpose();
  Eigen::VectorXd full_rhs = Eigen::VectorXd::Zero(n + 1);
  full_rhs.head(n) = -rhs;
  const Eigen::VectorXd sol = K.partialPivLu().solve(full_rhs);
  out.xi_star = sol.head(n);

  out.residual = (P.d_star * (P.system * out.xi_star) + rhs).norm();
  if (out.residual > 1e-10 * (1.0 + rhs.norm()))
    throw SolverError("bordered-solve",
                      "expansion coefficient solve left residual " +
                          std::to_string(out.residual));
  return out;
}

Vec du_at_zero(const ModelConfig& model) {
  const auto* logi = dynamic_cast<const Logistic*>(model.law.get());
  if (!logi || logi->a_hat().cwiseAbs().maxCoeff() > 1e-12 ||
      (logi->b_hat().array() - 1.0).abs().maxCoeff() > 1e-12)
    throw RegimeError("unsupported-law",
                      "equilibrium slope at d = 0 is implemented for the "
                      "pure-delay logistic law (a_hat = 0, b_hat = 1)");
  const Vec& m = logi->m();
  const Mat& A = model.A.matrix();
  Vec slope(model.n());
  for (int j = 0; j < model.n(); ++j) slope[j] = A.row(j).dot(m) / m[j];
  return slope;
}

}  // namespace patchhopf
