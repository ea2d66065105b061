#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "patchhopf/equilibrium.hpp"

using namespace patchhopf;
using testing::vec;

namespace {

// Steady-state residual F_j(u) = d sum_k a_jk u_k + u_j f_j(u_j, u_j).
double steady_residual(const ModelConfig& model, double d, const Vec& u) {
  Vec F = d * (model.A.matrix() * u);
  for (int j = 0; j < model.n(); ++j)
    F[j] += u[j] * model.law->eval(j, u[j], u[j]);
  return F.norm();
}

}  // namespace

TEST_CASE("solve_u0 returns m/(a_hat + b_hat) for logistic laws") {
  const Logistic law(vec({2.0, 3.0}), vec({0.5, 1.0}), vec({1.5, 0.5}));
  const Vec u0 = solve_u0(law);
  CHECK(u0[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(u0[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("symmetric pair equilibrium is (1-d, 1-d) exactly") {
  const ModelConfig model = testing::sym_twopatch();
  for (double d : {0.1, 0.5, 0.9}) {
    const EquilibriumPoint eq =
        solve_equilibrium(model, d, solve_u0(*model.law));
    CHECK(std::abs(eq.u[0] - (1.0 - d)) < 1e-10);
    CHECK(std::abs(eq.u[1] - (1.0 - d)) < 1e-10);
    CHECK(eq.residual < 1e-10);
  }
}

TEST_CASE("4-patch equilibrium: positive, small residual, frozen values") {
  const ModelConfig model = testing::model_of(testing::mat4_main(),
                                              testing::m4());
  const EquilibriumPoint eq = solve_equilibrium(model, 10.0,
                                                solve_u0(*model.law));
  CHECK(eq.u.minCoeff() > 0.0);
  CHECK(eq.residual < 1e-10);
  CHECK(steady_residual(model, 10.0, eq.u) < 1e-9);
  CHECK(eq.u[0] == doctest::Approx(2.2639).epsilon(1e-3));
  CHECK(eq.u[1] == doctest::Approx(1.9277).epsilon(1e-3));
  CHECK(eq.u[2] == doctest::Approx(0.7542).epsilon(1e-3));
  CHECK(eq.u[3] == doctest::Approx(0.5265).epsilon(1e-3));
}

TEST_CASE("solve_equilibrium refuses the extinct regime") {
  const ModelConfig model = testing::model_of(testing::mat2_cyc(),
                                              testing::m2());
  const PerronData P = find_dstar(model.A, model.m());
  try {
    solve_equilibrium(model, P.d_star * 1.01, solve_u0(*model.law));
    FAIL("expected RegimeError");
  } catch (const RegimeError& e) {
    CHECK(e.kind() == "extinction");
  }
}

TEST_CASE("equilibrium_branch walks a grid with warm starts") {
  const ModelConfig model = testing::model_of(testing::mat2_cyc(),
                                              testing::m2());
  const std::vector<double> grid = {0.5, 1.0, 2.0, 3.0, 4.0};
  const auto branch = equilibrium_branch(model, grid);
  REQUIRE(branch.size() == grid.size());
  for (size_t i = 0; i < grid.size(); ++i) {
    CHECK(branch[i].d == grid[i]);
    CHECK(branch[i].u.minCoeff() > 0.0);
    CHECK(branch[i].residual < 1e-10);
  }
  // Total density decreases toward extinction along this branch.
  for (size_t i = 1; i < branch.size(); ++i)
    CHECK(branch[i].u.sum() < branch[i - 1].u.sum());
}

TEST_CASE("equilibrium collapses onto the Perron direction near d*") {
  const ModelConfig model = testing::model_of(testing::mat2_cyc(),
                                              testing::m2());
  const PerronData P = find_dstar(model.A, model.m());
  const DstarExpansion exp = dstar_expansion(*model.law, P);
  const double d = P.d_star * (1.0 - 1e-4);
  const EquilibriumPoint eq = solve_equilibrium(model, d, solve_u0(*model.law));
  const Vec predicted = exp.beta_star * (P.d_star - d) * P.eta;
  CHECK((eq.u - predicted).norm() < 0.01 * eq.u.norm());
}

TEST_CASE("dstar_expansion on the symmetric pair: beta* = 2, xi* = 0") {
  const ModelConfig model = testing::sym_twopatch();
  const PerronData P = find_dstar(model.A, model.m());
  const DstarExpansion exp = dstar_expansion(*model.law, P);
  CHECK(exp.beta_star == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(exp.xi_star.norm() < 1e-9);
  CHECK(exp.a_tilde == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(exp.b_tilde == doctest::Approx(-0.25).epsilon(1e-9));
  CHECK(exp.residual < 1e-10);
  // xi* lives in the sigma-orthogonal complement by construction.
  CHECK(std::abs(P.sigma.dot(exp.xi_star)) < 1e-12);
}

TEST_CASE("dstar_expansion rejects laws with nonnegative a~ + b~") {
  const ModelConfig model = testing::sym_twopatch();
  const PerronData P = find_dstar(model.A, model.m());
  const Logistic flat(vec({1.0, 1.0}), vec({0.0, 0.0}), vec({0.0, 0.0}));
  CHECK_THROWS_AS(dstar_expansion(flat, P), ValidationError);
}

TEST_CASE("du_at_zero matches the finite-difference branch slope") {
  const ModelConfig model = testing::model_of(testing::mat2_cyc(),
                                              testing::m2());
  const Vec du = du_at_zero(model);
  // Closed form (1/m_j) sum_k a_jk m_k: (0, -0.55) for this matrix.
  CHECK(du[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(du[1] == doctest::Approx(-0.55).epsilon(1e-12));

  const double h = 1e-6;
  const Vec u0 = solve_u0(*model.law);
  const Vec uh = solve_equilibrium(model, h, u0).u;
  const Vec fd = (uh - u0) / h;
  CHECK((fd - du).norm() < 1e-4);
}

TEST_CASE("du_at_zero is defined only for the pure-delay logistic law") {
  const DispersionMatrix A(testing::mat2_cyc());
  const auto mixed = std::make_shared<Logistic>(testing::m2(),
                                                vec({0.5, 0.5}),
                                                vec({1.0, 1.0}));
  const ModelConfig model(A, mixed);
  try {
    du_at_zero(model);
    FAIL("expected RegimeError");
  } catch (const RegimeError& e) {
    CHECK(e.kind() == "unsupported-law");
  }
}
