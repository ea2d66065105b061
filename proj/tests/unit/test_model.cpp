#include <memory>

#include "doctest.h"
#include "helpers.hpp"
#include "patchhopf/model.hpp"

using namespace patchhopf;
using testing::vec;

TEST_CASE("validate_dispersion accepts the reference matrices") {
  for (const Mat& A : {testing::mat4_main(), testing::mat4_alt(),
                       testing::mat2_cyc(), testing::mat2_steep(),
                       testing::mat3_chain()}) {
    const ValidationReport rep = validate_dispersion(A);
    CHECK(rep.valid());
    CHECK(rep.sign_pattern_ok);
    CHECK(rep.irreducible_ok);
    CHECK(rep.column_loss_ok);
  }
}

TEST_CASE("validate_dispersion flags a negative off-diagonal entry") {
  Mat A = testing::mat2_cyc();
  A(0, 1) = -0.5;
  const ValidationReport rep = validate_dispersion(A);
  CHECK_FALSE(rep.valid());
  CHECK_FALSE(rep.sign_pattern_ok);
}

TEST_CASE("validate_dispersion flags a reducible graph") {
  // Two disconnected 2-cycles: valid sign pattern and column sums, but no
  // path between the blocks.
  Mat A = Mat::Zero(4, 4);
  A(0, 1) = 1.0; A(1, 0) = 1.0;
  A(2, 3) = 1.0; A(3, 2) = 1.0;
  for (int k = 0; k < 4; ++k) A(k, k) = -A.col(k).sum() - 0.2;
  const ValidationReport rep = validate_dispersion(A);
  CHECK_FALSE(rep.valid());
  CHECK_FALSE(rep.irreducible_ok);
  CHECK(rep.sign_pattern_ok);
  CHECK(rep.column_loss_ok);
}

TEST_CASE("validate_dispersion requires loss: a positive column sum fails") {
  Mat A = testing::mat2_cyc();
  A(1, 0) = 2.5;  // column 0 sums to +0.5
  const ValidationReport rep = validate_dispersion(A);
  CHECK_FALSE(rep.valid());
  CHECK_FALSE(rep.column_loss_ok);
  bool mentions_column = false;
  for (const auto& v : rep.violations)
    if (v.find("column-loss") != std::string::npos) mentions_column = true;
  CHECK(mentions_column);
}

TEST_CASE("validate_dispersion requires at least one strictly lossy column") {
  // Perfectly conservative transport: every column sums to exactly zero.
  Mat A(2, 2);
  A << -1, 1, 1, -1;
  const ValidationReport rep = validate_dispersion(A);
  CHECK_FALSE(rep.valid());
  CHECK_FALSE(rep.column_loss_ok);
}

TEST_CASE("validate_dispersion rejects malformed shapes") {
  CHECK_THROWS_AS(validate_dispersion(Mat::Zero(2, 3)), DimensionError);
  Mat one(1, 1);
  one << -1.0;
  CHECK_THROWS_AS(validate_dispersion(one), DimensionError);
}

TEST_CASE("DispersionMatrix construction enforces validity") {
  CHECK_NOTHROW(DispersionMatrix(testing::mat2_cyc()));
  Mat bad = testing::mat2_cyc();
  bad(1, 0) = 2.5;
  try {
    DispersionMatrix A(bad);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.kind() == "validation");
    CHECK(std::string(e.what()).find("column-loss") != std::string::npos);
  }
  const DispersionMatrix A(testing::mat2_cyc());
  CHECK(A.n() == 2);
  CHECK(A(0, 1) == 1.0);
  CHECK(A(1, 0) == 0.9);
}

TEST_CASE("Logistic evaluates f, partials, and intrinsic rates") {
  const Logistic law(vec({2.0, 3.0}), vec({0.5, 0.0}), vec({1.0, 1.0}));
  CHECK(law.patches() == 2);
  CHECK(law.eval(0, 1.0, 2.0) == doctest::Approx(2.0 - 0.5 - 2.0));
  CHECK(law.dx(0, 7.0, 9.0) == -0.5);
  CHECK(law.dy(1, 7.0, 9.0) == -1.0);
  const Vec m = law.intrinsic_rates();
  CHECK(m[0] == 2.0);
  CHECK(m[1] == 3.0);
}

TEST_CASE("validate_growth accepts proper logistic laws") {
  const auto law = testing::pure_delay(vec({1.0, 2.0}));
  CHECK(validate_growth(*law).valid());
  const Logistic mixed(vec({1.0, 2.0}), vec({0.3, 0.0}), vec({0.2, 1.0}));
  CHECK(validate_growth(mixed).valid());
}

TEST_CASE("validate_growth rejects nonpositive rates and flat laws") {
  const Logistic bad_rate(vec({1.0, -0.5}), vec({0.0, 0.0}), vec({1.0, 1.0}));
  CHECK_FALSE(validate_growth(bad_rate).valid());
  // a_hat = b_hat = 0 in patch 1: g_1 is constant, never reaches zero.
  const Logistic flat(vec({1.0, 1.0}), vec({0.0, 0.0}), vec({0.0, 1.0}));
  CHECK_FALSE(validate_growth(flat).valid());
  const Logistic negcoef(vec({1.0, 1.0}), vec({-0.2, 0.0}), vec({1.0, 1.0}));
  CHECK_FALSE(validate_growth(negcoef).valid());
}

TEST_CASE("validate_growth samples custom laws for monotone decay") {
  const CustomLaw ok(
      2, [](int, double x, double y) { return 2.0 - x - y; },
      [](int, double, double) { return -1.0; },
      [](int, double, double) { return -1.0; });
  CHECK(validate_growth(ok).valid());
  // Growth increasing in density: g' > 0, hypothesis violated.
  const CustomLaw rising(
      2, [](int, double x, double) { return 1.0 + x; },
      [](int, double, double) { return 1.0; },
      [](int, double, double) { return 0.0; });
  CHECK_FALSE(validate_growth(rising).valid());
}

TEST_CASE("ModelConfig checks law size and parameter signs") {
  const DispersionMatrix A(testing::mat2_cyc());
  const auto law3 = testing::pure_delay(vec({1.0, 2.0, 3.0}));
  CHECK_THROWS_AS(ModelConfig(A, law3), DimensionError);
  const auto law2 = testing::pure_delay(testing::m2());
  CHECK_THROWS_AS(ModelConfig(A, law2, -0.1, 0.0), DimensionError);
  CHECK_THROWS_AS(ModelConfig(A, law2, 0.1, -1.0), DimensionError);
  const ModelConfig model(A, law2, 0.1, 2.0);
  CHECK(model.n() == 2);
  CHECK(model.m()[1] == 2.0);
}

TEST_CASE("partials_at returns the logistic slopes independent of state") {
  const Logistic law(vec({2.0, 3.0}), vec({0.5, 0.1}), vec({1.0, 0.7}));
  const auto [a, b] = partials_at(law, vec({0.3, 4.0}));
  CHECK(a[0] == -0.5);
  CHECK(a[1] == doctest::Approx(-0.1));
  CHECK(b[0] == -1.0);
  CHECK(b[1] == doctest::Approx(-0.7));
}

TEST_CASE("classify_patches splits oscillatory, damped, degenerate") {
  // Patch 1: pure delay (oscillatory). Patch 2: instantaneous dominates
  // (damped). Patch 3: exactly balanced (degenerate).
  const Logistic law(vec({1.0, 1.0, 1.0}), vec({0.0, 1.0, 0.5}),
                     vec({1.0, 0.5, 0.5}));
  const Vec u0 = vec({1.0, 1.0 / 1.5, 1.0});
  const PatchClassification cls = classify_patches(law, u0);
  REQUIRE(cls.oscillatory.size() == 1);
  CHECK(cls.oscillatory[0] == 0);
  REQUIRE(cls.damped.size() == 1);
  CHECK(cls.damped[0] == 1);
  REQUIRE(cls.degenerate.size() == 1);
  CHECK(cls.degenerate[0] == 2);
  CHECK(cls.has_degenerate());
}
