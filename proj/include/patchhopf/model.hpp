// Model data: dispersal matrix with loss, per-patch growth laws, and the
// structural checks both must pass before any analysis runs.
//
// The dynamics on n patches are
//   u_j'(t) = d * sum_k a_jk u_k(t) + u_j(t) * f_j(u_j(t), u_j(t - tau))
// where A = (a_jk) routes dispersal (column sums <= 0 encode loss in transit)
// and f_j is the per-capita growth rate of patch j, fed by the current and
// the delayed local density.
#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "patchhopf/types.hpp"

namespace patchhopf {

// Outcome of the structural checks. Empty `violations` means valid.
struct ValidationReport {
  std::vector<std::string> violations;
  bool sign_pattern_ok = true;   // offdiag >= 0, diag <= 0
  bool irreducible_ok = true;    // dispersal graph strongly connected
  bool column_loss_ok = true;    // every column sum <= 0, some strictly < 0
  bool valid() const { return violations.empty(); }
};

// Checks a raw square matrix for the dispersal hypotheses:
// essentially nonnegative, irreducible, column sums <= 0 with at least one
// strict. Throws DimensionError if `raw` is not square or has n < 2.
ValidationReport validate_dispersion(const Mat& raw);

// Dispersal matrix that passed validation at construction.
class DispersionMatrix {
public:
  // Throws ValidationError listing every violated clause.
  explicit DispersionMatrix(Mat entries);

  int n() const { return static_cast<int>(entries_.rows()); }
  const Mat& matrix() const { return entries_; }
  double operator()(int j, int k) const { return entries_(j, k); }

private:
  Mat entries_;
};

// Per-capita growth rates f_j(x, y): x is the current density, y the delayed
// one. Implementations supply values and first partials; that is all the
// analysis needs.
class GrowthLaw {
public:
  virtual ~GrowthLaw() = default;
  virtual int patches() const = 0;
  virtual double eval(int j, double x, double y) const = 0;
  virtual double dx(int j, double x, double y) const = 0;  // d f_j / dx
  virtual double dy(int j, double x, double y) const = 0;  // d f_j / dy

  // Intrinsic rates m_j = f_j(0, 0).
  Vec intrinsic_rates() const;
};

// f_j(x, y) = m_j - a_hat_j * x - b_hat_j * y.
class Logistic final : public GrowthLaw {
public:
  Logistic(Vec m, Vec a_hat, Vec b_hat);

  int patches() const override { return static_cast<int>(m_.size()); }
  double eval(int j, double x, double y) const override {
    return m_[j] - a_hat_[j] * x - b_hat_[j] * y;
  }
  double dx(int j, double, double) const override { return -a_hat_[j]; }
  double dy(int j, double, double) const override { return -b_hat_[j]; }

  const Vec& m() const { return m_; }
  const Vec& a_hat() const { return a_hat_; }
  const Vec& b_hat() const { return b_hat_; }

private:
  Vec m_, a_hat_, b_hat_;
};

// Growth law given by callables (j, x, y) -> double.
class CustomLaw final : public GrowthLaw {
public:
  using Fn = std::function<double(int, double, double)>;
  CustomLaw(int n, Fn f, Fn fx, Fn fy)
      : n_(n), f_(std::move(f)), fx_(std::move(fx)), fy_(std::move(fy)) {}

  int patches() const override { return n_; }
  double eval(int j, double x, double y) const override { return f_(j, x, y); }
  double dx(int j, double x, double y) const override { return fx_(j, x, y); }
  double dy(int j, double x, double y) const override { return fy_(j, x, y); }

private:
  int n_;
  Fn f_, fx_, fy_;
};

// Growth-law hypotheses: m_j > 0 and g_j(x) = f_j(x, x) strictly decreasing.
// Logistic laws are checked algebraically (a_hat, b_hat >= 0, sum > 0);
// other laws by sampling g_j' at 256 log-spaced points in (0, 10 * u0_j],
// where u0_j is the root of g_j found by bracketing.
ValidationReport validate_growth(const GrowthLaw& law);

// Full model: dispersal structure, growth laws, and the (d, tau) the CLI
// simulation commands run at. Analysis routines take d (and tau) explicitly.
struct ModelConfig {
  ModelConfig(DispersionMatrix A_, std::shared_ptr<const GrowthLaw> law_,
              double d_ = 0.0, double tau_ = 0.0);

  DispersionMatrix A;
  std::shared_ptr<const GrowthLaw> law;
  double d;    // dispersal rate, >= 0
  double tau;  // delay, >= 0

  int n() const { return A.n(); }
  Vec m() const { return law->intrinsic_rates(); }
};

// First partials (a_j, b_j) = (df_j/dx, df_j/dy) at (u_j, u_j).
std::pair<Vec, Vec> partials_at(const GrowthLaw& law, const Vec& u);

// Partition of patches by the sign of a0_j - b0_j at the isolated equilibrium
// u0 of the uncoupled system. Patches with a0_j - b0_j > 0 can oscillate once
// delayed feedback dominates; ties within tolerance are flagged degenerate.
struct PatchClassification {
  std::vector<int> oscillatory;  // a0_j - b0_j > 0
  std::vector<int> damped;       // a0_j - b0_j < 0
  std::vector<int> degenerate;   // |a0_j - b0_j| below tolerance
  bool has_degenerate() const { return !degenerate.empty(); }
};

PatchClassification classify_patches(const GrowthLaw& law, const Vec& u0,
                                     double rel_tol = 1e-9);

}  // namespace patchhopf
