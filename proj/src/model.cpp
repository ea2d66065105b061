#include "patchhopf/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace patchhopf {
namespace {

// Strong connectivity of the directed graph with an edge k -> j whenever
// a_jk > 0 (mass can move from patch k to patch j). BFS once forward and
// once along reversed edges; both must reach every node.
bool strongly_connected(const Mat& A) {
  const int n = static_cast<int>(A.rows());
  auto reaches_all = [&](bool forward) {
    std::vector<char> seen(n, 0);
    std::vector<int> queue{0};
    seen[0] = 1;
    while (!queue.empty()) {
      int v = queue.back();
      queue.pop_back();
      for (int w = 0; w < n; ++w) {
        if (w == v || seen[w]) continue;
        double entry = forward ? A(w, v) : A(v, w);
        if (entry > 0.0) {
          seen[w] = 1;
          queue.push_back(w);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c; });
  };
  return reaches_all(true) && reaches_all(false);
}

}  // namespace

ValidationReport validate_dispersion(const Mat& raw) {
  if (raw.rows() != raw.cols())
    throw DimensionError("dispersal matrix must be square, got " +
                         std::to_string(raw.rows()) + "x" +
                         std::to_string(raw.cols()));
  const int n = static_cast<int>(raw.rows());
  if (n < 2)
    throw DimensionError("dispersal matrix needs at least 2 patches");

  ValidationReport rep;
  const double scale = std::max(1.0, raw.cwiseAbs().maxCoeff());
  const double tol = 1e-12 * scale;

  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      if (j == k && raw(j, j) > tol) {
        rep.sign_pattern_ok = false;
        std::ostringstream os;
        os << "sign-pattern: diagonal entry (" << j + 1 << "," << j + 1
           << ") = " << raw(j, j) << " must be <= 0";
        rep.violations.push_back(os.str());
      } else if (j != k && raw(j, k) < -tol) {
        rep.sign_pattern_ok = false;
        std::ostringstream os;
        os << "sign-pattern: off-diagonal entry (" << j + 1 << "," << k + 1
           << ") = " << raw(j, k) << " must be >= 0";
        rep.violations.push_back(os.str());
      }
    }
  }

  if (!strongly_connected(raw)) {
    rep.irreducible_ok = false;
    rep.violations.push_back(
        "irreducibility: dispersal graph is not strongly connected");
  }

  bool some_strict = false;
  for (int j = 0; j < n; ++j) {
    const double colsum = raw.col(j).sum();
    if (colsum > tol) {
      rep.column_loss_ok = false;
      std::ostringstream os;
      os << "column-loss: column " << j + 1 << " sums to " << colsum
         << " but must be <= 0";
      rep.violations.push_back(os.str());
    }
    if (colsum < -tol) some_strict = true;
  }
  if (rep.column_loss_ok && !some_strict) {
    rep.column_loss_ok = false;
    rep.violations.push_back(
        "column-loss: at least one column sum must be strictly negative");
  }

  return rep;
}

DispersionMatrix::DispersionMatrix(Mat entries) : entries_(std::move(entries)) {
  ValidationReport rep = validate_dispersion(entries_);
  if (!rep.valid()) {
    std::string msg = "invalid dispersal matrix:";
    for (const auto& v : rep.violations) msg += "\n  " + v;
    throw ValidationError(msg);
  }
}

Vec GrowthLaw::intrinsic_rates() const {
  Vec m(patches());
  for (int j = 0; j < patches(); ++j) m[j] = eval(j, 0.0, 0.0);
  return m;
}

Logistic::Logistic(Vec m, Vec a_hat, Vec b_hat)
    : m_(std::move(m)), a_hat_(std::move(a_hat)), b_hat_(std::move(b_hat)) {
  if (m_.size() != a_hat_.size() || m_.size() != b_hat_.size())
    throw DimensionError("logistic coefficient vectors must share one length");
  if (m_.size() < 1) throw DimensionError("logistic law needs >= 1 patch");
}

namespace {

// Positive root of g(x) = f(j, x, x) by doubling bracket + bisection.
// Returns 0 and records a violation when no sign change is found.
double bracket_root(const GrowthLaw& law, int j, std::vector<std::string>* out) {
  auto g = [&](double x) { return law.eval(j, x, x); };
  double hi = 1.0;
  int tries = 0;
  while (g(hi) > 0.0 && tries++ < 600) hi *= 2.0;
  if (g(hi) > 0.0) {
    if (out)
      out->push_back("growth: g_" + std::to_string(j + 1) +
                     " never becomes negative; no finite carrying capacity");
    return 0.0;
  }
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

ValidationReport validate_growth(const GrowthLaw& law) {
  ValidationReport rep;
  const int n = law.patches();

  for (int j = 0; j < n; ++j) {
    const double m_j = law.eval(j, 0.0, 0.0);
    if (!(m_j > 0.0)) {
      std::ostringstream os;
      os << "growth: intrinsic rate m_" << j + 1 << " = " << m_j
         << " must be > 0";
      rep.violations.push_back(os.str());
    }
  }

  if (const auto* logi = dynamic_cast<const Logistic*>(&law)) {
    for (int j = 0; j < n; ++j) {
      const double a = logi->a_hat()[j], b = logi->b_hat()[j];
      if (a < 0.0 || b < 0.0) {
        std::ostringstream os;
        os << "growth: logistic coefficients of patch " << j + 1
           << " must be >= 0, got (" << a << ", " << b << ")";
        rep.violations.push_back(os.str());
      }
      if (!(a + b > 0.0)) {
        std::ostringstream os;
        os << "growth: logistic patch " << j + 1
           << " needs a_hat + b_hat > 0 for self-limitation";
        rep.violations.push_back(os.str());
      }
    }
    return rep;
  }

  // Generic law: sample g_j'(x) = f_x + f_y on (0, 10 u0_j], 256 log-spaced
  // points, and require strict decrease.
  for (int j = 0; j < n; ++j) {
    if (!(law.eval(j, 0.0, 0.0) > 0.0)) continue;  // already reported
    const double u0 = bracket_root(law, j, &rep.violations);
    if (u0 <= 0.0) continue;
    const double x_hi = 10.0 * u0, x_lo = 1e-9 * u0;
    const double ratio = std::pow(x_hi / x_lo, 1.0 / 255.0);
    double x = x_lo;
    for (int i = 0; i < 256; ++i, x *= ratio) {
      const double gp = law.dx(j, x, x) + law.dy(j, x, x);
      if (!(gp < 0.0)) {
        std::ostringstream os;
        os << "growth: g_" << j + 1 << "'(" << x << ") = " << gp
           << " is not negative; per-capita rate must strictly decrease";
        rep.violations.push_back(os.str());
        break;
      }
    }
  }
  return rep;
}

ModelConfig::ModelConfig(DispersionMatrix A_, std::shared_ptr<const GrowthLaw> law_,
                         double d_, double tau_)
    : A(std::move(A_)), law(std::move(law_)), d(d_), tau(tau_) {
  if (!law) throw DimensionError("model needs a growth law");
  if (law->patches() != A.n())
    throw DimensionError("growth law covers " + std::to_string(law->patches()) +
                         " patches but the dispersal matrix has " +
                         std::to_string(A.n()));
  if (d < 0.0) throw DimensionError("dispersal rate must be >= 0");
  if (tau < 0.0) throw DimensionError("delay must be >= 0");
}

std::pair<Vec, Vec> partials_at(const GrowthLaw& law, const Vec& u) {
  const int n = law.patches();
  if (u.size() != n)
    throw DimensionError("evaluation point has wrong number of patches");
  Vec a(n), b(n);
  for (int j = 0; j < n; ++j) {
    a[j] = law.dx(j, u[j], u[j]);
    b[j] = law.dy(j, u[j], u[j]);
  }
  return {a, b};
}

PatchClassification classify_patches(const GrowthLaw& law, const Vec& u0,
                                     double rel_tol) {
  auto [a, b] = partials_at(law, u0);
  PatchClassification out;
  for (int j = 0; j < law.patches(); ++j) {
    const double gap = a[j] - b[j];
    const double tol = rel_tol * std::max({1.0, std::abs(a[j]), std::abs(b[j])});
    if (gap > tol)
      out.oscillatory.push_back(j);
    else if (gap < -tol)
      out.damped.push_back(j);
    else
      out.degenerate.push_back(j);
  }
  return out;
}

}  // namespace patchhopf
