#include "patchhopf/hopf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "hopf_scaled.hpp"

namespace patchhopf {
namespace {

constexpr double kPi = std::numbers::pi;
const Complex kI{0.0, 1.0};

// std::to_string renders small residuals as 0.000000; report them usefully.
std::string fmt_sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", x);
  return buf;
}

struct Linearization {
  Mat M0;  // dA + diag(f_j(u,u) + u_j a_j)
  Vec ub;  // u_j b_j, the delayed-feedback weights
};

Linearization linearize(const ModelConfig& model, double d, const Vec& u) {
  const int n = model.n();
  if (u.size() != n) throw DimensionError("equilibrium has wrong length");
  Mat M0 = d * model.A.matrix();
  Vec ub(n);
  for (int j = 0; j < n; ++j) {
    const double f = model.law->eval(j, u[j], u[j]);
    const double a = model.law->dx(j, u[j], u[j]);
    const double b = model.law->dy(j, u[j], u[j]);
    M0(j, j) += f + u[j] * a;
    ub[j] = u[j] * b;
  }
  return {M0, ub};
}

CVec real_mul(const Mat& M, const CVec& v) {
  Vec re = M * v.real();
  Vec im = M * v.imag();
  CVec out(v.size());
  for (Eigen::Index j = 0; j < v.size(); ++j) out[j] = Complex(re[j], im[j]);
  return out;
}

// Rotate so the largest-modulus component is real and positive.
void phase_normalize(CVec& v) {
  Eigen::Index k = 0;
  v.cwiseAbs().maxCoeff(&k);
  const Complex vk = v[k];
  if (std::abs(vk) == 0.0) return;
  v *= std::conj(vk) / std::abs(vk);
  v[k] = Complex(std::abs(v[k]), 0.0);  // scrub the rounding residue
}

struct CrossingState {
  CVec phi;
  double nu = 0.0;
  double theta = 0.0;
};

// Newton on the real-ified crossing system at fixed d:
//   (M0 + e^{-i theta} diag(ub)) phi - i nu phi = 0,
//   ||phi||^2 = norm^2,  Im phi_k = 0  (k = dominant start component).
CrossingState solve_raw(const Linearization& lin, const HopfStart& start,
                        const HopfSolveOptions& opts) {
  const int n = static_cast<int>(lin.ub.size());
  if (start.phi.size() != n) throw DimensionError("start vector length");
  const Mat& M0 = lin.M0;
  const Mat Mb = lin.ub.asDiagonal();

  Eigen::Index k = 0;
  start.phi.cwiseAbs().maxCoeff(&k);

  Vec p = start.phi.real(), q = start.phi.imag();
  double nu = start.nu, theta = start.theta;
  const double c2 = start.norm_target * start.norm_target;

  auto residual = [&](const Vec& p_, const Vec& q_, double nu_, double theta_) {
    const Mat Mr = M0 + std::cos(theta_) * Mb;
    const Vec cre = Mr * p_ + std::sin(theta_) * (Mb * q_) + nu_ * q_;
    const Vec cim = Mr * q_ - std::sin(theta_) * (Mb * p_) - nu_ * p_;
    Vec r(2 * n + 2);
    r.head(n) = cre;
    r.segment(n, n) = cim;
    r[2 * n] = p_.squaredNorm() + q_.squaredNorm() - c2;
    r[2 * n + 1] = q_[k];
    return r;
  };

  const double scale =
      1.0 + M0.norm() + lin.ub.cwiseAbs().maxCoeff() + std::abs(nu);
  Vec r = residual(p, q, nu, theta);
  double rn = r.norm();
  for (int it = 0; it < opts.max_iters; ++it) {
    if (rn <= opts.tol * scale) break;
    const double ct = std::cos(theta), st = std::sin(theta);
    const Mat Mr = M0 + ct * Mb;
    Mat J = Mat::Zero(2 * n + 2, 2 * n + 2);
    J.block(0, 0, n, n) = Mr;
    J.block(0, n, n, n) = st * Mb + nu * Mat::Identity(n, n);
    J.block(n, 0, n, n) = -st * Mb - nu * Mat::Identity(n, n);
    J.block(n, n, n, n) = Mr;
    J.block(0, 2 * n, n, 1) = q;
    J.block(n, 2 * n, n, 1) = -p;
    J.block(0, 2 * n + 1, n, 1) = -st * (Mb * p) + ct * (Mb * q);
    J.block(n, 2 * n + 1, n, 1) = -st * (Mb * q) - ct * (Mb * p);
    J.block(2 * n, 0, 1, n) = 2.0 * p.transpose();
    J.block(2 * n, n, 1, n) = 2.0 * q.transpose();
    J(2 * n + 1, n + k) = 1.0;

    const Vec dx = J.partialPivLu().solve(-r);
    if (!dx.allFinite())
      throw SolverError("newton-divergence",
                        "crossing Newton produced a non-finite step");
    double lambda = 1.0;
    int halvings = 0;
    for (;; lambda *= 0.5) {
      const Vec p_try = p + lambda * dx.head(n);
      const Vec q_try = q + lambda * dx.segment(n, n);
      const double nu_try = nu + lambda * dx[2 * n];
      const double theta_try = theta + lambda * dx[2 * n + 1];
      const Vec r_try = residual(p_try, q_try, nu_try, theta_try);
      if (r_try.norm() < rn) {
        p = p_try;
        q = q_try;
        nu = nu_try;
        theta = theta_try;
        r = r_try;
        rn = r.norm();
        break;
      }
      if (++halvings > opts.max_halvings)
        throw SolverError("newton-stagnation",
                          "crossing Newton stagnated (residual " +
                              fmt_sci(rn) + ")");
    }
  }
  if (rn > opts.tol * scale)
    throw SolverError("newton-stagnation",
                      "crossing Newton did not reach tolerance (residual " +
                          fmt_sci(rn) + ")");
  CVec phi(n);
  for (int j = 0; j < n; ++j) phi[j] = Complex(p[j], q[j]);
  return {phi, nu, theta};
}

}  // namespace

namespace internal {

ScaledData make_scaled_data(const ModelConfig& model, double d, const Vec& u,
                            const PerronData& P) {
  const int n = model.n();
  ScaledData D;
  D.d = d;
  D.d_star = P.d_star;
  D.dd = P.d_star - d;
  if (!(D.dd > 0.0))
    throw DimensionError("rescaled solver needs d < d*");
  D.u = u;
  D.eta = P.eta;
  D.sigma = P.sigma;
  D.m = model.m();
  D.core = P.system;

  const double ses = P.sigma.dot(P.eta);
  D.beta = P.sigma.dot(u) / (D.dd * ses);
  D.xi = (u / (D.beta * D.dd) - P.eta) / D.dd;

  D.qvec.resize(n);
  auto [a, b] = partials_at(*model.law, u);
  D.a = a;
  D.b = b;
  for (int j = 0; j < n; ++j)
    D.qvec[j] = (model.law->eval(j, u[j], u[j]) - D.m[j]) / D.dd;

  // Orthonormal basis of sigma-perp from a full QR of [sigma].
  Eigen::HouseholderQR<Mat> qr(Mat(P.sigma));
  Mat Q = qr.householderQ();
  D.B = Q.rightCols(n - 1);
  return D;
}

ScaledResidual scaled_residual(const ScaledData& D, const CVec& w, double r,
                               double h, double theta) {
  const int n = static_cast<int>(D.eta.size());
  const Complex eth = std::exp(-kI * theta);
  CVec psi = w;
  for (int j = 0; j < n; ++j) psi[j] += r * D.eta[j];

  CVec ce(n);
  for (int j = 0; j < n; ++j) {
    const Complex c_j =
        D.m[j] + D.d_star * D.qvec[j] - kI * D.d_star * h;
    const Complex e_j = D.d_star * D.beta * (D.eta[j] + D.dd * D.xi[j]) *
                        (D.a[j] + D.b[j] * eth);
    ce[j] = c_j + e_j;
  }

  ScaledResidual out;
  out.y = D.d * real_mul(D.core, w);
  for (int j = 0; j < n; ++j) out.y[j] += D.dd * ce[j] * psi[j];

  out.F2 = Complex(0, 0);
  for (int j = 0; j < n; ++j) out.F2 += D.sigma[j] * ce[j] * psi[j];

  out.F1 = out.y;
  for (int j = 0; j < n; ++j) out.F1[j] -= D.dd * out.F2;

  double wnorm2 = 0.0, cross = 0.0;
  for (int j = 0; j < n; ++j) {
    wnorm2 += std::norm(w[j]);
    cross += D.eta[j] * 2.0 * w[j].real();
  }
  out.F3 = (r * r - 1.0) * D.eta.squaredNorm() + r * cross + wnorm2;
  return out;
}

}  // namespace internal

namespace {

// Newton on the rescaled unknowns (z, r, h, theta) with w = B z. Finite-
// difference Jacobian; the system is small and the residual cheap.
CrossingState solve_scaled(const ModelConfig& model, double d, const Vec& u,
                           const PerronData& P, const HopfStart& start,
                           const HopfSolveOptions& opts) {
  const int n = model.n();
  internal::ScaledData D = internal::make_scaled_data(model, d, u, P);

  // Decompose the start vector: rotate its sigma-component to the positive
  // real axis, then split along eta and sigma-perp.
  CVec phi0 = start.phi;
  Complex sc(0, 0);
  for (int j = 0; j < n; ++j) sc += D.sigma[j] * phi0[j];
  if (std::abs(sc) > 0.0) phi0 *= std::conj(sc) / std::abs(sc);
  const double eta_norm = D.eta.norm();
  if (phi0.norm() > 0.0) phi0 *= eta_norm / phi0.norm();
  double r0 = 0.0;
  for (int j = 0; j < n; ++j) r0 += D.sigma[j] * phi0[j].real();
  r0 /= D.sigma.dot(D.eta);
  CVec w0 = phi0;
  for (int j = 0; j < n; ++j) w0[j] -= r0 * D.eta[j];

  const int dim = 2 * (n - 1) + 3;
  Vec x(dim);
  {
    CVec z0(n - 1);
    for (int i = 0; i < n - 1; ++i) {
      Complex acc(0, 0);
      for (int j = 0; j < n; ++j) acc += D.B(j, i) * w0[j];
      z0[i] = acc;
    }
    x.head(n - 1) = z0.real();
    x.segment(n - 1, n - 1) = z0.imag();
    x[2 * (n - 1)] = r0;
    x[2 * (n - 1) + 1] = start.nu / D.dd;  // h
    x[2 * (n - 1) + 2] = start.theta;
  }

  auto unpack_w = [&](const Vec& x_) {
    CVec z(n - 1);
    for (int i = 0; i < n - 1; ++i)
      z[i] = Complex(x_[i], x_[n - 1 + i]);
    CVec w = CVec::Zero(n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n - 1; ++i) w[j] += D.B(j, i) * z[i];
    return w;
  };

  auto residual = [&](const Vec& x_) {
    const CVec w = unpack_w(x_);
    const double r_ = x_[2 * (n - 1)];
    const double h_ = x_[2 * (n - 1) + 1];
    const double th_ = x_[2 * (n - 1) + 2];
    const internal::ScaledResidual R = internal::scaled_residual(D, w, r_, h_, th_);
    Vec out(dim);
    for (int i = 0; i < n - 1; ++i) {
      Complex acc(0, 0);
      for (int j = 0; j < n; ++j) acc += D.B(j, i) * R.F1[j];
      out[i] = acc.real();
      out[n - 1 + i] = acc.imag();
    }
    out[2 * (n - 1)] = R.F2.real();
    out[2 * (n - 1) + 1] = R.F2.imag();
    out[2 * (n - 1) + 2] = R.F3;
    return out;
  };

  const double scale = 1.0 + D.core.norm() + D.m.cwiseAbs().maxCoeff();
  Vec r = residual(x);
  double rn = r.norm();
  for (int it = 0; it < opts.max_iters; ++it) {
    if (rn <= opts.tol * scale) break;
    Mat J(dim, dim);
    for (int c = 0; c < dim; ++c) {
      Vec xp = x;
      const double hstep = std::sqrt(1e-16) * std::max(1.0, std::abs(x[c]));
      xp[c] += hstep;
      J.col(c) = (residual(xp) - r) / hstep;
    }
    const Vec dx = J.partialPivLu().solve(-r);
    if (!dx.allFinite())
      throw SolverError("newton-divergence",
                        "rescaled Newton produced a non-finite step");
    double lambda = 1.0;
    int halvings = 0;
    for (;; lambda *= 0.5) {
      const Vec x_try = x + lambda * dx;
      const Vec r_try = residual(x_try);
      if (r_try.norm() < rn) {
        x = x_try;
        r = r_try;
        rn = r.norm();
        break;
      }
      if (++halvings > opts.max_halvings)
        throw SolverError("newton-stagnation",
                          "rescaled Newton stagnated (residual " +
                              fmt_sci(rn) + ")");
    }
  }
  if (rn > opts.tol * scale)
    throw SolverError("newton-stagnation",
                      "rescaled Newton did not reach tolerance (residual " +
                          fmt_sci(rn) + ")");

  const CVec w = unpack_w(x);
  const double r_out = x[2 * (n - 1)];
  CVec phi = w;
  for (int j = 0; j < n; ++j) phi[j] += r_out * D.eta[j];
  return {phi, D.dd * x[2 * (n - 1) + 1], x[2 * (n - 1) + 2]};
}

// Shared final assembly: orientation, phase, thresholds, certificates.
HopfPoint finish_point(const ModelConfig& model, double d, const Vec& u,
                       CrossingState st, double adjoint_norm,
                       const HopfSolveOptions& opts) {
  const Linearization lin = linearize(model, d, u);
  const int n = model.n();

  if (st.nu < 0.0) {  // conjugate crossing; flip to the upper half plane
    st.nu = -st.nu;
    st.theta = -st.theta;
    st.phi = st.phi.conjugate();
  }
  st.theta = std::fmod(st.theta, 2.0 * kPi);
  if (st.theta < 0.0) st.theta += 2.0 * kPi;

  const double nu_floor = 1e-10 * (1.0 + lin.ub.cwiseAbs().maxCoeff());
  if (st.nu <= nu_floor)
    throw RegimeError("crossing-collapsed",
                      "crossing frequency collapsed to zero at d = " +
                          std::to_string(d));
  if (st.theta < 1e-8 || 2.0 * kPi - st.theta < 1e-8)
    throw RegimeError("crossing-collapsed",
                      "crossing phase degenerated to a real root at d = " +
                          std::to_string(d));

  phase_normalize(st.phi);

  HopfPoint pt;
  pt.d = d;
  pt.nu = st.nu;
  pt.theta = st.theta;
  pt.phi = st.phi;
  pt.tau.resize(opts.L + 1);
  for (int l = 0; l <= opts.L; ++l)
    pt.tau[l] = (st.theta + 2.0 * kPi * l) / st.nu;

  const Complex eth = std::exp(-kI * st.theta);
  CMat delta = lin.M0.cast<Complex>();
  for (int j = 0; j < n; ++j) {
    delta(j, j) += eth * lin.ub[j];
    delta(j, j) -= kI * st.nu;
  }
  pt.residual = (delta * pt.phi).norm();
  const double cert_tol =
      1e-9 * (1.0 + delta.norm()) * std::max(1.0, pt.phi.norm());
  if (pt.residual > cert_tol)
    throw SolverError("certificate",
                      "crossing residual " + std::to_string(pt.residual) +
                          " exceeds certificate tolerance");

  pt.psi_adj = adjoint_eigenvector(delta, adjoint_norm);

  Complex P_ip(0, 0), Q_ip(0, 0);
  for (int j = 0; j < n; ++j) {
    P_ip += std::conj(pt.psi_adj[j]) * pt.phi[j];
    Q_ip += lin.ub[j] * std::conj(pt.psi_adj[j]) * pt.phi[j];
  }
  pt.S.resize(opts.L + 1);
  for (int l = 0; l <= opts.L; ++l) {
    pt.S[l] = P_ip + pt.tau[l] * eth * Q_ip;
    if (std::abs(pt.S[l]) <= 1e-6)
      throw SolverError("degenerate-crossing",
                        "simplicity certificate S_" + std::to_string(l) +
                            " vanished at d = " + std::to_string(d));
  }
  pt.transversality = (-kI * st.nu * eth * Q_ip / pt.S[0]).real();
  return pt;
}

}  // namespace

CMat eval_delta(const ModelConfig& model, double d, const Vec& u, Complex mu,
                double tau) {
  const Linearization lin = linearize(model, d, u);
  const int n = model.n();
  CMat delta = lin.M0.cast<Complex>();
  const Complex decay = std::exp(-mu * tau);
  for (int j = 0; j < n; ++j) {
    delta(j, j) += decay * lin.ub[j];
    delta(j, j) -= mu;
  }
  return delta;
}

HopfStart start_near_dstar(const DstarExpansion& exp, const PerronData& P,
                           double d) {
  const double gap = exp.a_tilde - exp.b_tilde;
  if (!(gap > 0.0))
    throw RegimeError("no-hopf",
                      "a~ - b~ = " + std::to_string(gap) +
                          " <= 0: equilibrium is stable for all delays near d*");
  const double dd = P.d_star - d;
  if (!(dd > 0.0))
    throw DimensionError("near-d* start needs d < d*");
  HopfStart s;
  s.theta = std::acos(-exp.a_tilde / exp.b_tilde);
  const double h_star =
      exp.beta_star *
      std::sqrt(exp.b_tilde * exp.b_tilde - exp.a_tilde * exp.a_tilde) /
      P.eta_dot_sigma();
  s.nu = dd * h_star;
  s.phi = P.eta.cast<Complex>();
  s.norm_target = P.eta.norm();
  return s;
}

HopfStart start_small_d(const GrowthLaw& law, const Vec& u0, int q) {
  const int n = law.patches();
  if (q < 0 || q >= n) throw DimensionError("patch index out of range");
  auto [a, b] = partials_at(law, u0);
  if (!(a[q] - b[q] > 0.0))
    throw RegimeError("not-oscillatory",
                      "patch " + std::to_string(q + 1) +
                          " has a0 - b0 <= 0; no uncoupled crossing");
  if (!(a[q] + b[q] < 0.0))
    throw ValidationError("patch " + std::to_string(q + 1) +
                          " violates self-limitation at its equilibrium");
  HopfStart s;
  s.nu = u0[q] * std::sqrt(b[q] * b[q] - a[q] * a[q]);
  s.theta = std::acos(-a[q] / b[q]);
  s.phi = CVec::Zero(n);
  s.phi[q] = Complex(1.0, 0.0);
  s.norm_target = 1.0;
  return s;
}

CVec adjoint_eigenvector(const CMat& delta, double norm_target) {
  const int n = static_cast<int>(delta.rows());
  Eigen::JacobiSVD<CMat> svd(delta, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double smin = svd.singularValues()[n - 1];
  const double smax = svd.singularValues()[0];
  if (smin > 1e-6 * (1.0 + smax))
    throw SolverError("not-singular",
                      "characteristic matrix is not singular (sigma_min = " +
                          std::to_string(smin) + ")");
  CVec psi = svd.matrixU().col(n - 1);
  psi *= norm_target / psi.norm();
  phase_normalize(psi);
  return psi;
}

HopfPoint solve_hopf_point(const ModelConfig& model, double d, const Vec& u,
                           const HopfStart& start, const HopfSolveOptions& opts) {
  if (d < 0.0) throw DimensionError("dispersal rate must be >= 0");
  if (u.size() != model.n())
    throw DimensionError("equilibrium has wrong number of patches");
  CrossingState st;
  double adjoint_norm = 1.0;
  if (opts.scaled) {
    if (!opts.perron)
      throw DimensionError("rescaled solve needs Perron data");
    st = solve_scaled(model, d, u, *opts.perron, start, opts);
    adjoint_norm = opts.perron->sigma.norm();
  } else {
    st = solve_raw(linearize(model, d, u), start, opts);
    if (opts.perron) adjoint_norm = opts.perron->sigma.norm();
  }
  return finish_point(model, d, u, st, adjoint_norm, opts);
}

namespace {

// Adaptive continuation of one crossing family along d. Keeps the current
// (d, u, crossing) state; `advance_to` bisects the step on solver failure.
class Continuator {
public:
  Continuator(const ModelConfig& model, bool scaled, const PerronData* P)
      : model_(model) {
    opts_.scaled = scaled;
    opts_.perron = P;
  }

  void set_anchor(double d, Vec u, const HopfStart& s) {
    d_ = d;
    u_ = std::move(u);
    phi_ = s.phi;
    nu_ = s.nu;
    theta_ = s.theta;
    norm_target_ = s.norm_target;
  }

  void set_anchor_point(double d, Vec u, const HopfPoint& pt) {
    d_ = d;
    u_ = std::move(u);
    phi_ = pt.phi;
    nu_ = pt.nu;
    theta_ = pt.theta;
    norm_target_ = pt.phi.norm();
  }

  double current_d() const { return d_; }
  const Vec& current_u() const { return u_; }

  // Moves the state to `target`, inserting intermediate solves as needed.
  // Rethrows the solver error when the step cannot be shrunk further.
  HopfPoint advance_to(double target) {
    double frac = 1.0;
    int fails = 0;
    for (;;) {
      const double gap = target - d_;
      const bool lands = frac >= 1.0;
      const double step_target = lands ? target : d_ + gap * frac;
      try {
        HopfPoint pt = solve_at(step_target);
        commit(step_target, pt);
        if (lands) return pt;
        frac = std::min(1.0, 2.0 * frac);
        continue;
      } catch (const RegimeError&) {
        throw;  // genuine boundary (extinction, collapse): not a step issue
      } catch (const SolverError&) {
        if (++fails > 60 || frac < 1e-9 ||
            std::abs(gap) < 1e-11 * std::max(1.0, std::abs(target)))
          throw;
        frac *= 0.5;
        continue;
      }
    }
  }

private:
  HopfPoint solve_at(double d_next) {
    Vec u_next = solve_equilibrium(model_, d_next, u_).u;
    HopfStart s;
    s.phi = phi_;
    s.nu = nu_;
    s.theta = theta_;
    s.norm_target = norm_target_;
    HopfPoint pt = solve_hopf_point(model_, d_next, u_next, s, opts_);
    pending_u_ = std::move(u_next);
    return pt;
  }

  void commit(double d_next, const HopfPoint& pt) {
    d_ = d_next;
    u_ = std::move(pending_u_);
    phi_ = pt.phi;
    nu_ = pt.nu;
    theta_ = pt.theta;
  }

  const ModelConfig& model_;
  HopfSolveOptions opts_;
  double d_ = 0.0;
  Vec u_, pending_u_;
  CVec phi_;
  double nu_ = 0.0, theta_ = 0.0, norm_target_ = 1.0;
};

std::string error_kind(const Error& e) { return e.kind(); }

}  // namespace

HopfCurve hopf_curve(const ModelConfig& model, const std::vector<double>& d_grid) {
  if (d_grid.empty()) throw DimensionError("empty d grid");
  if (!std::is_sorted(d_grid.begin(), d_grid.end()))
    throw DimensionError("d grid must be sorted ascending");

  HopfCurve curve;
  const PerronData P = find_dstar(model.A, model.m());
  curve.d_star = P.d_star;
  if (d_grid.front() <= 0.0 || d_grid.back() >= P.d_star)
    throw RegimeError("extinction",
                      "curve grid must lie inside (0, d*) = (0, " +
                          std::to_string(P.d_star) + ")");

  const Vec u0 = solve_u0(*model.law);
  const PatchClassification cls = classify_patches(*model.law, u0);
  if (cls.oscillatory.empty())
    throw RegimeError("no-hopf",
                      "no oscillatory patch: every a0_j - b0_j <= 0");

  std::map<double, std::string> failure;

  // Ascending sweeps, one family per oscillatory patch, anchored at the
  // uncoupled limit where the crossing is known in closed form.
  for (int q : cls.oscillatory) {
    Continuator walker(model, /*scaled=*/false, nullptr);
    walker.set_anchor(0.0, u0, start_small_d(*model.law, u0, q));
    auto& fam = curve.families[q];
    for (double d : d_grid) {
      try {
        fam.push_back(walker.advance_to(d));
      } catch (const Error& e) {
        curve.warnings.push_back("family patch-" + std::to_string(q + 1) +
                                 " ends before d = " + std::to_string(d) + ": " +
                                 e.what());
        failure.emplace(d, error_kind(e));
        break;
      }
    }
    if (fam.empty()) curve.families.erase(q);
  }

  // Descending sweep anchored just below d*, using the rescaled solver.
  bool have_descending = false;
  std::optional<DstarExpansion> expansion;
  try {
    expansion.emplace(dstar_expansion(*model.law, P));
    const DstarExpansion& exp = *expansion;
    if (exp.a_tilde - exp.b_tilde > 0.0) {
      Continuator walker(model, /*scaled=*/true, &P);
      bool anchored = false;
      for (double eps : {1e-3, 1e-4, 1e-5}) {
        double d_a = P.d_star * (1.0 - eps);
        if (d_a <= d_grid.back())
          d_a = 0.5 * (d_grid.back() + P.d_star);
        try {
          const Vec u_guess = exp.beta_star * (P.d_star - d_a) * P.eta;
          const Vec u_a = solve_equilibrium(model, d_a, u_guess).u;
          const HopfStart s = start_near_dstar(exp, P, d_a);
          HopfPoint pt =
              solve_hopf_point(model, d_a, u_a, s,
                               HopfSolveOptions{.scaled = true, .perron = &P});
          walker.set_anchor_point(d_a, u_a, pt);
          anchored = true;
          break;
        } catch (const Error&) {
          continue;
        }
      }
      if (anchored) {
        auto& fam = curve.families[-1];
        for (auto it = d_grid.rbegin(); it != d_grid.rend(); ++it) {
          try {
            fam.push_back(walker.advance_to(*it));
          } catch (const Error& e) {
            curve.warnings.push_back(
                "near-d* sweep ends before d = " + std::to_string(*it) + ": " +
                e.what());
            break;
          }
        }
        std::reverse(fam.begin(), fam.end());
        have_descending = !fam.empty();
        if (fam.empty()) curve.families.erase(-1);
      } else {
        curve.warnings.push_back("near-d* sweep could not anchor below d*");
      }
    } else {
      curve.warnings.push_back(
          "equilibrium is stable for all delays near d* (a~ <= b~); "
          "descending sweep skipped");
    }
  } catch (const Error& e) {
    curve.warnings.push_back(std::string("near-d* sweep unavailable: ") +
                             e.what());
  }

  // Assemble rows: minimum first threshold across families at each grid d.
  // On a tie (the sweeps converged to the same crossing from both ends) the
  // ascending label wins, so coincident families do not flip the branch
  // column between adjacent rows on rounding noise.
  for (double d : d_grid) {
    const HopfPoint* best = nullptr;
    int best_family = 0;
    double best_tau = 0.0;
    for (const auto& [famid, pts] : curve.families) {
      for (const auto& pt : pts) {
        if (std::abs(pt.d - d) > 1e-12 * std::max(1.0, d)) continue;
        const double tol = 1e-6 * (1.0 + std::abs(best_tau));
        const bool better = !best || pt.tau0() < best_tau - tol;
        const bool tied_label = best && best_family < 0 && famid >= 0 &&
                                std::abs(pt.tau0() - best_tau) <= tol;
        if (better || tied_label) {
          best = &pt;
          best_family = famid;
          best_tau = pt.tau0();
        }
      }
    }
    if (best) {
      HopfCurveRow row;
      row.d = d;
      row.tau0 = best->tau0();
      row.nu = best->nu;
      row.theta = best->theta;
      row.branch = best_family < 0
                       ? "near-dstar"
                       : "patch-" + std::to_string(best_family + 1);
      curve.rows.push_back(row);
    } else {
      auto it = failure.find(d);
      curve.failed.emplace_back(
          d, it != failure.end() ? it->second : "continuation-failed");
    }
  }

  // The sweeps approach the first-crossing curve from opposite ends. At the
  // topmost grid point both reached (their meeting point) they should agree;
  // a gap there means the minimum switches families somewhere above that d,
  // and we refine by bisection to bracket the switch instead of leaving the
  // reader to guess which rows follow which family.
  struct Overlap {
    double d;
    int fam = -1;  // ascending family achieving the minimum at this d
    double tau_asc = 0.0;
    double tau_desc = 0.0;
  };
  std::vector<Overlap> overlap;
  if (have_descending) {
    for (const auto& pt : curve.families[-1]) {
      Overlap o;
      o.d = pt.d;
      o.tau_desc = pt.tau0();
      for (const auto& [famid, pts] : curve.families) {
        if (famid < 0) continue;
        for (const auto& p : pts)
          if (std::abs(p.d - pt.d) <= 1e-12 * std::max(1.0, pt.d) &&
              (o.fam < 0 || p.tau0() < o.tau_asc)) {
            o.fam = famid;
            o.tau_asc = p.tau0();
          }
      }
      if (o.fam >= 0) overlap.push_back(o);
    }
    std::sort(overlap.begin(), overlap.end(),
              [](const Overlap& a, const Overlap& b) { return a.d < b.d; });
  }
  if (!overlap.empty()) {
    const Overlap& top = overlap.back();
    curve.meeting_mismatch =
        std::abs(top.tau_asc - top.tau_desc) / (1.0 + std::abs(top.tau_asc));
  }
  auto stored_point = [&](int famid, double d) -> const HopfPoint* {
    auto it = curve.families.find(famid);
    if (it == curve.families.end()) return nullptr;
    for (const auto& p : it->second)
      if (std::abs(p.d - d) <= 1e-12 * std::max(1.0, d)) return &p;
    return nullptr;
  };
  auto eq_at = [&](double d) -> Vec {
    if (expansion && d > 0.5 * P.d_star) {
      try {
        return solve_equilibrium(model, d,
                                 expansion->beta_star * (P.d_star - d) * P.eta)
            .u;
      } catch (const Error&) {
      }
    }
    return solve_equilibrium(model, d, u0).u;
  };
  // Bisect for the d where the ascending and descending families trade
  // places, re-anchoring each side's walker as the bracket shrinks.
  auto refine_switch = [&](const Overlap& lo_o,
                           const Overlap& hi_o) -> std::pair<double, double> {
    double lo = lo_o.d, hi = hi_o.d;
    try {
      const HopfPoint* pa = stored_point(lo_o.fam, lo);
      const HopfPoint* pd = stored_point(-1, hi);
      if (!pa || !pd) return {lo, hi};
      HopfPoint pt_lo = *pa;
      HopfPoint pt_hi = *pd;
      Vec u_lo = eq_at(lo), u_hi = eq_at(hi);
      const bool lo_pred = lo_o.tau_asc < lo_o.tau_desc;
      for (int it = 0; it < 8; ++it) {
        const double dm = 0.5 * (lo + hi);
        Continuator wa(model, /*scaled=*/false, nullptr);
        wa.set_anchor_point(lo, u_lo, pt_lo);
        const HopfPoint a = wa.advance_to(dm);
        Continuator wd(model, /*scaled=*/true, &P);
        wd.set_anchor_point(hi, u_hi, pt_hi);
        const HopfPoint b = wd.advance_to(dm);
        if ((a.tau0() < b.tau0()) == lo_pred) {
          lo = dm;
          pt_lo = a;
          u_lo = wa.current_u();
        } else {
          hi = dm;
          pt_hi = b;
          u_hi = wd.current_u();
        }
      }
    } catch (const Error&) {
      // refinement is advisory; fall back to the unrefined bracket
    }
    return {lo, hi};
  };
  if (curve.meeting_mismatch > 1e-6) {
    const Overlap& top = overlap.back();
    std::ostringstream msg;
    msg.precision(6);
    int flip = -1;
    for (size_t i = 0; i + 1 < overlap.size(); ++i) {
      const bool lo_asc = overlap[i].tau_asc < overlap[i].tau_desc;
      const bool hi_asc = overlap[i + 1].tau_asc < overlap[i + 1].tau_desc;
      if (lo_asc != hi_asc) {
        flip = static_cast<int>(i);
        break;
      }
    }
    if (flip >= 0) {
      const auto [lo_d, hi_d] =
          refine_switch(overlap[flip], overlap[flip + 1]);
      msg << "the first crossing switches families between d = " << lo_d
          << " and d = " << hi_d << "; rows on either side follow different "
          << "branches (meeting-point gap " << curve.meeting_mismatch << ")";
    } else if (top.tau_asc < top.tau_desc) {
      msg << "an ascending family is still below the near-d* family at the "
          << "meeting point d = " << top.d << " (relative gap "
          << curve.meeting_mismatch << "); the switch to the near-d* family "
          << "lies between there and d* = " << P.d_star
          << "; extend the grid toward d* to resolve it";
    } else {
      msg << "the near-d* family lies below every ascending family across "
          << "the overlap (relative gap " << curve.meeting_mismatch
          << " at d = " << top.d << "); the ascending sweeps may have missed "
          << "the first crossing; refine the grid at small d";
    }
    curve.warnings.push_back(msg.str());
  }

  // Jump detection: a first-crossing curve should vary smoothly over the
  // grid; a step far beyond the local trend flags an unresolved switch.
  if (curve.rows.size() >= 3) {
    std::vector<double> gaps;
    for (size_t i = 1; i < curve.rows.size(); ++i)
      gaps.push_back(std::abs(curve.rows[i].tau0 - curve.rows[i - 1].tau0));
    std::vector<double> sorted = gaps;
    std::sort(sorted.begin(), sorted.end());
    const double med = sorted[sorted.size() / 2];
    for (size_t i = 0; i < gaps.size(); ++i) {
      if (gaps[i] > 10.0 * med && gaps[i] > 1e-9) {
        curve.warnings.push_back(
            "threshold jump between d = " + std::to_string(curve.rows[i].d) +
            " and d = " + std::to_string(curve.rows[i + 1].d) +
            " exceeds 10x the local trend; refine the grid there");
      }
    }
  }

  // The closed-form anchors live at the two ends of (0, d*). In the middle
  // band only the continuation itself backs the numbers, so label it.
  double band_lo = std::numeric_limits<double>::infinity();
  double band_hi = -std::numeric_limits<double>::infinity();
  for (const auto& row : curve.rows) {
    if (row.d > 0.25 * P.d_star && row.d < 0.75 * P.d_star) {
      band_lo = std::min(band_lo, row.d);
      band_hi = std::max(band_hi, row.d);
    }
  }
  if (band_lo <= band_hi) {
    std::ostringstream msg;
    msg.precision(6);
    msg << "thresholds for d in [" << band_lo << ", " << band_hi
        << "] sit between the small-dispersal and near-critical expansions; "
        << "they rest on numerical continuation alone";
    curve.warnings.push_back(msg.str());
  }

  return curve;
}

StabilityVerdict classify(const ModelConfig& model, double d, Regime regime) {
  if (!(d > 0.0)) throw DimensionError("classification needs d > 0");
  const PerronData P = find_dstar(model.A, model.m());
  if (d >= P.d_star)
    throw RegimeError("extinction",
                      "d >= d*: population goes extinct; no equilibrium to "
                      "classify");

  if (regime == Regime::NearDstar) {
    const DstarExpansion exp = dstar_expansion(*model.law, P);
    const double gap = exp.a_tilde - exp.b_tilde;
    const double scale =
        std::max(1.0, std::abs(exp.a_tilde) + std::abs(exp.b_tilde));
    if (std::abs(gap) <= 1e-9 * scale)
      return Inconclusive{"a~ - b~ is degenerate at tolerance"};
    if (gap < 0.0) return StableAllDelays{};
    Continuator walker(model, /*scaled=*/true, &P);
    try {
      double d_a = P.d_star * (1.0 - 1e-3);
      if (d_a <= d) d_a = 0.5 * (d + P.d_star);
      const Vec u_guess = exp.beta_star * (P.d_star - d_a) * P.eta;
      const Vec u_a = solve_equilibrium(model, d_a, u_guess).u;
      const HopfStart s = start_near_dstar(exp, P, d_a);
      HopfPoint anchor =
          solve_hopf_point(model, d_a, u_a, s,
                           HopfSolveOptions{.scaled = true, .perron = &P});
      walker.set_anchor_point(d_a, u_a, anchor);
      HopfPoint pt = (std::abs(d_a - d) <= 1e-14 * std::max(1.0, d))
                         ? anchor
                         : walker.advance_to(d);
      return HopfAt{pt.tau0(), pt};
    } catch (const Error& e) {
      return Inconclusive{std::string("near-d* continuation failed: ") +
                          e.what()};
    }
  }

  // Small-d regime.
  const Vec u0 = solve_u0(*model.law);
  const PatchClassification cls = classify_patches(*model.law, u0);
  if (cls.has_degenerate()) {
    return Inconclusive{"patch " + std::to_string(cls.degenerate.front() + 1) +
                        " sits on the oscillatory boundary (a0 = b0)"};
  }
  if (cls.oscillatory.empty()) return StableAllDelays{};

  std::vector<double> tau0s;
  for (int q : cls.oscillatory) {
    const HopfStart s = start_small_d(*model.law, u0, q);
    tau0s.push_back(s.theta / s.nu);
  }
  for (size_t i = 0; i < tau0s.size(); ++i)
    for (size_t j = i + 1; j < tau0s.size(); ++j)
      if (std::abs(tau0s[i] - tau0s[j]) <=
          1e-9 * std::max(1.0, std::abs(tau0s[i])))
        return Inconclusive{
            "uncoupled thresholds of patches " +
            std::to_string(cls.oscillatory[i] + 1) + " and " +
            std::to_string(cls.oscillatory[j] + 1) +
            " are resonant; the first crossing is not well separated"};

  const HopfPoint* best = nullptr;
  HopfPoint best_pt;
  std::string last_err;
  for (int q : cls.oscillatory) {
    Continuator walker(model, /*scaled=*/false, nullptr);
    walker.set_anchor(0.0, u0, start_small_d(*model.law, u0, q));
    try {
      HopfPoint pt = walker.advance_to(d);
      if (!best || pt.tau0() < best_pt.tau0()) {
        best_pt = pt;
        best = &best_pt;
      }
    } catch (const Error& e) {
      last_err = e.what();
    }
  }
  if (!best)
    return Inconclusive{"no crossing family continued from the uncoupled "
                        "limit to d (" +
                        last_err + ")"};
  return HopfAt{best_pt.tau0(), best_pt};
}

TopologyIndex topology_index(const DispersionMatrix& A, const Vec& m) {
  const int n = A.n();
  if (m.size() != n)
    throw DimensionError("intrinsic-rate vector length does not match matrix");
  Eigen::Index q;
  const double m_max = m.maxCoeff(&q);
  for (int j = 0; j < n; ++j)
    if (j != q && std::abs(m[j] - m_max) <= 1e-9 * std::max(1.0, m_max))
      throw RegimeError("degenerate-argmax",
                        "largest intrinsic rate is tied between patches " +
                            std::to_string(q + 1) + " and " +
                            std::to_string(j + 1));

  TopologyIndex out;
  out.q_hat = static_cast<int>(q);
  double weighted = 0.0;
  for (int k = 0; k < n; ++k)
    if (k != q) weighted += A(static_cast<int>(q), k) * m[k];
  out.value = -(kPi / 2.0) * A(static_cast<int>(q), static_cast<int>(q)) +
              (1.0 - kPi / 2.0) * weighted / m_max;
  out.tau_limit = kPi / (2.0 * m_max);
  return out;
}

TauExpansion tau_expansion(const DispersionMatrix& A, const Vec& m, double d) {
  const TopologyIndex T = topology_index(A, m);
  const double m_q = m[T.q_hat];
  TauExpansion out;
  out.tau_limit = T.tau_limit;
  out.slope = T.value / (m_q * m_q);
  out.tau = out.tau_limit + d * out.slope;
  double offdiag = 0.0, full = 0.0;
  for (int k = 0; k < A.n(); ++k) {
    full += A(T.q_hat, k) * m[k];
    if (k != T.q_hat) offdiag += A(T.q_hat, k) * m[k];
  }
  out.theta_prime0 = offdiag / (m_q * m_q);
  out.nu_prime0 = full / m_q;
  return out;
}

namespace {

// Chebyshev differentiation matrix on nodes x_i = cos(i pi / N), i = 0..N.
Mat cheb_diff(int N) {
  Mat D = Mat::Zero(N + 1, N + 1);
  Vec x(N + 1), c(N + 1);
  for (int i = 0; i <= N; ++i) {
    x[i] = std::cos(kPi * i / N);
    c[i] = (i == 0 || i == N) ? 2.0 : 1.0;
  }
  for (int i = 0; i <= N; ++i)
    for (int j = 0; j <= N; ++j)
      if (i != j)
        D(i, j) = (c[i] / c[j]) * ((i + j) % 2 == 0 ? 1.0 : -1.0) /
                  (x[i] - x[j]);
  for (int i = 0; i <= N; ++i) D(i, i) = -D.row(i).sum();
  return D;
}

std::vector<Complex> generator_spectrum(const Mat& L0, const Mat& L1,
                                        double tau, int N) {
  const int n = static_cast<int>(L0.rows());
  const Mat D = cheb_diff(N) * (2.0 / tau);  // d/dt on [-tau, 0], node 0 at t=0
  const int dim = (N + 1) * n;
  Mat G = Mat::Zero(dim, dim);
  for (int i = 1; i <= N; ++i)
    for (int j = 0; j <= N; ++j)
      G.block(i * n, j * n, n, n) = D(i, j) * Mat::Identity(n, n);
  G.block(0, 0, n, n) = L0;
  G.block(0, N * n, n, n) += L1;

  Eigen::EigenSolver<Mat> es(G, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw SolverError("eigen-nonconvergence",
                      "QR iteration failed on the pseudospectral matrix");
  std::vector<Complex> eigs(es.eigenvalues().data(),
                            es.eigenvalues().data() + dim);
  std::sort(eigs.begin(), eigs.end(), [](Complex a, Complex b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return std::abs(a.imag()) < std::abs(b.imag());
  });
  return eigs;
}

Complex rightmost_upper(const std::vector<Complex>& eigs) {
  Complex best = eigs.front();
  for (const Complex& e : eigs)
    if (e.real() > best.real() ||
        (e.real() == best.real() && e.imag() > best.imag()))
      best = e;
  if (best.imag() < 0.0) best = std::conj(best);
  return best;
}

}  // namespace

RightmostRoots oracle_rightmost_roots(const ModelConfig& model, double d,
                                      const Vec& u, double tau, int N,
                                      int count) {
  const Linearization lin = linearize(model, d, u);
  const Mat L1 = Mat(lin.ub.asDiagonal());

  RightmostRoots out;
  if (tau <= 0.0) {
    Eigen::EigenSolver<Mat> es(lin.M0 + L1, false);
    if (es.info() != Eigen::Success)
      throw SolverError("eigen-nonconvergence", "QR iteration failed");
    std::vector<Complex> eigs(es.eigenvalues().data(),
                              es.eigenvalues().data() + model.n());
    std::sort(eigs.begin(), eigs.end(),
              [](Complex a, Complex b) { return a.real() > b.real(); });
    eigs.resize(std::min<size_t>(eigs.size(), count));
    out.roots = eigs;
    return out;
  }

  const auto coarse = generator_spectrum(lin.M0, L1, tau, N);
  const auto fine = generator_spectrum(lin.M0, L1, tau, 2 * N);
  out.refinement_delta =
      std::abs(rightmost_upper(coarse) - rightmost_upper(fine));
  out.resolution_warning = out.refinement_delta > 1e-6;
  out.roots.assign(fine.begin(),
                   fine.begin() + std::min<size_t>(fine.size(), count));
  return out;
}

double oracle_tau_crossing(const ModelConfig& model, double d, const Vec& u,
                           double tau_lo, double tau_hi, int N, double tol) {
  if (!(tau_lo > 0.0) || !(tau_hi > tau_lo))
    throw DimensionError("need 0 < tau_lo < tau_hi");
  const Linearization lin = linearize(model, d, u);
  const Mat L1 = Mat(lin.ub.asDiagonal());
  auto rightmost_re = [&](double tau) {
    return generator_spectrum(lin.M0, L1, tau, N).front().real();
  };
  double r_lo = rightmost_re(tau_lo), r_hi = rightmost_re(tau_hi);
  if (!(r_lo < 0.0 && r_hi > 0.0))
    throw SolverError("no-bracket",
                      "rightmost root does not change sign over [tau_lo, "
                      "tau_hi]: Re = " +
                          std::to_string(r_lo) + " .. " + std::to_string(r_hi));
  while (tau_hi - tau_lo > tol * (1.0 + tau_hi)) {
    const double mid = 0.5 * (tau_lo + tau_hi);
    (rightmost_re(mid) < 0.0 ? tau_lo : tau_hi) = mid;
  }
  return 0.5 * (tau_lo + tau_hi);
}

}  // namespace patchhopf
