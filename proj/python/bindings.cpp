// Python bindings for the core analysis operations: model validation,
// spectral quantities, equilibria, Hopf thresholds, the topology index, and
// direct simulation.
#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>
#include <variant>

#include "patchhopf/ddesim.hpp"
#include "patchhopf/equilibrium.hpp"
#include "patchhopf/hopf.hpp"
#include "patchhopf/model.hpp"
#include "patchhopf/spectral.hpp"

namespace py = pybind11;
using namespace patchhopf;

namespace {

ModelConfig make_model(const Mat& A, const Vec& m, const Vec& a_hat,
                       const Vec& b_hat) {
  auto law = std::make_shared<Logistic>(m, a_hat, b_hat);
  const ValidationReport rep = validate_growth(*law);
  if (!rep.valid()) throw ValidationError(rep.violations.front());
  return ModelConfig(DispersionMatrix(A), std::move(law));
}

}  // namespace

PYBIND11_MODULE(_patchhopf, mod) {
  mod.doc() =
      "Delayed n-patch population model: spectral bounds, equilibria, Hopf "
      "thresholds, topology index, and method-of-steps simulation";

  py::register_exception<DimensionError>(mod, "DimensionError",
                                         PyExc_ValueError);
  py::register_exception<ValidationError>(mod, "ValidationError",
                                          PyExc_ValueError);
  py::register_exception<SolverError>(mod, "SolverError", PyExc_RuntimeError);
  py::register_exception<RegimeError>(mod, "RegimeError", PyExc_RuntimeError);

  py::class_<ValidationReport>(mod, "ValidationReport")
      .def_readonly("violations", &ValidationReport::violations)
      .def_readonly("sign_pattern_ok", &ValidationReport::sign_pattern_ok)
      .def_readonly("irreducible_ok", &ValidationReport::irreducible_ok)
      .def_readonly("column_loss_ok", &ValidationReport::column_loss_ok)
      .def("valid", &ValidationReport::valid);

  mod.def("validate_dispersion", &validate_dispersion, py::arg("matrix"),
          "Structural checks on a dispersal matrix");

  py::class_<ModelConfig>(mod, "Model")
      .def(py::init(&make_model), py::arg("matrix"), py::arg("m"),
           py::arg("a_hat"), py::arg("b_hat"),
           "Validated model with the logistic law f_j(x, y) = m_j - "
           "a_hat_j x - b_hat_j y")
      .def_property_readonly("n", &ModelConfig::n)
      .def_property_readonly("m", &ModelConfig::m)
      .def_property_readonly(
          "matrix", [](const ModelConfig& mc) { return mc.A.matrix(); });

  mod.def(
      "spectral_bound",
      [](const ModelConfig& mc, double d) {
        return spectral_bound(mc.A, mc.m(), d);
      },
      py::arg("model"), py::arg("d"),
      "max Re eig(d A + diag(m)), strictly decreasing in d");

  py::class_<PerronData>(mod, "PerronData")
      .def_readonly("d_star", &PerronData::d_star)
      .def_readonly("eta", &PerronData::eta)
      .def_readonly("sigma", &PerronData::sigma)
      .def_readonly("residual_eta", &PerronData::residual_eta)
      .def_readonly("residual_sigma", &PerronData::residual_sigma);

  mod.def(
      "find_dstar",
      [](const ModelConfig& mc) { return find_dstar(mc.A, mc.m()); },
      py::arg("model"),
      "Critical dispersal d* with s(d*) = 0 and the Perron pair there");

  mod.def(
      "solve_equilibrium",
      [](const ModelConfig& mc, double d) {
        return solve_equilibrium(mc, d, solve_u0(*mc.law)).u;
      },
      py::arg("model"), py::arg("d"),
      "Positive equilibrium at dispersal d (throws for d >= d*)");

  py::class_<HopfPoint>(mod, "HopfPoint")
      .def_readonly("d", &HopfPoint::d)
      .def_readonly("nu", &HopfPoint::nu)
      .def_readonly("theta", &HopfPoint::theta)
      .def_readonly("phi", &HopfPoint::phi)
      .def_readonly("tau", &HopfPoint::tau)
      .def_readonly("S", &HopfPoint::S)
      .def_readonly("transversality", &HopfPoint::transversality)
      .def_readonly("residual", &HopfPoint::residual)
      .def("tau0", &HopfPoint::tau0);

  py::class_<HopfCurveRow>(mod, "HopfCurveRow")
      .def_readonly("d", &HopfCurveRow::d)
      .def_readonly("tau0", &HopfCurveRow::tau0)
      .def_readonly("nu", &HopfCurveRow::nu)
      .def_readonly("theta", &HopfCurveRow::theta)
      .def_readonly("branch", &HopfCurveRow::branch);

  py::class_<HopfCurve>(mod, "HopfCurve")
      .def_readonly("rows", &HopfCurve::rows)
      .def_readonly("failed", &HopfCurve::failed)
      .def_readonly("d_star", &HopfCurve::d_star)
      .def_readonly("meeting_mismatch", &HopfCurve::meeting_mismatch)
      .def_readonly("warnings", &HopfCurve::warnings);

  mod.def("hopf_curve", &hopf_curve, py::arg("model"), py::arg("d_grid"),
          "First Hopf threshold tau0(d) over a d grid in (0, d*)");

  mod.def(
      "classify",
      [](const ModelConfig& mc, double d, const std::string& regime) {
        Regime r;
        if (regime == "small-d")
          r = Regime::SmallD;
        else if (regime == "near-dstar")
          r = Regime::NearDstar;
        else
          throw DimensionError("regime must be 'small-d' or 'near-dstar'");
        const StabilityVerdict v = classify(mc, d, r);
        py::dict out;
        if (std::holds_alternative<StableAllDelays>(v)) {
          out["verdict"] = "stable-all-delays";
        } else if (const auto* h = std::get_if<HopfAt>(&v)) {
          out["verdict"] = "hopf";
          out["tau0"] = h->tau0;
          out["point"] = h->point;
        } else {
          out["verdict"] = "inconclusive";
          out["reason"] = std::get<Inconclusive>(v).reason;
        }
        return out;
      },
      py::arg("model"), py::arg("d"), py::arg("regime"),
      "Delay-stability verdict at dispersal d");

  py::class_<TopologyIndex>(mod, "TopologyIndex")
      .def_readonly("value", &TopologyIndex::value)
      .def_readonly("q_hat", &TopologyIndex::q_hat)
      .def_readonly("tau_limit", &TopologyIndex::tau_limit);

  mod.def(
      "topology_index",
      [](const Mat& A, const Vec& m) {
        return topology_index(DispersionMatrix(A), m);
      },
      py::arg("matrix"), py::arg("m"),
      "Topology index T(A); its sign is the slope sign of the first "
      "threshold in d at d = 0 for the pure-delay logistic law");

  mod.def(
      "tau_expansion",
      [](const Mat& A, const Vec& m, double d) {
        const TauExpansion e = tau_expansion(DispersionMatrix(A), m, d);
        py::dict out;
        out["tau"] = e.tau;
        out["tau_limit"] = e.tau_limit;
        out["slope"] = e.slope;
        return out;
      },
      py::arg("matrix"), py::arg("m"), py::arg("d"),
      "First-order small-d expansion of the first threshold");

  mod.def(
      "rightmost_roots",
      [](const ModelConfig& mc, double d, const Vec& u, double tau, int N,
         int count) {
        const RightmostRoots r = oracle_rightmost_roots(mc, d, u, tau, N, count);
        py::dict out;
        out["roots"] = r.roots;
        out["resolution_warning"] = r.resolution_warning;
        out["refinement_delta"] = r.refinement_delta;
        return out;
      },
      py::arg("model"), py::arg("d"), py::arg("u"), py::arg("tau"),
      py::arg("N") = 32, py::arg("count") = 6,
      "Rightmost characteristic roots by pseudospectral discretization");

  mod.def(
      "integrate",
      [](const ModelConfig& mc, double d, double tau, const Vec& history,
         double t_end, double step) {
        const Trajectory traj =
            integrate(mc, d, tau, History::constant(history), t_end, step);
        py::dict out;
        out["t"] = traj.times();
        out["u"] = traj.states();
        out["warnings"] = traj.warnings();
        return out;
      },
      py::arg("model"), py::arg("d"), py::arg("tau"), py::arg("history"),
      py::arg("t_end"), py::arg("step"),
      "Method-of-steps RK4 run from a constant history");

  mod.def(
      "detect_asymptotics",
      [](const ModelConfig& mc, double d, double tau, const Vec& history,
         double t_end, double step, const Vec& u_eq) {
        const Trajectory traj =
            integrate(mc, d, tau, History::constant(history), t_end, step);
        return to_string(detect_asymptotics(traj, u_eq));
      },
      py::arg("model"), py::arg("d"), py::arg("tau"), py::arg("history"),
      py::arg("t_end"), py::arg("step"), py::arg("u_eq"),
      "Integrate and summarize the long-time behaviour relative to u_eq");
}
