#include <sstream>

#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ptdelta/cli.hpp"
#include "ptdelta/oracle.hpp"

namespace py = pybind11;
using namespace ptdelta;

namespace {

TrapParams make_params(double gamma, double g, double b, NonlinearityMode mode) {
  TrapParams p;
  p.gamma = gamma;
  p.g = g;
  p.b = b;
  p.mode = mode;
  p.validate();
  return p;
}

int cli_main(std::vector<std::string> args) {
  args.insert(args.begin(), "ptdelta");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  const py::module_ sys = py::module_::import("sys");
  sys.attr("stdout").attr("write")(out.str());
  sys.attr("stderr").attr("write")(err.str());
  return code;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Stationary states and BdG stability of a BEC in a PT-symmetric double-delta trap";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<NotFound>(m, "NotFound", PyExc_LookupError);
  py::register_exception<NonConvergence>(m, "NonConvergence", PyExc_RuntimeError);

  py::enum_<Branch>(m, "Branch")
      .value("Ground", Branch::Ground)
      .value("Excited", Branch::Excited)
      .value("BrokenPlus", Branch::BrokenPlus)
      .value("BrokenMinus", Branch::BrokenMinus);
  py::enum_<NonlinearityMode>(m, "NonlinearityMode")
      .value("NormDependent", NonlinearityMode::NormDependent)
      .value("NormIndependent", NonlinearityMode::NormIndependent);
  py::enum_<BdgVariant>(m, "BdgVariant")
      .value("Standard", BdgVariant::Standard)
      .value("Modified", BdgVariant::Modified);
  py::enum_<Stability>(m, "Stability")
      .value("Oscillatory", Stability::Oscillatory)
      .value("Unstable", Stability::Unstable);

  py::class_<TrapParams>(m, "TrapParams")
      .def(py::init(&make_params), py::arg("gamma") = 0.0, py::arg("g") = 0.0,
           py::arg("b") = 1.1, py::arg("mode") = NonlinearityMode::NormDependent)
      .def_readwrite("gamma", &TrapParams::gamma)
      .def_readwrite("g", &TrapParams::g)
      .def_readwrite("b", &TrapParams::b)
      .def_readwrite("mode", &TrapParams::mode)
      .def_readwrite("x_max", &TrapParams::x_max)
      .def("validate", &TrapParams::validate)
      .def("__repr__", [](const TrapParams& p) {
        return "TrapParams(gamma=" + format_number(p.gamma) + ", g=" + format_number(p.g) +
               ", b=" + format_number(p.b) + ")";
      });

  py::class_<StationaryState>(m, "StationaryState")
      .def_readonly("params", &StationaryState::params)
      .def_readonly("kappa", &StationaryState::kappa)
      .def_readonly("mu", &StationaryState::mu)
      .def_readonly("branch", &StationaryState::branch)
      .def_readonly("pt_symmetric", &StationaryState::pt_symmetric)
      .def_readonly("pt_deviation", &StationaryState::pt_deviation)
      .def_readonly("norm", &StationaryState::norm)
      .def_readonly("residual_norm", &StationaryState::residual_norm)
      .def_property_readonly("x", [](const StationaryState& s) { return s.psi.x; })
      .def_property_readonly("psi", [](const StationaryState& s) { return s.psi.psi; })
      .def("__call__", [](const StationaryState& s, double x) { return s.psi.eval(x); });

  py::class_<BdgSolution>(m, "BdgSolution")
      .def_readonly("base", &BdgSolution::base)
      .def_readonly("variant", &BdgSolution::variant)
      .def_readonly("omega", &BdgSolution::omega)
      .def_readonly("normalization", &BdgSolution::normalization)
      .def_readonly("residual_norm", &BdgSolution::residual_norm)
      .def_property_readonly("stability", [](const BdgSolution& s) { return classify(s.omega); })
      .def("quadruplet", &BdgSolution::quadruplet);

  py::class_<DeltaGamma>(m, "DeltaGamma")
      .def_readonly("gamma_kappa", &DeltaGamma::gamma_kappa)
      .def_readonly("gamma_omega", &DeltaGamma::gamma_omega)
      .def_readonly("delta", &DeltaGamma::delta);

  py::class_<LinearExceptionalPoint>(m, "LinearExceptionalPoint")
      .def_readonly("gamma", &LinearExceptionalPoint::gamma)
      .def_readonly("kappa", &LinearExceptionalPoint::kappa);

  py::class_<GrowthFit>(m, "GrowthFit")
      .def_readonly("rate", &GrowthFit::rate)
      .def_readonly("stable", &GrowthFit::stable);

  const auto release = py::call_guard<py::gil_scoped_release>();
  m.def("solve_all_states", &solve_all_states, py::arg("params"), release);
  m.def("locate_pitchfork", &locate_pitchfork, py::arg("params"), release);
  m.def("locate_tangent", &locate_tangent, py::arg("params"), release);
  m.def("locate_stability_change", &locate_stability_change, py::arg("params"),
        py::arg("variant") = BdgVariant::Standard, release);
  m.def("delta_gamma", &delta_gamma, py::arg("params"), py::arg("variant") = BdgVariant::Standard,
        release);
  m.def("tracked_mode", &tracked_mode, py::arg("params"), py::arg("branch") = Branch::Ground,
        py::arg("variant") = BdgVariant::Standard, release);
  m.def("classify", &classify, py::arg("omega"));
  m.def("linear_spectrum", &linear_spectrum, py::arg("gamma"), py::arg("b") = 1.1);
  m.def("linear_determinant", &linear_determinant, py::arg("kappa"), py::arg("gamma"),
        py::arg("b") = 1.1);
  m.def("linear_exceptional_point", &linear_exceptional_point, py::arg("b") = 1.1);
  m.def(
      "grid_kappa",
      [](const StationaryState& s, double h) {
        GridProblem gp;
        gp.h = h;
        return grid_solve(gp, s.params, grid_guess(s, gp), s.kappa).kappa;
      },
      py::arg("state"), py::arg("h") = 0.0025, release);
  m.def(
      "fit_growth_rate",
      [](const std::vector<double>& t, const std::vector<double>& a, double epsilon) {
        return fit_growth_rate(t, a, epsilon);
      },
      py::arg("t"), py::arg("amplitude"), py::arg("epsilon"));
  m.def("sha256_hex", &sha256_hex, py::arg("data"));
  m.def("main", &cli_main, py::arg("args"),
        "Runs the command-line interface with the given arguments and returns its exit code.");
}
