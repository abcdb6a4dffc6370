#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lyapcert/commands.hpp"
#include "lyapcert/theory.hpp"

namespace py = pybind11;
using namespace lyapcert;

PYBIND11_MODULE(_core, m) {
  m.doc() = "C++ core of lyapcert";

  py::class_<MlpArchitecture>(m, "MlpArchitecture")
      .def(py::init([](int p, int h) { return MlpArchitecture{p, h}; }), py::arg("input_dim") = 2,
           py::arg("hidden") = 20)
      .def_readwrite("input_dim", &MlpArchitecture::input_dim)
      .def_readwrite("hidden", &MlpArchitecture::hidden)
      .def("param_count", &MlpArchitecture::param_count);

  py::class_<CertificateParams>(m, "CertificateParams")
      .def_readonly("arch", &CertificateParams::arch)
      .def("flatten", &CertificateParams::flatten);

  m.def("init_params", &init_params, py::arg("arch"), py::arg("seed"));
  m.def(
      "unflatten",
      [](const MlpArchitecture& arch, const std::vector<double>& theta) {
        return CertificateParams::unflatten(arch, theta);
      },
      py::arg("arch"), py::arg("theta"));
  m.def("eval_V", &eval_V, py::arg("theta"), py::arg("x"));
  m.def("grad_x_V", &grad_x_V, py::arg("theta"), py::arg("x"));

  py::class_<CertificateNet>(m, "CertificateNet")
      .def(py::init<CertificateParams>())
      .def("value", &CertificateNet::value)
      .def("grad", &CertificateNet::grad)
      .def("values", &CertificateNet::values, "columns of xs are states");

  py::class_<PendulumParams>(m, "PendulumParams")
      .def(py::init([](double mass, double length, double b, double g) { return PendulumParams{mass, length, b, g}; }),
           py::arg("m") = 1.0, py::arg("l") = 1.0, py::arg("b") = 2.0, py::arg("g") = 9.81)
      .def_readwrite("m", &PendulumParams::m)
      .def_readwrite("l", &PendulumParams::l)
      .def_readwrite("b", &PendulumParams::b)
      .def_readwrite("g", &PendulumParams::g);

  m.def(
      "pendulum_rollout",
      [](const PendulumParams& p, const Vec& xi, double horizon, double dt) {
        const auto t = rollout(pendulum_field(p), xi, horizon, dt, {0});
        const Vec times = Eigen::Map<const Vec>(t.times.data(), static_cast<Eigen::Index>(t.times.size()));
        return py::make_tuple(times, t.states, t.derivs);
      },
      py::arg("params"), py::arg("xi"), py::arg("horizon") = 8.0, py::arg("dt") = 0.05,
      "RK4 rollout with angle wrapping; returns (times, states, derivs).");

  m.def("nested_sum_count", &nested_sum_count);
  m.def("binomial", &binomial);
  m.def(
      "peak_t_exp",
      [](double rho, bool discrete) {
        const auto p = peak_t_exp(rho, discrete ? TimeMode::DT : TimeMode::CT);
        return py::make_tuple(p.t_star, p.value);
      },
      py::arg("rho"), py::arg("discrete") = false);
  m.def("gen_bound", &gen_bound, py::arg("rn"), py::arg("tau"), py::arg("b_h"), py::arg("n"), py::arg("delta"),
        py::arg("k"), py::arg("log_inner_scale") = 1.0);

  m.def(
      "run",
      [](const std::string& command, const std::filesystem::path& config, std::optional<std::filesystem::path> out,
         std::optional<std::uint64_t> seed, std::optional<unsigned> threads) {
        CommandOptions o;
        o.config_path = config;
        o.out = std::move(out);
        o.seed = seed;
        o.threads = threads;
        py::gil_scoped_release release;
        if (command == "train") return cmd_train(o);
        if (command == "evaluate") return cmd_evaluate(o);
        if (command == "bounds") return cmd_bounds(o);
        if (command == "verify") return cmd_verify(o);
        return exit_code::usage;
      },
      py::arg("command"), py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none(),
      py::arg("threads") = py::none(), "Runs a CLI subcommand and returns its exit code.");
}
