#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "instanton/action_oracle.hpp"
#include "instanton/experiment.hpp"
#include "instanton/levy_measure.hpp"
#include "instanton/path.hpp"
#include "instanton/simulator.hpp"
#include "instanton/solver.hpp"

namespace py = pybind11;
using namespace instanton;
namespace ex = instanton::experiment;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Path make_path(const Vector& times, const Matrix& states) {
  if (states.cols() != times.size()) throw py::value_error("states must have one column per time");
  Path p;
  p.times = times;
  p.states = states;
  return p;
}

py::dict path_dict(const Path& p) {
  py::dict d;
  d["times"] = p.times;
  d["states"] = p.states;
  return d;
}

py::dict history_dict(const std::vector<TrainRecord>& h) {
  std::vector<std::int64_t> it;
  std::vector<double> phi, g, total, seconds;
  for (const auto& r : h) {
    it.push_back(r.iteration);
    phi.push_back(r.loss_phi);
    g.push_back(r.loss_g);
    total.push_back(r.total);
    seconds.push_back(r.seconds);
  }
  py::dict d;
  d["iteration"] = it;
  d["loss_phi"] = phi;
  d["loss_g"] = g;
  d["total"] = total;
  d["seconds"] = seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Most likely transition paths for SDEs with Gaussian or Levy noise";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<RangeError>(m, "RangeError", PyExc_ArithmeticError);
  py::register_exception<AdmissibilityError>(m, "AdmissibilityError", PyExc_ArithmeticError);

  py::class_<ex::ExperimentConfig>(m, "ExperimentConfig")
      .def_readonly("name", &ex::ExperimentConfig::name)
      .def_readonly("description", &ex::ExperimentConfig::description)
      .def_readonly("runtime_class", &ex::ExperimentConfig::runtime_class)
      .def_readonly("seed", &ex::ExperimentConfig::seed)
      .def_readonly("horizons", &ex::ExperimentConfig::horizons)
      .def_property_readonly("noise", [](const ex::ExperimentConfig& c) { return to_string(c.problem.noise); })
      .def_property_readonly("residual_count", [](const ex::ExperimentConfig& c) { return c.problem.residual_count; })
      .def_property_readonly("iterations", [](const ex::ExperimentConfig& c) { return c.solver.iterations; })
      .def_property_readonly("document", [](const ex::ExperimentConfig& c) { return to_python(c.snapshot); })
      .def_property_readonly("content_hash", [](const ex::ExperimentConfig& c) { return ex::content_hash(c.snapshot); })
      .def(
          "with_iterations",
          [](ex::ExperimentConfig c, std::int64_t n) {
            if (n < 0) throw ConfigError("iterations", "must be non-negative");
            c.solver.iterations = n;
            c.snapshot["solver"]["iterations"] = n;
            return c;
          },
          py::arg("iterations"));

  m.def(
      "load_config", [](const std::filesystem::path& file, bool paper_scale) { return ex::load_config(file, paper_scale); },
      py::arg("file"), py::arg("paper_scale") = false);
  m.def(
      "parse_config",
      [](const std::string& text, bool paper_scale) { return ex::parse_config(nlohmann::json::parse(text), paper_scale); },
      py::arg("text"), py::arg("paper_scale") = false, "Parses a config given as a JSON string.");

  m.def(
      "train",
      [](const ex::ExperimentConfig& c, std::optional<double> horizon) {
        const double t = horizon.value_or(c.horizons.front());
        const ControlProblem p = c.problem_at(t);
        TrainResult r;
        RateReport rep;
        Path path;
        {
          py::gil_scoped_release release;
          r = train(p, c.solver);
          rep = evaluate_rate(r.phi, r.g, p);
          path = extract_path(r.phi, residual_times(t, p.residual_count), t);
        }
        py::dict d = path_dict(path);
        d["rate"] = rep.rate;
        d["mean_cost"] = rep.mean_cost;
        d["profile"] = rep.profile;
        d["start_residual"] = rep.start_residual;
        d["end_residual"] = rep.end_residual;
        d["history"] = history_dict(r.history);
        return d;
      },
      py::arg("config"), py::arg("horizon") = py::none(),
      "Trains the networks of `config` at one horizon; returns the path, rate and history.");

  m.def(
      "oracle",
      [](const ex::ExperimentConfig& c, std::optional<double> horizon) {
        const ControlProblem p = c.problem_at(horizon.value_or(c.horizons.front()));
        py::dict d;
        if (p.noise == NoiseKind::gaussian) {
          OracleResult r;
          {
            py::gil_scoped_release release;
            r = minimize_gaussian_action(p, c.oracle);
          }
          d = path_dict(r.path);
          d["action"] = r.action;
          d["converged"] = r.converged;
          d["iterations"] = r.iterations;
        } else {
          LevyOracleResult r;
          {
            py::gil_scoped_release release;
            r = minimize_levy_action(p, c.oracle);
          }
          d = path_dict(r.path);
          d["action"] = r.action;
          d["converged"] = r.converged;
          d["iterations"] = r.iterations;
          d["theta"] = r.theta;
        }
        return d;
      },
      py::arg("config"), py::arg("horizon") = py::none(), "Minimizes the discretized action by collocation.");

  m.def(
      "gaussian_action",
      [](const Vector& times, const Matrix& states, double beta) {
        return gaussian_action(make_path(times, states), maier_stein(beta), DiffusionField::identity(2));
      },
      py::arg("times"), py::arg("states"), py::arg("beta"), "Action of a path under the Maier-Stein field.");

  m.def(
      "drift",
      [](const std::string& name, const std::map<std::string, double>& params, const Matrix& xs) {
        return make_drift(name, params).evaluate(xs);
      },
      py::arg("name"), py::arg("params"), py::arg("xs"), "Evaluates a registered drift on a d x N batch.");

  m.def(
      "hausdorff_distance",
      [](const Matrix& a, const Matrix& b) {
        Path pa, pb;
        pa.times = Vector::LinSpaced(a.cols(), 0, 1);
        pa.states = a;
        pb.times = Vector::LinSpaced(b.cols(), 0, 1);
        pb.states = b;
        return hausdorff_distance(pa, pb);
      },
      py::arg("a"), py::arg("b"), "Symmetric Hausdorff distance between two d x n point sets.");

  m.def(
      "read_path_csv", [](const std::filesystem::path& file) { return path_dict(read_path_csv(file)); },
      py::arg("file"));
  m.def(
      "write_path_csv",
      [](const std::filesystem::path& file, const Vector& times, const Matrix& states) {
        write_path_csv(file, make_path(times, states));
      },
      py::arg("file"), py::arg("times"), py::arg("states"));

  py::class_<levy::QuadratureGrid>(m, "QuadratureGrid")
      .def(py::init([](double gamma, int dimension, double half_width, double mesh) {
             return levy::build_grid({gamma, dimension}, half_width, mesh);
           }),
           py::arg("gamma"), py::arg("dimension") = 2, py::arg("half_width") = 5.0, py::arg("mesh") = 0.25)
      .def_property_readonly("size", &levy::QuadratureGrid::size)
      .def_property_readonly("nodes", [](const levy::QuadratureGrid& g) { return Matrix(g.nodes()); })
      .def_property_readonly("weights", [](const levy::QuadratureGrid& g) { return Vector(g.weights()); })
      .def("total_mass", [](const levy::QuadratureGrid& g) { return levy::total_mass(g); })
      .def("msd_constant", [](const levy::QuadratureGrid& g) { return levy::msd_constant(g); })
      .def("cumulant", [](const levy::QuadratureGrid& g, const Vector& th) { return levy::cumulant(g, th); })
      .def("cumulant_gradient",
           [](const levy::QuadratureGrid& g, const Vector& th) { return levy::cumulant_gradient(g, th); })
      .def("running_cost", [](const levy::QuadratureGrid& g, const Vector& v) { return levy::running_cost(g, v); })
      .def("drift_correction",
           [](const levy::QuadratureGrid& g, const Vector& v) { return levy::drift_correction(g, v); })
      .def("legendre", [](const levy::QuadratureGrid& g, const Vector& v) {
        const auto r = levy::legendre(g, v);
        return py::make_tuple(r.theta, r.local_cost);
      });

  m.def(
      "estimate_msd",
      [](double gamma, int dimension, double epsilon, double horizon, std::int64_t trials, std::uint64_t seed) {
        MsdEstimate e;
        {
          py::gil_scoped_release release;
          e = estimate_msd({gamma, dimension}, epsilon, horizon, trials, seed);
        }
        py::dict d;
        d["estimate"] = e.value;
        d["standard_error"] = e.standard_error;
        d["expected"] = e.expected;
        d["z_score"] = e.z_score();
        return d;
      },
      py::arg("gamma"), py::arg("dimension"), py::arg("epsilon"), py::arg("horizon"), py::arg("trials"),
      py::arg("seed") = 0);

  m.def(
      "run",
      [](const std::string& command, const std::filesystem::path& config, std::optional<std::filesystem::path> out,
         std::optional<std::uint64_t> seed, int threads, bool paper_scale) {
        ex::GlobalOptions g;
        g.config = config;
        g.out = out;
        g.seed = seed;
        g.threads = threads;
        g.paper_scale = paper_scale;
        std::ostringstream log, err;
        int rc = 0;
        {
          py::gil_scoped_release release;
          rc = ex::run_guarded(
              [&] {
                if (command == "train") return ex::cmd_train(g, log);
                if (command == "oracle") return ex::cmd_oracle(g, log);
                if (command == "simulate") return ex::cmd_simulate(g, log);
                if (command == "validate-config") return ex::cmd_validate_config(g, log);
                throw ConfigError("command", "expected train, oracle, simulate or validate-config");
              },
              err);
        }
        return py::make_tuple(rc, log.str() + err.str());
      },
      py::arg("command"), py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none(),
      py::arg("threads") = 1, py::arg("paper_scale") = false,
      "Runs a CLI command; returns (exit code, log text).");
}
