#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "fairdtmc/checker.hpp"
#include "fairdtmc/learner.hpp"
#include "fairdtmc/pipeline.hpp"
#include "fairdtmc/repair.hpp"

namespace py = pybind11;
using namespace fairdtmc;

namespace {

py::dict verdict_dict(const FairnessVerdict& v) {
  py::dict groups;
  for (const auto& g : v.group_probs) groups[py::str(g.group)] = g.prob;
  py::dict d;
  d["group_probs"] = groups;
  d["max_diff"] = v.max_diff;
  d["xi"] = v.xi;
  d["pass"] = v.pass;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Fairness verification and repair of neural networks through learned DTMCs";

  auto error = py::register_exception<Error>(m, "Error");
  py::register_exception<ModelError>(m, "ModelError", error);
  py::register_exception<ArgumentError>(m, "ArgumentError", error);
  py::register_exception<SolverError>(m, "SolverError", error);
  py::register_exception<ConfigError>(m, "ConfigError", error);

  py::class_<Network>(m, "Network")
      .def_property_readonly("labels", &Network::labels)
      .def_property_readonly("input_width", &Network::input_width)
      .def_property_readonly("output_width", &Network::output_width)
      .def("forward", &Network::forward, py::arg("x"))
      .def("predict", [](const Network& n, const Vector& x) { return n.labels()[n.predict_label(n.forward(x))]; },
           py::arg("x"))
      .def("to_json", &serialize_network);

  m.def("load_network", &load_network, py::arg("path"));
  m.def("parse_network", [](const std::string& text) { return parse_network(text); }, py::arg("text"));

  m.def(
      "derive_eps_delta",
      [](double mu_eps, double mu_delta) {
        const PacParams p = derive_eps_delta(mu_eps, mu_delta);
        return py::make_tuple(p.epsilon, p.delta);
      },
      py::arg("mu_eps"), py::arg("mu_delta"));
  m.def(
      "compute_hn",
      [](double eps, double delta_prime, const std::vector<std::uint64_t>& row) {
        return compute_hn(eps, delta_prime, row);
      },
      py::arg("epsilon"), py::arg("delta_prime"), py::arg("row"));

  m.def(
      "reach_all",
      [](const Matrix& a, std::size_t target, bool force_iterative) {
        ReachOptions o;
        o.force_iterative = force_iterative;
        return reach_all(a, target, o);
      },
      py::arg("a"), py::arg("target"), py::arg("force_iterative") = false);

  m.def(
      "fairness_verdict",
      [](const std::map<std::string, double>& probs, double xi) {
        std::vector<GroupProb> g;
        for (const auto& [name, p] : probs) g.push_back({name, p});
        return verdict_dict(fairness_verdict(std::move(g), xi));
      },
      py::arg("group_probs"), py::arg("xi"));

  m.def(
      "estimate_prob_diff",
      [](const Network& net, std::size_t protected_feature, std::size_t label, std::size_t n_eval,
         std::uint64_t seed, const std::map<std::string, std::vector<double>>& weights) {
        return estimate_prob_diff(net, {0, weights}, protected_feature, label, n_eval, seed);
      },
      py::arg("net"), py::arg("protected_feature"), py::arg("label"), py::arg("n_eval") = 5000,
      py::arg("seed") = 0, py::arg("distribution") = std::map<std::string, std::vector<double>>{});

  m.def(
      "dtmc_to_dot",
      [](const std::string& text) {
        std::istringstream in(text);
        return export_dot(read_dtmc(in));
      },
      py::arg("text"));

  m.def(
      "run",
      [](const std::filesystem::path& config_path) {
        const RunConfig c = load_run_config(config_path);
        RunOutcome r;
        {
          py::gil_scoped_release release;
          r = run_verify_repair(c);
        }
        py::dict d;
        d["exit_code"] = r.exit_code;
        d["verdict"] = verdict_dict(r.report.verdict);
        d["traces_used"] = r.report.traces_used;
        d["non_pac"] = r.report.non_pac;
        d["report"] = report_json(r.report, r.ranking ? &*r.ranking : nullptr, r.repair ? &*r.repair : nullptr);
        std::vector<std::string> artifacts;
        for (const auto& p : r.artifacts) artifacts.push_back(p.string());
        d["artifacts"] = artifacts;
        return d;
      },
      py::arg("config"), "Run verify (and repair on failure) from a JSON run config.");
}
