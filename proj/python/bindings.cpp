#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "astraea/apportion.hpp"
#include "astraea/augmentation.hpp"
#include "astraea/config.hpp"
#include "astraea/engine.hpp"
#include "astraea/error.hpp"
#include "astraea/metrics.hpp"
#include "astraea/rescheduler.hpp"

namespace py = pybind11;
using namespace astraea;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ParameterVector to_params(const ModelArch& arch, const Array& a) {
  return ParameterVector(arch, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const ParameterVector& p) {
  Array out(static_cast<py::ssize_t>(p.size()));
  std::copy(p.values().begin(), p.values().end(), out.mutable_data());
  return out;
}

// nlohmann <-> Python through the json module keeps the binding small.
nlohmann::json from_py(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Self-balancing federated learning simulator";
  m.attr("__version__") = ASTRAEA_VERSION;

  auto base = py::register_exception<Error>(m, "AstraeaError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ShortageError>(m, "ShortageError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

  py::class_<ModelArch>(m, "ModelArch")
      .def_static("softmax", &ModelArch::softmax, py::arg("input_dim"), py::arg("num_classes"))
      .def_static("mlp", &ModelArch::mlp, py::arg("input_dim"), py::arg("hidden_units"), py::arg("num_classes"))
      .def_property_readonly("num_params", &ModelArch::num_params)
      .def_readonly("input_dim", &ModelArch::input_dim)
      .def_readonly("hidden_units", &ModelArch::hidden_units)
      .def_readonly("num_classes", &ModelArch::num_classes)
      .def("to_dict", [](const ModelArch& a) { return to_py(a.to_json()); })
      .def("__repr__", [](const ModelArch& a) { return "ModelArch(" + a.to_json().dump() + ")"; });

  m.def(
      "init_params",
      [](const ModelArch& arch, std::uint64_t seed) { return to_array(ParameterVector::random_uniform(arch, seed)); },
      py::arg("arch"), py::arg("seed"), "uniform(-0.05, 0.05) weights");

  m.def(
      "forward",
      [](const ModelArch& arch, const Array& params, const Matrix& x) { return forward(to_params(arch, params), x); },
      py::arg("arch"), py::arg("params"), py::arg("features"), "class probabilities, one row per sample");

  m.def(
      "loss_and_grad",
      [](const ModelArch& arch, const Array& params, const Matrix& x, const std::vector<int>& y) {
        const auto lg = loss_and_grad(to_params(arch, params), x, y);
        return py::make_tuple(lg.loss, to_array(lg.grad));
      },
      py::arg("arch"), py::arg("params"), py::arg("features"), py::arg("labels"), "mean cross-entropy and its gradient");

  m.def(
      "predict",
      [](const ModelArch& arch, const Array& params, const Matrix& x) { return predict(to_params(arch, params), x); },
      py::arg("arch"), py::arg("params"), py::arg("features"));

  m.def(
      "fedavg_aggregate",
      [](const ModelArch& arch, const Array& w, const std::vector<std::pair<std::size_t, Array>>& clients) {
        std::vector<std::pair<std::size_t, ParameterVector>> cw;
        for (const auto& [n, a] : clients) cw.emplace_back(n, to_params(arch, a));
        return to_array(fedavg_aggregate(to_params(arch, w), cw));
      },
      py::arg("arch"), py::arg("global_params"), py::arg("clients"), "clients: list of (num_samples, params)");

  m.def(
      "kld",
      [](const std::vector<double>& p, const std::vector<double>& q) { return kld(p, q); }, py::arg("p"), py::arg("q"));
  m.def(
      "kld_to_uniform", [](const std::vector<std::int64_t>& counts) { return kld_to_uniform(ClassDistribution(counts)); },
      py::arg("counts"));

  m.def(
      "reschedule",
      [](const std::map<ClientId, std::vector<std::int64_t>>& clients, std::size_t gamma) {
        std::map<ClientId, ClassDistribution> d;
        for (const auto& [id, c] : clients) d.emplace(id, ClassDistribution(c));
        const auto a = reschedule(d, gamma);
        py::list out;
        for (const auto& med : a.mediators) {
          py::dict entry;
          entry["clients"] = med.clients;
          entry["counts"] = med.combined.counts;
          entry["kld"] = kld_to_uniform(med.combined);
          out.append(entry);
        }
        return out;
      },
      py::arg("clients"), py::arg("gamma"), "greedy mediator assignment; clients maps id -> class counts");

  m.def(
      "augmentation_plan",
      [](const std::vector<std::int64_t>& counts, double alpha) { return to_py(compute_plan(ClassDistribution(counts), alpha).to_json()); },
      py::arg("counts"), py::arg("alpha"));

  m.def(
      "apportion", [](const std::vector<double>& w, std::int64_t total) { return apportion(std::span<const double>(w), total); },
      py::arg("weights"), py::arg("total"), "largest-remainder integer split of total");

  m.def("traffic_fedavg_round", &traffic_fedavg_round, py::arg("c"), py::arg("num_params"), py::arg("wire_bytes_per_param") = 4);
  m.def("traffic_astraea_round", &traffic_astraea_round, py::arg("c"), py::arg("gamma"), py::arg("num_params"),
        py::arg("wire_bytes_per_param") = 4);

  m.def(
      "proposition_check",
      [](std::size_t num_classes, std::size_t feature_dim, std::int64_t per_class, std::size_t rounds, std::size_t clients,
         double lr, std::uint64_t seed) {
        const std::vector<std::int64_t> counts(num_classes, per_class);
        const auto data = make_synthetic(num_classes, counts, feature_dim, 3.0, seed);
        return proposition_check(ModelArch::softmax(feature_dim, num_classes), data, rounds, clients, lr, seed).per_round;
      },
      py::arg("num_classes") = 4, py::arg("feature_dim") = 6, py::arg("per_class") = 25, py::arg("rounds") = 10,
      py::arg("clients") = 4, py::arg("lr") = 0.5, py::arg("seed") = 1,
      "max-norm gap between FedAvg and centralized gradient descent after each round");

  m.def("default_config", [] { return to_py(default_config_json()); });

  m.def(
      "run",
      [](const py::object& config) {
        const RunConfig cfg = parse_config_json(from_py(config));
        std::ostringstream log;
        int status;
        {
          py::gil_scoped_release release;
          status = run(cfg, log);
        }
        return py::make_tuple(status, log.str());
      },
      py::arg("config"), "runs one config dict (same keys as the JSON file); returns (status, log)");
}
