#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "physprior/cli/checkpoint.hpp"
#include "physprior/cli/config.hpp"
#include "physprior/cli/experiments.hpp"
#include "physprior/cli/selftest.hpp"
#include "physprior/error.hpp"
#include "physprior/hyperbolic/hyperbolic.hpp"
#include "physprior/train/metrics.hpp"

namespace py = pybind11;
using namespace physprior;
using numkit::Tensor;

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

Overrides to_overrides(const py::dict& d) {
  Overrides kv;
  for (auto item : d) {
    py::object v = py::reinterpret_borrow<py::object>(item.second);
    std::string s = py::isinstance<py::bool_>(v) ? (v.cast<bool>() ? "true" : "false") : py::str(v).cast<std::string>();
    kv.emplace_back(py::str(item.first).cast<std::string>(), s);
  }
  return kv;
}

py::dict config_dict(const cli::RunConfig& cfg) {
  py::dict d;
  for (const auto& key : cli::config_keys()) d[py::str(key)] = cli::get_config_value(cfg, key);
  return d;
}

py::list rows_list(const std::vector<cli::ReportRow>& rows) {
  py::list out;
  for (const auto& r : rows)
    out.append(py::dict(py::arg("check") = r.check, py::arg("value") = r.value, py::arg("relation") = r.relation,
                        py::arg("threshold") = r.threshold, py::arg("passed") = r.pass));
  return out;
}

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> a(shape);
  std::copy(t.values().begin(), t.values().end(), a.mutable_data());
  return a;
}

Tensor from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  numkit::Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings of the physprior C++ library";
  m.attr("__version__") = "0.1.0";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  m.def("preset_names", &cli::preset_names);
  m.def(
      "preset",
      [](const std::string& name, const py::dict& overrides) {
        return config_dict(cli::resolve_config(name, {}, to_overrides(overrides)));
      },
      py::arg("name"), py::arg("overrides") = py::dict(), "Resolved configuration of a preset as a dict of strings.");

  m.def(
      "reproduce",
      [](const std::string& name, const py::dict& overrides) {
        cli::RunConfig cfg = cli::resolve_config(name, {}, to_overrides(overrides));
        cli::Reproduction rep;
        {
          py::gil_scoped_release release;
          rep = cli::reproduce(cfg);
        }
        py::dict files;
        for (const auto& [n, content] : rep.files.files) files[py::str(n)] = py::bytes(content);
        return py::dict(py::arg("files") = files, py::arg("checks") = rows_list(rep.rows),
                        py::arg("passed") = rep.all_pass);
      },
      py::arg("name"), py::arg("overrides") = py::dict(),
      "gen -> train -> eval -> baseline in memory; returns the artifacts and the threshold checks.");

  m.def(
      "load_checkpoint",
      [](const std::string& path) {
        cli::Checkpoint ck = cli::load_checkpoint(path);
        py::dict params;
        for (std::size_t i = 0; i < ck.names.size(); ++i) params[py::str(ck.names[i])] = to_array(ck.values[i]);
        py::dict hyper, meta;
        for (const auto& [k, v] : ck.hyperparameters) hyper[py::str(k)] = v;
        for (const auto& [k, v] : ck.metadata) meta[py::str(k)] = v;
        return py::dict(py::arg("family") = cli::family_from_tag(ck.family), py::arg("seed") = ck.seed,
                        py::arg("hyperparameters") = hyper, py::arg("parameters") = params,
                        py::arg("metadata") = meta);
      },
      py::arg("path"));

  m.def(
      "metric_eps_u",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& ref) {
        return train::metric_eps_u(from_array(pred), from_array(ref));
      },
      py::arg("pred"), py::arg("ref"), "Relative L2 error of a velocity field.");

  m.def(
      "sod_exact",
      [](double dx, double t) {
        hyperbolic::GridField1D f = hyperbolic::sod_exact({}, {}, dx, t);
        return to_array(f.u);
      },
      py::arg("dx") = 0.005, py::arg("t") = 0.1, "Exact Sod solution (cells x [rho, rho u, E]) on cell centres.");
  m.def(
      "roe_sod",
      [](double dx, double dt, double t) {
        hyperbolic::EulerGas gas;
        hyperbolic::GridField1D f = hyperbolic::sod_initial({}, gas, dx);
        auto steps = static_cast<std::size_t>(std::llround(t / dt));
        for (std::size_t i = 0; i < steps; ++i) f = hyperbolic::roe_step_euler(f, gas, dt);
        return to_array(f.u);
      },
      py::arg("dx") = 0.005, py::arg("dt") = 0.001, py::arg("t") = 0.1, "Classical Roe solution of the Sod tube.");

  m.def("symplectic_checks", [](std::size_t draws) { return rows_list(cli::symplectic_checks(draws)); },
        py::arg("draws") = 20);
  m.def("integrator_order_checks", [] { return rows_list(cli::integrator_order_checks()); });
  m.def("conservation_checks", [] { return rows_list(cli::conservation_checks()); });
  m.def("detection_checks", [](std::size_t configs) { return rows_list(cli::detection_checks(configs)); },
        py::arg("configs") = 200);
}
