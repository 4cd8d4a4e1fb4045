#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "degdiff/checks.hpp"
#include "degdiff/cli_io.hpp"
#include "degdiff/config.hpp"
#include "degdiff/malliavin.hpp"

#include <sstream>

namespace py = pybind11;
using namespace degdiff;

namespace {

RunConfig config_from_dict(const py::dict& d) {
  RunConfig cfg;
  for (auto item : d) {
    const std::string key = py::cast<std::string>(item.first);
    std::string sec;
    std::string k = key;
    if (key.rfind("model.", 0) == 0) {
      sec = "model";
      k = key.substr(6);
    }
    apply_config_key(cfg, sec, k, py::cast<std::string>(py::str(item.second)));
  }
  return cfg;
}

py::dict bundle_to_dict(const PathBundle& b) {
  py::dict out;
  const int N = b.grid.steps;
  py::list t, x, db, m;
  for (int i = 0; i <= N; ++i) {
    t.append(b.grid.time(i));
    py::list row;
    for (int a = 0; a < b.n; ++a) row.append(b.state(i)[a]);
    x.append(row);
  }
  for (int i = 0; i < N; ++i) {
    py::list rdb, rm;
    for (int k = 0; k < b.d; ++k) {
      rdb.append(b.incr(i)[k]);
      rm.append(b.m_incr(i)[k]);
    }
    db.append(rdb);
    m.append(rm);
  }
  out["t"] = t;
  out["x"] = x;
  out["db"] = db;
  out["m"] = m;
  if (b.has_nabla) {
    py::list nb;
    for (int i = 0; i <= N; ++i) {
      py::list row;
      for (int a = 0; a < b.n; ++a) row.append(b.nabla(i)[a]);
      nb.append(row);
    }
    out["nabla_h"] = nb;
  }
  out["refined_steps"] = b.refined_steps;
  return out;
}

}  // namespace

PYBIND11_MODULE(_degdiff, mod) {
  mod.doc() = "Degenerate diffusion simulation: projection fields, stochastic flows, "
              "Malliavin-type derivatives and functional-inequality checks.";

  py::register_exception<ParseError>(mod, "ParseError");
  py::register_exception<EvalDomainError>(mod, "EvalDomainError");
  py::register_exception<ConfigError>(mod, "ConfigError");

  py::class_<Expr>(mod, "Expr")
      .def_static("parse", [](const std::string& text, int arity) { return Expr::parse(text, arity); },
                  py::arg("text"), py::arg("arity"))
      .def("__call__", [](const Expr& e, const std::vector<double>& x) { return e.eval(x); })
      .def("grad", [](const Expr& e, const std::vector<double>& x) { return e.grad(x); })
      .def_property_readonly("arity", &Expr::arity)
      .def("__str__", &Expr::to_string);

  mod.def("heisenberg_field", [](const Expr& f, const std::vector<double>& p, const std::string& field) {
    return heisenberg_field_apply(f, p, hfield_from_name(field));
  }, py::arg("f"), py::arg("point"), py::arg("field"), "Apply X, Y, Xhat or Yhat to f at point.");

  mod.def("group_product", [](const std::vector<double>& p, const std::vector<double>& q) {
    const auto r = group_product(p, q);
    return std::vector<double>(r.begin(), r.end());
  });

  mod.def("projection", [](const std::vector<std::vector<double>>& sigma_rows) {
    if (sigma_rows.empty()) throw std::invalid_argument("empty matrix");
    Mat sig(static_cast<int>(sigma_rows.size()), static_cast<int>(sigma_rows[0].size()));
    for (size_t i = 0; i < sigma_rows.size(); ++i)
      for (size_t j = 0; j < sigma_rows[i].size(); ++j) sig(static_cast<int>(i), static_cast<int>(j)) = sigma_rows[i][j];
    const Mat p = projection_range_adjoint(sig);
    std::vector<std::vector<double>> out(p.rows(), std::vector<double>(p.cols()));
    for (int i = 0; i < p.rows(); ++i)
      for (int j = 0; j < p.cols(); ++j) out[i][j] = p(i, j);
    return out;
  }, "Orthogonal projector of R^d onto the range of sigma^T.");

  mod.def("simulate", [](const py::dict& config, long long stream) {
    const RunConfig cfg = config_from_dict(config);
    const Model model = make_model(cfg);
    const TimeGrid grid{cfg.T, cfg.steps};
    const BrownianDriver driver(cfg.seed);
    const Vec x0 = resolve_x0(cfg, model);
    const PathBundle b = simulate(model, grid, driver, static_cast<uint64_t>(stream), x0);
    return bundle_to_dict(b);
  }, py::arg("config"), py::arg("stream") = 0,
     "One Euler-Maruyama path with flows and projected martingale increments.");

  mod.def("run_check", [](const py::dict& config, const std::string& name) {
    RunConfig cfg = config_from_dict(config);
    cfg.check = name;
    py::gil_scoped_release release;
    const ojson report = run_check(cfg);
    return report.dump();
  }, py::arg("config"), py::arg("name"), "Run a registry check; returns the JSON report as a string.");

  mod.def("path_csv", [](const py::dict& config) {
    const RunConfig cfg = config_from_dict(config);
    std::ostringstream ss;
    write_path_csv(ss, cfg);
    return ss.str();
  });

  mod.def("check_registry", [] { return check_registry(); });
}
