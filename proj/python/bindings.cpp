#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "ddac/errors.hpp"
#include "ddac/inference.hpp"
#include "ddac/runtime.hpp"
#include "ddac/spline.hpp"
#include "ddac/synthgen.hpp"

namespace py = pybind11;
using namespace ddac;

namespace {

runtime::RunOptions make_options(std::size_t m, const std::string& mode, double r, std::uint64_t seed,
                                 std::optional<std::size_t> dn, std::size_t folds, std::size_t path_length,
                                 const std::string& cv_rule, std::vector<std::size_t> oracle_set) {
  runtime::RunOptions o;
  o.m = m;
  o.mode = runtime::parse_mode(mode);
  o.r = r;
  o.seed = seed;
  o.dn = dn;
  o.folds = folds;
  o.path_length = path_length;
  o.cv_rule = grouplasso::parse_cv_rule(cv_rule);
  o.oracle_set = std::move(oracle_set);
  return o;
}

py::dict report_dict(const inference::TestReport& rep) {
  py::dict d;
  d["feature"] = rep.feature;
  d["machine"] = rep.machine;
  d["local"] = rep.local;
  d["statistic"] = rep.statistic;
  d["dof"] = rep.dof;
  d["p_value"] = rep.p_value;
  d["alpha"] = rep.alpha;
  d["reject"] = rep.decision == inference::Decision::Reject;
  d["sigma_hat"] = rep.sigma_hat;
  return d;
}

// keeps the Session's workers alive while Python holds it
struct PySession {
  std::unique_ptr<runtime::Session> session;

  runtime::Session& get() {
    if (!session) fail(ErrorKind::InvalidArgument, "session is closed");
    return *session;
  }
};

}  // namespace

PYBIND11_MODULE(_ddacspam, mod) {
  mod.doc() = "Decorrelated feature-distributed sparse additive models";

  static py::exception<Error> error(mod, "DdacError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error.ptr())(py::str(e.what()));
      exc.attr("kind") = to_string(e.kind());
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  mod.def("compute_dn", &spline::compute_dn, py::arg("n"));
  mod.def("chi2_sf", &inference::chi2_sf, py::arg("x"), py::arg("dof"));
  mod.def("chi2_quantile", &inference::chi2_quantile, py::arg("dof"), py::arg("prob"));

  mod.def(
      "simulate",
      [](const std::string& scenario, std::uint64_t seed) {
        auto spec = synthgen::parse_scenario(scenario);
        spec.seed = seed;
        const auto data = synthgen::gen_example(spec);
        py::dict d;
        d["x"] = data.x();
        d["y"] = data.y();
        d["active"] = data.truth()->active_set;
        d["sigma"] = data.truth()->sigma;
        d["h"] = data.truth()->h_values;
        return d;
      },
      py::arg("scenario"), py::arg("seed"));

  py::class_<runtime::FitResult>(mod, "Fit")
      .def_property_readonly("mode", [](const runtime::FitResult& f) { return runtime::to_string(f.mode); })
      .def_readonly("n", &runtime::FitResult::n)
      .def_readonly("p", &runtime::FitResult::p)
      .def_readonly("m", &runtime::FitResult::m)
      .def_readonly("dn", &runtime::FitResult::dn)
      .def_readonly("selected", &runtime::FitResult::selected)
      .def_readonly("intercept", &runtime::FitResult::intercept)
      .def_readonly("ridge_penalty", &runtime::FitResult::ridge_penalty)
      .def_readonly("converged", &runtime::FitResult::converged)
      .def_property_readonly("timings",
                             [](const runtime::FitResult& f) {
                               py::dict d;
                               for (const auto& t : f.timings) d[py::str(t.phase)] = t.seconds;
                               return d;
                             })
      .def("predict", &runtime::FitResult::predict, py::arg("x"))
      .def(
          "component",
          [](const runtime::FitResult& f, std::size_t feature, const Vector& x) -> Vector {
            for (const auto& ff : f.f_hat)
              if (ff.feature == feature) return ff.evaluate(x);
            return Vector::Zero(x.size());
          },
          py::arg("feature"), py::arg("x"))
      .def("identical", [](const runtime::FitResult& a, const runtime::FitResult& b) { return runtime::identical(a, b); });

  mod.def(
      "fit",
      [](Matrix x, Vector y, std::size_t m, const std::string& mode, double r, std::uint64_t seed,
         std::optional<std::size_t> dn, std::size_t folds, std::size_t path_length, const std::string& cv_rule,
         std::vector<std::size_t> oracle_set) {
        const auto options = make_options(m, mode, r, seed, dn, folds, path_length, cv_rule, std::move(oracle_set));
        const Dataset data(std::move(y), std::move(x));
        py::gil_scoped_release release;
        return runtime::run_ddac_spam(data, options);
      },
      py::arg("x"), py::arg("y"), py::arg("m") = 1, py::arg("mode") = "ddac", py::arg("r") = 1.0, py::arg("seed") = 0,
      py::arg("dn") = py::none(), py::arg("folds") = 5, py::arg("path_length") = 500, py::arg("cv_rule") = "1se",
      py::arg("oracle_set") = std::vector<std::size_t>{});

  py::class_<PySession>(mod, "Session")
      .def(py::init([](Matrix x, Vector y, std::size_t m, const std::string& mode, double r, std::uint64_t seed,
                       std::optional<std::size_t> dn, std::size_t folds, std::size_t path_length,
                       const std::string& cv_rule) {
             const auto options = make_options(m, mode, r, seed, dn, folds, path_length, cv_rule, {});
             const Dataset data(std::move(y), std::move(x));
             py::gil_scoped_release release;
             return PySession{std::make_unique<runtime::Session>(data, options)};
           }),
           py::arg("x"), py::arg("y"), py::arg("m") = 1, py::arg("mode") = "ddac", py::arg("r") = 1.0,
           py::arg("seed") = 0, py::arg("dn") = py::none(), py::arg("folds") = 5, py::arg("path_length") = 500,
           py::arg("cv_rule") = "1se")
      .def_property_readonly("result", [](PySession& s) { return s.get().result(); })
      .def(
          "test",
          [](PySession& s, std::size_t feature, double alpha) { return report_dict(s.get().test(feature, alpha)); },
          py::arg("feature"), py::arg("alpha") = 0.05)
      .def("close", [](PySession& s) {
        if (s.session) s.session->close();
        s.session.reset();
      })
      .def("__enter__", [](PySession& s) -> PySession& { return s; })
      .def("__exit__", [](PySession& s, py::args) {
        if (s.session) s.session->close();
        s.session.reset();
      });
}
