#include <sstream>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "plapsde/errors.hpp"
#include "plapsde/estimators.hpp"
#include "plapsde/experiment.hpp"
#include "plapsde/grid.hpp"
#include "plapsde/hl.hpp"
#include "plapsde/model.hpp"
#include "plapsde/rng.hpp"
#include "plapsde/solver.hpp"

namespace py = pybind11;
using namespace plapsde;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ModelSpec make_model(double p, int d, int D, const std::string& family,
                     double epsilon) {
  ModelSpec m;
  m.d = d;
  m.D = D;
  m.p = p;
  m.epsilon = epsilon;
  parse_family(family, m);
  m.validate();
  return m;
}

GradMatrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw DomainError("expected a 2-d array of shape (d, D)");
  return GradMatrix(int(a.shape(0)), int(a.shape(1)),
                    std::span<const double>(a.data(), a.size()));
}

Array from_matrix(const GradMatrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.entries().begin(), m.entries().end(), out.mutable_data());
  return out;
}

// Nodal arrays are (num_nodes, D) with axis 0 fastest in the node index.
NodalField to_nodal(const Array& u, int d, int n) {
  const Grid g(d, n);
  if (u.ndim() != 2 || std::size_t(u.shape(0)) != g.num_nodes()) {
    throw DomainError("expected a nodal array of shape (n^d, D)");
  }
  NodalField f = NodalField::zeros(g, int(u.shape(1)));
  std::copy(u.data(), u.data() + u.size(), f.values.begin());
  return f;
}

Array from_nodal(const NodalField& f) {
  Array out({py::ssize_t(f.grid.num_nodes()), py::ssize_t(f.D)});
  std::copy(f.values.begin(), f.values.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Stochastic p-Laplace evolution: discretization, sampling and checks";
  m.attr("__version__") = PLAPSDE_VERSION;
  m.attr("SCHEMA_VERSION") = kSchemaVersion;

  // Translators run newest first, so the base class goes in first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

  m.def("eval_S",
        [](const Array& xi, double p, const std::string& family, double epsilon) {
          const GradMatrix x = to_matrix(xi);
          return from_matrix(eval_S(x, make_model(p, x.rows(), x.cols(), family,
                                                  epsilon)));
        },
        py::arg("xi"), py::arg("p"), py::arg("family") = "plaplacian",
        py::arg("epsilon") = 1e-3);
  m.def("eval_potential",
        [](const Array& xi, double p, const std::string& family, double epsilon) {
          const GradMatrix x = to_matrix(xi);
          return eval_potential(x, make_model(p, x.rows(), x.cols(), family, epsilon));
        },
        py::arg("xi"), py::arg("p"), py::arg("family") = "plaplacian",
        py::arg("epsilon") = 1e-3);
  m.def("check_ellipticity",
        [](double p, int d, int D, const std::string& family, int samples,
           std::uint64_t seed) {
          const auto e = check_ellipticity(make_model(p, d, D, family, 1e-3),
                                           samples, seed);
          return py::make_tuple(e.lambda_hat, e.Lambda_hat);
        },
        py::arg("p"), py::arg("d") = 2, py::arg("D") = 1,
        py::arg("family") = "plaplacian", py::arg("samples") = 10000,
        py::arg("seed") = 0);

  m.def("grad",
        [](const Array& u, int d, int n) {
          const CellGradient G = grad(to_nodal(u, d, n));
          Array out({py::ssize_t(G.grid.num_cells()), py::ssize_t(d), py::ssize_t(G.D)});
          std::copy(G.values.begin(), G.values.end(), out.mutable_data());
          return out;
        },
        py::arg("u"), py::arg("d"), py::arg("n"));
  m.def("div_adjoint",
        [](const Array& A, int d, int n) {
          const Grid g(d, n);
          if (A.ndim() != 3 || std::size_t(A.shape(0)) != g.num_cells() ||
              A.shape(1) != d) {
            throw DomainError("expected a cell array of shape ((n+1)^d, d, D)");
          }
          CellGradient C = CellGradient::zeros(g, int(A.shape(2)));
          std::copy(A.data(), A.data() + A.size(), C.values.begin());
          return from_nodal(div_adjoint(C));
        },
        py::arg("A"), py::arg("d"), py::arg("n"));

  m.def("implicit_step",
        [](const Array& u_prev, const Array& increment, int d, int n, double p,
           double tau, double epsilon, const std::string& family) {
          const NodalField u = to_nodal(u_prev, d, n);
          const NodalField b = to_nodal(increment, d, n);
          ModelSpec model = make_model(p, d, u.D, family, epsilon);
          model.T = tau;
          return from_nodal(implicit_step(u, b, model, SolverConfig::for_horizon(tau, 1)));
        },
        py::arg("u_prev"), py::arg("increment"), py::arg("d"), py::arg("n"),
        py::arg("p"), py::arg("tau"), py::arg("epsilon") = 1e-3,
        py::arg("family") = "plaplacian");

  m.def("moser_ladder",
        [](double p, int d, int k_max) {
          const auto l = moser_ladder(p, d, k_max);
          return py::make_tuple(l.alphas, l.qs);
        },
        py::arg("p"), py::arg("d"), py::arg("k_max"));

  m.def("eval_h", &hl::eval_h, py::arg("s"), py::arg("alpha"));
  m.def("eval_hL",
        [](double s, double alpha, double L) {
          const auto v = hl::eval_hL(s, {alpha, L});
          return py::make_tuple(v.h, v.d1, v.d2);
        },
        py::arg("s"), py::arg("alpha"), py::arg("L"));
  m.def("_certify_lemma",
        [](double alpha, double L, double plateau, int n_grid, int n_pairs) {
          hl::HLFamily fam{alpha, L};
          fam.plateau = plateau;
          hl::SamplingSpec sampling;
          sampling.n_grid = n_grid;
          sampling.n_pairs = n_pairs;
          return dump_json(hl::to_json(hl::certify_lemma(fam, sampling)));
        },
        py::arg("alpha"), py::arg("L"), py::arg("plateau") = 1.5,
        py::arg("n_grid") = 10000, py::arg("n_pairs") = 10000);

  m.def("philox4x32",
        [](std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key) {
          return Philox4x32::generate(counter, key);
        },
        py::arg("counter"), py::arg("key"));
  m.def("keyed_normal", &keyed_normal, py::arg("seed"), py::arg("path"),
        py::arg("step"), py::arg("mode"));

  m.def("_parse_config",
        [](const std::string& text) {
          std::istringstream is(text);
          return dump_json(parse_config(is).to_json());
        },
        py::arg("text"));
  m.def("_run_command",
        [](const std::string& command, const std::string& text,
           const std::string& out_dir, int workers) {
          std::istringstream is(text);
          ExperimentConfig cfg = parse_config(is);
          cfg.out_dir = out_dir;
          CommandOutput out;
          {
            py::gil_scoped_release release;
            if (command == "simulate") out = cmd_simulate(cfg, workers);
            else if (command == "eps-study") out = cmd_eps_study(cfg, workers);
            else if (command == "convergence") out = cmd_convergence(cfg, workers);
            else if (command == "moser") out = cmd_moser(cfg, workers);
            else if (command == "hl-check") out = cmd_hl_check(cfg);
            else if (command == "bounds-check") out = cmd_bounds_check(cfg);
            else throw DomainError("unknown command '" + command + "'");
          }
          return py::make_tuple(out.exit_code, dump_json(out.summary));
        },
        py::arg("command"), py::arg("config_text"), py::arg("out_dir"),
        py::arg("workers"));
  m.def("default_workers", &default_workers);
}
