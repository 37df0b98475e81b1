#include "plapsde/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "plapsde/errors.hpp"
#include "plapsde/rng.hpp"

namespace plapsde {

void SolverConfig::validate(const ModelSpec& model) const {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw DomainError("SolverConfig: tau must be > 0");
  }
  if (n_steps < 1) {
    throw DomainError("SolverConfig: n_steps must be >= 1");
  }
  if (std::abs(tau * n_steps - model.T) > 1e-12 * model.T) {
    throw DomainError("SolverConfig: tau * n_steps must equal T");
  }
  if (!(newton_tol > 0.0)) {
    throw DomainError("SolverConfig: newton_tol must be > 0");
  }
  if (newton_max_iter < 1 || cg_max_iter < 1) {
    throw DomainError("SolverConfig: iteration caps must be >= 1");
  }
  if (!(damping > 0.0 && damping < 1.0)) {
    throw DomainError("SolverConfig: damping must lie in (0, 1)");
  }
}

SolverConfig SolverConfig::for_horizon(double T, int n_steps) {
  SolverConfig cfg;
  cfg.n_steps = n_steps;
  cfg.tau = T / n_steps;
  return cfg;
}

ImplicitStepper::ImplicitStepper(const ModelSpec& model,
                                 const SolverConfig& cfg, const Grid& grid,
                                 int D)
    : model_(model), cfg_(cfg), grid_(grid), D_(D), law_(model) {
  if (D < 1 || D != model.D || grid.d() != model.d) {
    throw DomainError("ImplicitStepper: grid/field shape does not match model");
  }
  const std::size_t width = std::size_t(grid.d()) * D;
  cell_grad_.resize(grid.num_cells() * width);
  cell_nu_.resize(grid.num_cells());
  cell_coef_.resize(grid.num_cells());
  const std::size_t n = grid.num_nodes() * D;
  diag_.resize(n);
  cg_r_.resize(n);
  cg_z_.resize(n);
  cg_p_.resize(n);
  cg_hp_.resize(n);
}

namespace {

// Runs fn.template operator()<d, D>() with compile-time dimensions for the
// common shapes; <0, 0> means "use the runtime values".
template <class Fn>
void with_dims(int d, int D, Fn&& fn) {
  if (D == 1) {
    if (d == 1) return fn.template operator()<1, 1>();
    if (d == 2) return fn.template operator()<2, 1>();
    if (d == 3) return fn.template operator()<3, 1>();
  }
  if (D == 2 && d == 2) return fn.template operator()<2, 2>();
  return fn.template operator()<0, 0>();
}

// Cell gradient of a raw nodal vector into `out` ([cell][axis][component]).
void raw_grad(const Grid& g, int D_rt, const std::vector<double>& v,
              std::vector<double>& out) {
  with_dims(g.d(), D_rt, [&]<int DT, int DDT>() {
    const int d = DT ? DT : g.d();
    const int D = DDT ? DDT : D_rt;
    const double inv_h = 1.0 / g.hx();
    for (std::size_t cell = 0; cell < g.num_cells(); ++cell) {
      const std::int32_t q0 = g.corner_node(cell);
      double* row = out.data() + cell * d * D;
      for (int a = 0; a < d; ++a) {
        const std::int32_t q1 = g.forward_node(cell, a);
        for (int c = 0; c < D; ++c) {
          const double v1 = q1 >= 0 ? v[q1 * D + c] : 0.0;
          const double v0 = q0 >= 0 ? v[q0 * D + c] : 0.0;
          row[a * D + c] = (v1 - v0) * inv_h;
        }
      }
    }
  });
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * b[i];
  }
  return s;
}

}  // namespace

void ImplicitStepper::linearize(const std::vector<double>& v) {
  const Grid& g = grid_;
  const int d = g.d();
  const int width = d * D_;
  const double h2 = g.hx() * g.hx();
  const double tau = cfg_.tau;
  const double eps = model_.epsilon;
  raw_grad(g, D_, v, cell_grad_);
  std::fill(diag_.begin(), diag_.end(), 1.0);
  for (std::size_t cell = 0; cell < g.num_cells(); ++cell) {
    const double* xi = cell_grad_.data() + cell * width;
    double s2 = 0.0;
    for (int i = 0; i < width; ++i) {
      s2 += xi[i] * xi[i];
    }
    const double s = std::sqrt(s2);
    const double nu = law_.nu(s);
    const double coef = s > 0.0 ? law_.dnu(s) / s : 0.0;
    cell_nu_[cell] = nu;
    cell_coef_[cell] = coef;

    const std::int32_t q0 = g.corner_node(cell);
    for (int c = 0; c < D_; ++c) {
      if (q0 >= 0) {
        // zeta = -(1/h) in every row of column c
        double col = 0.0;
        for (int a = 0; a < d; ++a) {
          col += xi[a * D_ + c];
        }
        diag_[q0 * D_ + c] +=
            tau * ((nu + eps) * d + coef * col * col) / h2;
      }
      for (int a = 0; a < d; ++a) {
        const std::int32_t q1 = g.forward_node(cell, a);
        if (q1 >= 0) {
          const double x = xi[a * D_ + c];
          diag_[q1 * D_ + c] += tau * ((nu + eps) + coef * x * x) / h2;
        }
      }
    }
  }
}

void ImplicitStepper::hessian_apply(const std::vector<double>& w,
                                    std::vector<double>& out) const {
  const Grid& g = grid_;
  const double inv_h = 1.0 / g.hx();
  const double tau = cfg_.tau;
  const double eps = model_.epsilon;
  std::copy(w.begin(), w.end(), out.begin());
  with_dims(g.d(), D_, [&]<int DT, int DDT>() {
    const int d = DT ? DT : g.d();
    const int D = DDT ? DDT : D_;
    const int width = d * D;
    double zeta[GradMatrix::kMaxEntries];
    for (std::size_t cell = 0; cell < g.num_cells(); ++cell) {
      const std::int32_t q0 = g.corner_node(cell);
      const double* xi = cell_grad_.data() + cell * width;
      double xz = 0.0;
      for (int a = 0; a < d; ++a) {
        const std::int32_t q1 = g.forward_node(cell, a);
        for (int c = 0; c < D; ++c) {
          const double w1 = q1 >= 0 ? w[q1 * D + c] : 0.0;
          const double w0 = q0 >= 0 ? w[q0 * D + c] : 0.0;
          const double z = (w1 - w0) * inv_h;
          zeta[a * D + c] = z;
          xz += xi[a * D + c] * z;
        }
      }
      const double nu = (cell_nu_[cell] + eps) * tau * inv_h;
      const double rad = cell_coef_[cell] * xz * tau * inv_h;
      for (int a = 0; a < d; ++a) {
        const std::int32_t q1 = g.forward_node(cell, a);
        for (int c = 0; c < D; ++c) {
          const int i = a * D + c;
          const double flux = nu * zeta[i] + rad * xi[i];
          if (q0 >= 0) {
            out[q0 * D + c] -= flux;
          }
          if (q1 >= 0) {
            out[q1 * D + c] += flux;
          }
        }
      }
    }
  });
}

void ImplicitStepper::gradient(const std::vector<double>& v,
                               const std::vector<double>& b,
                               std::vector<double>& r) const {
  const Grid& g = grid_;
  const double inv_h = 1.0 / g.hx();
  const double tau = cfg_.tau;
  const double eps = model_.epsilon;
  for (std::size_t i = 0; i < v.size(); ++i) {
    r[i] = v[i] - b[i];
  }
  with_dims(g.d(), D_, [&]<int DT, int DDT>() {
    const int d = DT ? DT : g.d();
    const int D = DDT ? DDT : D_;
    double xi[GradMatrix::kMaxEntries];
    for (std::size_t cell = 0; cell < g.num_cells(); ++cell) {
      const std::int32_t q0 = g.corner_node(cell);
      double s2 = 0.0;
      for (int a = 0; a < d; ++a) {
        const std::int32_t q1 = g.forward_node(cell, a);
        for (int c = 0; c < D; ++c) {
          const double v1 = q1 >= 0 ? v[q1 * D + c] : 0.0;
          const double v0 = q0 >= 0 ? v[q0 * D + c] : 0.0;
          xi[a * D + c] = (v1 - v0) * inv_h;
          s2 += xi[a * D + c] * xi[a * D + c];
        }
      }
      if (s2 == 0.0) {
        continue;
      }
      const double scale = tau * (law_.nu(std::sqrt(s2)) + eps) * inv_h;
      for (int a = 0; a < d; ++a) {
        const std::int32_t q1 = g.forward_node(cell, a);
        for (int c = 0; c < D; ++c) {
          const double flux = scale * xi[a * D + c];
          if (q0 >= 0) {
            r[q0 * D + c] -= flux;
          }
          if (q1 >= 0) {
            r[q1 * D + c] += flux;
          }
        }
      }
    }
  });
}

double ImplicitStepper::energy_raw(const std::vector<double>& v,
                                   const std::vector<double>& b) const {
  const Grid& g = grid_;
  const double inv_h = 1.0 / g.hx();
  double fit = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    fit += (v[i] - b[i]) * (v[i] - b[i]);
  }
  double pot = 0.0;
  double quad = 0.0;
  with_dims(g.d(), D_, [&]<int DT, int DDT>() {
    const int d = DT ? DT : g.d();
    const int D = DDT ? DDT : D_;
    for (std::size_t cell = 0; cell < g.num_cells(); ++cell) {
      const std::int32_t q0 = g.corner_node(cell);
      double s2 = 0.0;
      for (int a = 0; a < d; ++a) {
        const std::int32_t q1 = g.forward_node(cell, a);
        for (int c = 0; c < D; ++c) {
          const double v1 = q1 >= 0 ? v[q1 * D + c] : 0.0;
          const double v0 = q0 >= 0 ? v[q0 * D + c] : 0.0;
          const double x = (v1 - v0) * inv_h;
          s2 += x * x;
        }
      }
      if (s2 > 0.0) {
        pot += law_.potential(std::sqrt(s2));
        quad += s2;
      }
    }
  });
  return g.cell_volume() * (0.5 * fit + cfg_.tau * pot +
                            0.5 * model_.epsilon * cfg_.tau * quad);
}

double ImplicitStepper::weighted_norm(const std::vector<double>& r) const {
  return std::sqrt(dot(r, r) * grid_.cell_volume());
}

int ImplicitStepper::conjugate_gradient(const std::vector<double>& rhs,
                                        double rel_tol,
                                        std::vector<double>& x,
                                        bool& converged) {
  std::fill(x.begin(), x.end(), 0.0);
  cg_r_ = rhs;
  const double target = rel_tol * std::sqrt(dot(rhs, rhs));
  for (std::size_t i = 0; i < x.size(); ++i) {
    cg_z_[i] = cg_r_[i] / diag_[i];
  }
  cg_p_ = cg_z_;
  double rz = dot(cg_r_, cg_z_);
  converged = false;
  int it = 0;
  for (; it < cfg_.cg_max_iter; ++it) {
    if (std::sqrt(dot(cg_r_, cg_r_)) <= target) {
      converged = true;
      break;
    }
    hessian_apply(cg_p_, cg_hp_);
    const double curvature = dot(cg_p_, cg_hp_);
    if (!(curvature > 0.0)) {
      throw ModelRejected(
          "implicit step: negative curvature in the Newton system (non-convex "
          "profile)");
    }
    const double alpha = rz / curvature;
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += alpha * cg_p_[i];
      cg_r_[i] -= alpha * cg_hp_[i];
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      cg_z_[i] = cg_r_[i] / diag_[i];
    }
    const double rz_next = dot(cg_r_, cg_z_);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < x.size(); ++i) {
      cg_p_[i] = cg_z_[i] + beta * cg_p_[i];
    }
  }
  if (!converged && std::sqrt(dot(cg_r_, cg_r_)) <= target) {
    converged = true;
  }
  return it;
}

NodalField ImplicitStepper::solve(const NodalField& b, StepStats* stats) {
  if (!(b.grid == grid_) || b.D != D_) {
    throw DomainError("implicit step: right-hand side does not match grid");
  }
  if (!b.all_finite()) {
    throw DomainError("implicit step: non-finite right-hand side");
  }
  StepStats local;
  const std::vector<double>& bv = b.values;
  std::vector<double> v = bv;
  std::vector<double> r(v.size());
  std::vector<double> delta(v.size());
  std::vector<double> trial(v.size());
  std::vector<double> r_trial(v.size());

  gradient(v, bv, r);
  double rn = weighted_norm(r);
  for (int it = 0;; ++it) {
    if (rn <= cfg_.newton_tol) {
      break;
    }
    if (it >= cfg_.newton_max_iter) {
      throw ConvergenceError("implicit step: Newton did not converge in " +
                                 std::to_string(cfg_.newton_max_iter) +
                                 " iterations",
                             rn);
    }
    ++local.newton_iterations;
    linearize(v);
    for (std::size_t i = 0; i < r.size(); ++i) {
      r_trial[i] = -r[i];
    }
    const double rel_tol = std::clamp(rn, 1e-13, 0.1);
    bool converged = false;
    local.cg_iterations += conjugate_gradient(r_trial, rel_tol, delta, converged);
    double slope = dot(r, delta) * grid_.cell_volume();
    if (!converged || !(slope < 0.0)) {
      // CG stagnated: preconditioned steepest descent.
      ++local.gradient_fallbacks;
      for (std::size_t i = 0; i < r.size(); ++i) {
        delta[i] = -r[i] / diag_[i];
      }
      slope = dot(r, delta) * grid_.cell_volume();
    }

    const double j0 = energy_raw(v, bv);
    double alpha = 1.0;
    while (true) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        trial[i] = v[i] + alpha * delta[i];
      }
      const double j1 = energy_raw(trial, bv);
      bool accept = j1 <= j0 + 1e-4 * alpha * slope;
      double rn_trial = -1.0;
      if (!accept && std::abs(j1 - j0) <= 1e-12 * std::abs(j0)) {
        // Energy differences are at roundoff level: judge by the residual.
        gradient(trial, bv, r_trial);
        rn_trial = weighted_norm(r_trial);
        accept = rn_trial < rn;
      }
      if (accept) {
        v.swap(trial);
        if (rn_trial >= 0.0) {
          r.swap(r_trial);
          rn = rn_trial;
        } else {
          gradient(v, bv, r);
          rn = weighted_norm(r);
        }
        break;
      }
      alpha *= cfg_.damping;
      if (alpha < 1e-12) {
        throw ConvergenceError("implicit step: line search failed", rn);
      }
    }
  }
  local.residual = rn;
  if (stats) {
    stats->newton_iterations += local.newton_iterations;
    stats->cg_iterations += local.cg_iterations;
    stats->gradient_fallbacks += local.gradient_fallbacks;
    stats->residual = std::max(stats->residual, local.residual);
  }
  return {grid_, D_, std::move(v)};
}

double ImplicitStepper::energy(const NodalField& v, const NodalField& b) const {
  return energy_raw(v.values, b.values);
}

NodalField ImplicitStepper::residual(const NodalField& v,
                                     const NodalField& b) const {
  NodalField r = NodalField::zeros(grid_, D_);
  gradient(v.values, b.values, r.values);
  return r;
}

double ImplicitStepper::residual_norm(const NodalField& v,
                                      const NodalField& b) const {
  std::vector<double> r(v.values.size());
  gradient(v.values, b.values, r);
  return weighted_norm(r);
}

NodalField implicit_step(const NodalField& u_prev,
                         const NodalField& noise_term, const ModelSpec& model,
                         const SolverConfig& cfg) {
  if (!(u_prev.grid == noise_term.grid) || u_prev.D != noise_term.D) {
    throw DomainError("implicit_step: field shapes differ");
  }
  NodalField b = u_prev;
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    b.values[i] += noise_term.values[i];
  }
  ImplicitStepper stepper(model, cfg, u_prev.grid, u_prev.D);
  return stepper.solve(b);
}

PathResult run_path(const NodalField& u0, const ModelSpec& model,
                    const NoiseModel& noise, const SolverConfig& cfg,
                    std::uint64_t seed, std::uint64_t path_index,
                    const FunctionalSpec& estimators,
                    const RunOptions& options) {
  cfg.validate(model);
  noise.validate();
  if (u0.D != model.D || u0.grid.d() != model.d) {
    throw DomainError("run_path: initial datum does not match the model");
  }
  if (!u0.all_finite()) {
    throw DomainError("run_path: non-finite initial datum");
  }
  const Grid& grid = u0.grid;
  ImplicitStepper stepper(model, cfg, grid, u0.D);
  const NoiseOperator phi(noise, grid, u0.D);
  PathAccumulator acc(estimators, model, grid, cfg.tau);
  WienerIncrements dW = sample_increments(cfg.n_steps, noise, cfg.tau, seed,
                                          path_index, options.negate_noise);

  PathResult result;
  result.path_index = path_index;
  if (options.store_trajectory) {
    result.trajectory.emplace();
    result.trajectory->tau = cfg.tau;
    result.trajectory->states.reserve(cfg.n_steps + 1);
    result.trajectory->states.push_back(u0);
  }

  NodalField u = u0;
  NodalField noise_term = NodalField::zeros(grid, u0.D);
  NodalField forcing = NodalField::zeros(grid, u0.D);
  NodalField b = NodalField::zeros(grid, u0.D);
  acc.observe(0, u);
  for (int n = 0; n < cfg.n_steps; ++n) {
    b.values = u.values;
    if (noise.K > 0) {
      phi.apply_into(u, dW.row(n), noise_term);
      for (std::size_t i = 0; i < b.values.size(); ++i) {
        b.values[i] += noise_term.values[i];
      }
    }
    if (options.forcing) {
      std::fill(forcing.values.begin(), forcing.values.end(), 0.0);
      options.forcing((n + 1) * cfg.tau, forcing);
      for (double& f : forcing.values) {
        f *= cfg.tau;
      }
      for (std::size_t i = 0; i < b.values.size(); ++i) {
        b.values[i] += forcing.values[i];
      }
      if (result.trajectory) {
        result.trajectory->forcing.push_back(forcing);
      }
    }
    u = stepper.solve(b, &result.totals);
    acc.observe(n + 1, u);
    if (result.trajectory) {
      result.trajectory->states.push_back(u);
    }
  }
  if (result.trajectory) {
    result.trajectory->increments = std::move(dW);
  }
  result.values = acc.values();
  return result;
}

double weak_form_residual(const Trajectory& path,
                          const std::vector<NodalField>& test_fields,
                          const ModelSpec& model, const NoiseModel& noise) {
  if (path.states.empty()) {
    throw DomainError("weak_form_residual: empty trajectory");
  }
  const std::size_t steps = path.states.size() - 1;
  if (noise.K > 0 && std::size_t(path.increments.n_steps) < steps) {
    throw DomainError("weak_form_residual: missing noise increments");
  }
  const NodalField& u0 = path.states.front();
  const NoiseOperator phi_op(noise, u0.grid, u0.D);
  const double tau = path.tau;

  // Drift fluxes and noise terms do not depend on the test field.
  std::vector<CellGradient> flux;
  std::vector<NodalField> stochastic;
  flux.reserve(steps);
  stochastic.reserve(steps);
  for (std::size_t m = 0; m < steps; ++m) {
    const CellGradient G = grad(path.states[m + 1]);
    CellGradient& f = flux.emplace_back(map_S(G, model));
    for (std::size_t i = 0; i < G.values.size(); ++i) {
      f.values[i] += model.epsilon * G.values[i];
    }
    NodalField& s = stochastic.emplace_back(
        noise.K > 0 ? phi_op.apply(path.states[m], path.increments.row(int(m)))
                    : NodalField::zeros(u0.grid, u0.D));
    if (m < path.forcing.size()) {
      for (std::size_t i = 0; i < s.values.size(); ++i) {
        s.values[i] += path.forcing[m].values[i];
      }
    }
  }

  double worst = 0.0;
  for (const NodalField& phi : test_fields) {
    const double phi_norm = std::sqrt(inner(phi, phi));
    if (!(phi_norm > 0.0)) {
      continue;
    }
    const CellGradient grad_phi = grad(phi);
    const double base = inner(u0, phi);
    double acc = 0.0;
    for (std::size_t m = 0; m < steps; ++m) {
      acc += tau * inner(flux[m], grad_phi) - inner(stochastic[m], phi);
      const double value = inner(path.states[m + 1], phi) - base + acc;
      worst = std::max(worst, std::abs(value) / phi_norm);
    }
  }
  return worst;
}

InitialKind parse_initial_kind(std::string_view name) {
  if (name == "sine") return InitialKind::Sine;
  if (name == "bump") return InitialKind::Bump;
  if (name == "random") return InitialKind::Random;
  throw DomainError("unknown initial datum '" + std::string(name) + "'");
}

std::string to_string(InitialKind kind) {
  switch (kind) {
    case InitialKind::Sine:
      return "sine";
    case InitialKind::Bump:
      return "bump";
    case InitialKind::Random:
      return "random";
  }
  return "unknown";
}

NodalField make_initial(const Grid& grid, int D, const InitialCondition& ic) {
  NodalField u = NodalField::zeros(grid, D);
  std::vector<double> x(grid.d());
  std::vector<std::vector<int>> modes;
  std::vector<double> coef;
  if (ic.kind == InitialKind::Random) {
    if (ic.modes < 1) {
      throw DomainError("make_initial: random datum needs modes >= 1");
    }
    modes = sine_modes(grid.d(), ic.modes);
    coef.resize(std::size_t(ic.modes) * D);
    for (int j = 0; j < ic.modes; ++j) {
      double m2 = 0.0;
      for (int v : modes[j]) m2 += double(v) * v;
      for (int c = 0; c < D; ++c) {
        // Stream 2^63 keeps initial data disjoint from path increments.
        coef[std::size_t(j) * D + c] =
            ic.amplitude *
            keyed_normal(ic.seed, std::uint64_t(1) << 63, std::uint32_t(j),
                         std::uint32_t(c)) /
            m2;
      }
    }
  }
  for (std::size_t node = 0; node < grid.num_nodes(); ++node) {
    grid.node_coords(node, x);
    for (int c = 0; c < D; ++c) {
      double v = 0.0;
      switch (ic.kind) {
        case InitialKind::Sine:
          v = ic.amplitude;
          for (double xi : x) v *= std::sin(std::numbers::pi * xi);
          break;
        case InitialKind::Bump:
          v = ic.amplitude;
          for (double xi : x) {
            const double b = 4.0 * xi * (1.0 - xi);
            v *= b * b;
          }
          break;
        case InitialKind::Random:
          for (int j = 0; j < ic.modes; ++j) {
            double phi = 1.0;
            for (int i = 0; i < grid.d(); ++i) {
              phi *= std::sin(std::numbers::pi * modes[j][i] * x[i]);
            }
            v += coef[std::size_t(j) * D + c] * phi;
          }
          break;
      }
      u.at(node, c) = v;
    }
  }
  return u;
}

}  // namespace plapsde
