#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Sparse>

#include "plapsde/errors.hpp"
#include "plapsde/solver.hpp"

using namespace plapsde;

namespace {

ModelSpec model(double p, double eps = -1.0, int d = 2, int D = 1) {
  ModelSpec m;
  m.d = d;
  m.D = D;
  m.p = p;
  m.epsilon = eps >= 0.0 ? eps : (p < 2.0 ? 1e-3 : 0.0);
  return m;
}

NodalField random_field(const Grid& g, int D, std::uint64_t seed,
                        double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  NodalField u = NodalField::zeros(g, D);
  for (double& v : u.values) v = n(rng);
  return u;
}

double l2sq(const NodalField& u) { return inner(u, u); }

// 5-point (2d) / 3-point (1d) Dirichlet Laplacian assembled directly.
Eigen::SparseMatrix<double> backward_euler_matrix(const Grid& g, double tau) {
  const int n = g.n();
  const int N = int(g.num_nodes());
  const double c = tau / (g.hx() * g.hx());
  std::vector<Eigen::Triplet<double>> t;
  for (int node = 0; node < N; ++node) {
    const auto idx = g.node_index(node);
    t.emplace_back(node, node, 1.0 + 2.0 * g.d() * c);
    int stride = 1;
    for (int a = 0; a < g.d(); ++a) {
      if (idx[a] > 0) t.emplace_back(node, node - stride, -c);
      if (idx[a] < n - 1) t.emplace_back(node, node + stride, -c);
      stride *= n;
    }
  }
  Eigen::SparseMatrix<double> A(N, N);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

}  // namespace

TEST_CASE("zero input gives zero output") {
  const Grid g(2, 15);
  for (double p : {1.5, 2.0, 3.0}) {
    const ModelSpec m = model(p);
    SolverConfig cfg = SolverConfig::for_horizon(1.0, 100);
    const NodalField z = NodalField::zeros(g, 1);
    const NodalField v = implicit_step(z, z, m, cfg);
    for (double x : v.values) CHECK(x == 0.0);
  }
}

TEST_CASE("linear case agrees with a direct backward Euler solve") {
  const Grid g(2, 31);
  const ModelSpec m = model(2.0, 0.0);
  SolverConfig cfg = SolverConfig::for_horizon(0.1, 100);
  const auto A = backward_euler_matrix(g, cfg.tau);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> llt(A);
  REQUIRE(llt.info() == Eigen::Success);

  InitialCondition ic;
  ic.kind = InitialKind::Random;
  ic.seed = 3;
  NodalField u = make_initial(g, 1, ic);
  Eigen::VectorXd ref = Eigen::Map<const Eigen::VectorXd>(u.values.data(),
                                                          u.values.size());
  ImplicitStepper stepper(m, cfg, g, 1);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    u = stepper.solve(u);
    ref = llt.solve(ref);
    for (std::size_t i = 0; i < u.values.size(); ++i) {
      worst = std::max(worst, std::abs(u.values[i] - ref[i]));
    }
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("the step minimizes J and drives the residual below tolerance") {
  for (int n : {15, 31, 63}) {
    const Grid g(2, n);
    for (double p : {1.5, 2.0, 3.0}) {
      const ModelSpec m = model(p);
      SolverConfig cfg = SolverConfig::for_horizon(1.0, 100);
      ImplicitStepper stepper(m, cfg, g, 1);
      const NodalField b = random_field(g, 1, 17 + n, 3.0);
      StepStats stats;
      const NodalField v = stepper.solve(b, &stats);
      CAPTURE(n);
      CAPTURE(p);
      CHECK(stepper.energy(v, b) <= stepper.energy(b, b));
      CHECK(stepper.residual_norm(v, b) <= cfg.newton_tol);
      CHECK(stats.newton_iterations <= cfg.newton_max_iter);
    }
  }
}

TEST_CASE("vector valued and 3-d steps converge") {
  const Grid g3(3, 7);
  const Grid g2(2, 15);
  for (double p : {1.5, 3.0}) {
    for (const auto& [g, D] : {std::pair{g3, 1}, std::pair{g2, 3}}) {
      const ModelSpec m = model(p, -1.0, g.d(), D);
      SolverConfig cfg = SolverConfig::for_horizon(1.0, 50);
      ImplicitStepper stepper(m, cfg, g, D);
      const NodalField b = random_field(g, D, 5, 2.0);
      const NodalField v = stepper.solve(b);
      CHECK(stepper.residual_norm(v, b) <= cfg.newton_tol);
    }
  }
}

TEST_CASE("deterministic dissipation and discrete energy identity") {
  const Grid g(2, 23);
  for (double p : {1.5, 2.0, 3.0}) {
    ModelSpec m = model(p);
    m.T = 0.1;
    SolverConfig cfg = SolverConfig::for_horizon(m.T, 50);
    NoiseModel noise;
    noise.K = 0;
    InitialCondition ic;
    ic.kind = InitialKind::Random;
    ic.amplitude = 4.0;
    ic.seed = 8;
    const NodalField u0 = make_initial(g, 1, ic);
    RunOptions opt;
    opt.store_trajectory = true;
    const PathResult r =
        run_path(u0, m, noise, cfg, 1, 0, FunctionalSpec{}, opt);
    const auto& s = r.trajectory->states;
    for (std::size_t k = 1; k < s.size(); ++k) {
      const double drop = l2sq(s[k]) - l2sq(s[k - 1]);
      CHECK(drop < 0.0);
      const CellGradient G = grad(s[k]);
      const CellGradient S = map_S(G, m);
      const double dissipation =
          2.0 * cfg.tau * (inner(S, G) + m.epsilon * inner(G, G));
      CHECK(drop <= -dissipation + 1e-9);
    }
  }
}

TEST_CASE("backward Euler is first order in time") {
  // u(t) = cos(t) phi with -Delta_h phi = lambda phi for the discrete sine.
  const Grid g(2, 15);
  const double h = g.hx();
  const double pi = std::numbers::pi;
  const double lambda = 2.0 * 4.0 / (h * h) * std::pow(std::sin(pi * h / 2), 2);
  NodalField phi = NodalField::zeros(g, 1);
  std::vector<double> x(2);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    g.node_coords(i, x);
    phi.values[i] = std::sin(pi * x[0]) * std::sin(pi * x[1]);
  }
  ModelSpec m = model(2.0, 0.0);
  m.T = 0.5;
  NoiseModel noise;
  noise.K = 0;
  RunOptions opt;
  opt.store_trajectory = true;
  opt.forcing = [&](double t, NodalField& f) {
    const double c = -std::sin(t) + lambda * std::cos(t);
    for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = c * phi.values[i];
  };
  std::vector<double> err;
  std::vector<NodalField> finals;
  for (int steps : {20, 40, 80}) {
    SolverConfig cfg = SolverConfig::for_horizon(m.T, steps);
    cfg.newton_tol = 1e-12;
    const PathResult r = run_path(phi, m, noise, cfg, 0, 0, FunctionalSpec{}, opt);
    const NodalField& u = r.trajectory->states.back();
    double e = 0.0;
    for (std::size_t i = 0; i < u.values.size(); ++i) {
      e = std::max(e, std::abs(u.values[i] - std::cos(m.T) * phi.values[i]));
    }
    err.push_back(e);
    finals.push_back(u);
  }
  const double order = std::log2(err[0] / err[1]);
  CHECK(order == doctest::Approx(1.0).epsilon(0.1));
  CHECK(std::log2(err[1] / err[2]) == doctest::Approx(1.0).epsilon(0.1));
  double d1 = 0.0, d2 = 0.0;
  for (std::size_t i = 0; i < phi.values.size(); ++i) {
    d1 = std::max(d1, std::abs(finals[0].values[i] - finals[1].values[i]));
    d2 = std::max(d2, std::abs(finals[1].values[i] - finals[2].values[i]));
  }
  CHECK(std::log2(d1 / d2) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("run_path is deterministic in (seed, path_index)") {
  const Grid g(2, 15);
  ModelSpec m = model(1.5);
  m.T = 0.02;
  SolverConfig cfg = SolverConfig::for_horizon(m.T, 10);
  NoiseModel noise;
  const NodalField u0 = make_initial(g, 1, InitialCondition{});
  FunctionalSpec spec;
  spec.natural = true;
  spec.integrability_q = {3.0};
  const auto a = run_path(u0, m, noise, cfg, 5, 2, spec);
  const auto b = run_path(u0, m, noise, cfg, 5, 2, spec);
  const auto c = run_path(u0, m, noise, cfg, 5, 3, spec);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
}

TEST_CASE("weak form residual") {
  const Grid g(2, 11);
  ModelSpec m = model(1.5);
  m.T = 0.05;
  SolverConfig cfg = SolverConfig::for_horizon(m.T, 10);
  std::vector<NodalField> tests;
  for (int k = 0; k < 10; ++k) tests.push_back(random_field(g, 1, 300 + k));

  NoiseModel none;
  none.K = 0;
  RunOptions opt;
  opt.store_trajectory = true;
  const auto zero = run_path(NodalField::zeros(g, 1), m, none, cfg, 0, 0,
                             FunctionalSpec{}, opt);
  CHECK(weak_form_residual(*zero.trajectory, tests, m, none) == 0.0);

  for (auto family : {NoiseFamily::Additive, NoiseFamily::DiagonalMultiplicative,
                      NoiseFamily::SpatiallyModulated}) {
    NoiseModel noise;
    noise.family = family;
    const auto r = run_path(make_initial(g, 1, InitialCondition{}), m, noise,
                            cfg, 9, 4, FunctionalSpec{}, opt);
    Trajectory path = *r.trajectory;
    CHECK(weak_form_residual(path, tests, m, noise) <=
          10.0 * cfg.newton_tol * cfg.n_steps);
    path.states[4].values[30] += 0.1;
    CHECK(weak_form_residual(path, tests, m, noise) > 1e-4);
  }
}

TEST_CASE("initial data") {
  const Grid g(2, 9);
  for (auto kind : {InitialKind::Sine, InitialKind::Bump, InitialKind::Random}) {
    InitialCondition ic;
    ic.kind = kind;
    const NodalField u = make_initial(g, 2, ic);
    CHECK(u.all_finite());
    CHECK(l2sq(u) > 0.0);
    CHECK(parse_initial_kind(to_string(kind)) == kind);
  }
  InitialCondition sine;
  const NodalField s = make_initial(g, 1, sine);
  CHECK(s.values[4 + 9 * 4] == doctest::Approx(1.0));
  CHECK_THROWS_AS(parse_initial_kind("gauss"), DomainError);
}

TEST_CASE("solver configuration validation") {
  ModelSpec m = model(2.0);
  m.T = 1.0;
  SolverConfig cfg = SolverConfig::for_horizon(1.0, 7);
  CHECK_NOTHROW(cfg.validate(m));
  cfg.n_steps = 8;
  CHECK_THROWS_AS(cfg.validate(m), DomainError);
  cfg = SolverConfig::for_horizon(1.0, 10);
  cfg.damping = 1.0;
  CHECK_THROWS_AS(cfg.validate(m), DomainError);
}
