#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "plapsde/errors.hpp"
#include "plapsde/estimators.hpp"
#include "plapsde/solver.hpp"

using namespace plapsde;

namespace {

ModelSpec model(double p) {
  ModelSpec m;
  m.d = 2;
  m.D = 1;
  m.p = p;
  m.epsilon = p < 2.0 ? 1e-2 : 0.0;
  m.T = 0.05;
  return m;
}

double value_of(const FunctionalValues& v, const std::string& id) {
  for (const auto& [k, x] : v) {
    if (k == id) return x;
  }
  FAIL("missing " << id);
  return 0.0;
}

Trajectory stochastic_path(const ModelSpec& m, std::uint64_t idx) {
  const Grid g(2, 15);
  SolverConfig cfg = SolverConfig::for_horizon(m.T, 10);
  NoiseModel noise;
  RunOptions opt;
  opt.store_trajectory = true;
  return *run_path(make_initial(g, 1, InitialCondition{}), m, noise, cfg, 21,
                   idx, FunctionalSpec{}, opt)
              .trajectory;
}

PathRecord record(std::uint64_t i, double a, double b) {
  return {i, {{"x", a}, {"y", b}}};
}

}  // namespace

TEST_CASE("online and offline functionals agree") {
  for (double p : {1.5, 3.0}) {
    const ModelSpec m = model(p);
    const Trajectory tr = stochastic_path(m, 3);
    FunctionalSpec spec;
    spec.natural = true;
    spec.integrability_q = {2.0, 4.0};
    spec.moment_q = {2.0};
    PathAccumulator acc(spec, m, tr.states.front().grid, tr.tau);
    for (std::size_t n = 0; n < tr.states.size(); ++n) acc.observe(int(n), tr.states[n]);
    const auto online = acc.values();
    CHECK(online.size() == spec.ids().size());

    const auto e = energy_triple(tr.states, m, tr.tau);
    CHECK(value_of(online, "sup_u2") == doctest::Approx(e.sup_u2).epsilon(1e-12));
    CHECK(value_of(online, "int_gradp") == doctest::Approx(e.int_gradp).epsilon(1e-12));
    CHECK(value_of(online, "eps_int_grad2") ==
          doctest::Approx(e.eps_int_grad2).epsilon(1e-12));
    const auto nat = natural_regularity(tr.states, m, tr.tau, spec.mask);
    CHECK(value_of(online, "sup_grad2") == doctest::Approx(nat.sup_grad2).epsilon(1e-12));
    CHECK(value_of(online, "int_gradF2") == doctest::Approx(nat.int_gradF2).epsilon(1e-12));
    CHECK(value_of(online, "higher_integrability_q4") ==
          doctest::Approx(higher_integrability(tr.states, m, tr.tau, spec.mask, 4.0))
              .epsilon(1e-12));
    const auto mom = higher_moments(tr.states, m, tr.tau, 2.0);
    CHECK(value_of(online, "moment_energy_q2") == doctest::Approx(mom.energy_power).epsilon(1e-12));
    CHECK(value_of(online, "moment_sup_uq_q2") == doctest::Approx(mom.sup_uq).epsilon(1e-12));
    CHECK(mom.energy_power ==
          doctest::Approx(std::pow(e.sup_u2 + e.int_gradp, 2.0)).epsilon(1e-12));
  }
}

TEST_CASE("functionals of the zero path vanish") {
  const Grid g(2, 9);
  const std::vector<NodalField> zero(5, NodalField::zeros(g, 1));
  const ModelSpec m = model(1.5);
  const auto e = energy_triple(zero, m, 0.01);
  CHECK(e.sup_u2 == 0.0);
  CHECK(e.int_gradp == 0.0);
  CHECK(e.eps_int_grad2 == 0.0);
  const auto nat = natural_regularity(zero, m, 0.01, SubdomainMask{});
  CHECK(nat.sup_grad2 == 0.0);
  CHECK(nat.int_gradF2 == 0.0);
  CHECK(higher_integrability(zero, m, 0.01, SubdomainMask{}, 3.0) == 0.0);
}

TEST_CASE("a constant-in-time state integrates exactly") {
  const Grid g(2, 11);
  InitialCondition ic;
  const NodalField u = make_initial(g, 1, ic);
  const ModelSpec m = model(3.0);
  const int N = 8;
  const double tau = 0.25;
  const std::vector<NodalField> states(N + 1, u);
  const auto e = energy_triple(states, m, tau);
  CHECK(e.sup_u2 == doctest::Approx(inner(u, u)).epsilon(1e-13));
  const double gp = norm_Lq(grad(u), 3.0, SubdomainMask::full());
  CHECK(e.int_gradp == doctest::Approx(N * tau * gp).epsilon(1e-13));
}

TEST_CASE("energy functionals scale homogeneously for p = 2") {
  const ModelSpec m = model(2.0);
  Trajectory tr = stochastic_path(m, 1);
  const auto base = energy_triple(tr.states, m, tr.tau);
  for (auto& s : tr.states) {
    for (double& v : s.values) v *= 3.0;
  }
  const auto scaled = energy_triple(tr.states, m, tr.tau);
  CHECK(scaled.sup_u2 == doctest::Approx(9.0 * base.sup_u2).epsilon(1e-12));
  CHECK(scaled.int_gradp == doctest::Approx(9.0 * base.int_gradp).epsilon(1e-12));
}

TEST_CASE("mask validation") {
  const Grid g(2, 9);
  FunctionalSpec spec;
  spec.natural = true;
  spec.mask = SubdomainMask::full();
  CHECK_THROWS_AS(PathAccumulator(spec, model(2.0), g, 0.1), DomainError);
  FunctionalSpec ok;
  CHECK_THROWS_AS(PathAccumulator(ok, model(2.0), g, 0.0), DomainError);
  PathAccumulator acc(ok, model(2.0), g, 0.1);
  CHECK_THROWS_AS(acc.observe(1, NodalField::zeros(g, 1)), DomainError);
}

TEST_CASE("moser exponent ladder") {
  const auto l = moser_ladder(2.0, 2, 4);
  CHECK(l.alphas == std::vector<double>{0.0, 2.0, 6.0, 14.0, 30.0});
  CHECK(l.qs == std::vector<double>{2.0, 4.0, 8.0, 16.0, 32.0});
  const auto l3 = moser_ladder(3.0, 3, 1);
  CHECK(l3.alphas[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  for (int k = 1; k < 5; ++k) CHECK(l.alphas[k] > l.alphas[k - 1]);
  CHECK_THROWS_AS(moser_ladder(0.5, 3, 2), DomainError);
  CHECK_THROWS_AS(moser_ladder(1.0, 4, 2), DomainError);
  CHECK_THROWS_AS(moser_ladder(2.0, 2, -1), DomainError);
  CHECK(integrability_warnings(model(2.0)).size() == 1);
  ModelSpec u = model(2.0);
  u.family = Family::Uhlenbeck;
  CHECK(integrability_warnings(u).empty());
}

TEST_CASE("aggregate examples") {
  const auto one = aggregate({record(0, 2.0, 3.0)});
  CHECK(one.at("x").mean == 2.0);
  CHECK_FALSE(one.at("x").variance_defined);
  CHECK(std::isnan(one.at("x").var));
  CHECK(one.at("x").ci_lo == 2.0);
  CHECK(one.at("x").ci_hi == 2.0);

  const auto two = aggregate({record(0, 1.0, 0.0), record(1, 4.0, 0.0)});
  CHECK(two.at("x").var == doctest::Approx(4.5));
  CHECK(two.at("x").mean == doctest::Approx(2.5));
  // t_{0.975, 1} = 12.706
  CHECK(two.at("x").ci_hi - two.at("x").mean ==
        doctest::Approx(12.7062047 * 1.5).epsilon(1e-6));

  CHECK_THROWS_AS(aggregate({}), DomainError);
  CHECK_THROWS_AS(aggregate({record(0, 1, 2), PathRecord{1, {{"x", 1.0}}}}),
                  DomainError);
  CHECK_THROWS_AS(aggregate({record(0, 1, 2), PathRecord{1, {{"x", 1.0}, {"z", 2.0}}}}),
                  DomainError);
}

TEST_CASE("aggregate does not depend on record order") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  std::vector<PathRecord> recs;
  for (int i = 0; i < 57; ++i) recs.push_back(record(i, n(rng), n(rng)));
  const auto a = aggregate(recs);
  std::shuffle(recs.begin(), recs.end(), rng);
  const auto b = aggregate(recs);
  for (std::size_t i = 0; i < a.aggregates.size(); ++i) {
    CHECK(a.aggregates[i].mean == b.aggregates[i].mean);
    CHECK(a.aggregates[i].var == b.aggregates[i].var);
  }
  CHECK(b.paths.front().path_index == 0);
}

TEST_CASE("t intervals cover at the nominal rate") {
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> e(1.0);
  int covered = 0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    std::vector<PathRecord> recs;
    for (int i = 0; i < 50; ++i) recs.push_back(record(i, e(rng), 0.0));
    const auto& x = aggregate(recs).at("x");
    covered += (x.ci_lo <= 1.0 && 1.0 <= x.ci_hi);
  }
  CHECK(double(covered) / trials >= 0.93);
}

TEST_CASE("antithetic pairs are averaged first") {
  const auto r = aggregate({record(0, 1.0, 0.0), record(1, 3.0, 0.0),
                            record(2, 5.0, 0.0), record(3, 7.0, 0.0)},
                           true);
  CHECK(r.at("x").n_paths == 2);
  CHECK(r.at("x").mean == doctest::Approx(4.0));
  CHECK(r.at("x").var == doctest::Approx(8.0));
  // a pair with a missing member contributes its survivor alone
  const auto s = aggregate({record(0, 1.0, 0.0), record(1, 3.0, 0.0),
                            record(3, 9.0, 0.0)},
                           true);
  CHECK(s.at("x").n_paths == 2);
  CHECK(s.at("x").mean == doctest::Approx(5.5));
}
