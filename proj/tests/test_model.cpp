#include <doctest.h>

#include <cmath>
#include <random>

#include "plapsde/errors.hpp"
#include "plapsde/model.hpp"

using namespace plapsde;

namespace {

ModelSpec plap(double p, int d = 2, int D = 1) {
  ModelSpec m;
  m.d = d;
  m.D = D;
  m.p = p;
  m.epsilon = p < 2.0 ? 1e-3 : 0.0;
  return m;
}

ModelSpec saturating(double p) {
  ModelSpec m = plap(p);
  m.family = Family::Uhlenbeck;
  m.profile = Profile::Saturating;
  return m;
}

GradMatrix random_matrix(std::mt19937_64& rng, int d, int D, double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  GradMatrix m(d, D);
  for (double& x : m.entries()) {
    x = scale * n(rng);
  }
  return m;
}

GradMatrix axpy(const GradMatrix& x, double a, const GradMatrix& y) {
  GradMatrix out = x;
  for (int i = 0; i < x.size(); ++i) {
    out.entries()[i] += a * y.entries()[i];
  }
  return out;
}

GradMatrix unit_xi() {
  GradMatrix xi(2, 1);
  xi(0, 0) = 0.6;
  xi(1, 0) = 0.8;
  return xi;
}

}  // namespace

TEST_CASE("eval_S examples") {
  std::mt19937_64 rng(1);
  const GradMatrix xi = random_matrix(rng, 2, 3, 2.0);
  const GradMatrix s2 = eval_S(xi, plap(2.0, 2, 3));
  for (int i = 0; i < xi.size(); ++i) {
    CHECK(s2.entries()[i] == xi.entries()[i]);
  }
  const GradMatrix zero(2, 1);
  CHECK(eval_S(zero, plap(3.0)).norm() == 0.0);
  CHECK(eval_S(zero, saturating(3.0)).norm() == 0.0);
  const GradMatrix s3 = eval_S(unit_xi(), plap(3.0));
  CHECK(s3(0, 0) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(s3(1, 0) == doctest::Approx(1.6).epsilon(1e-15));
}

TEST_CASE("eval_F examples") {
  const GradMatrix xi = unit_xi();
  const GradMatrix f2 = eval_F(xi, 2.0);
  CHECK(f2(0, 0) == xi(0, 0));
  CHECK(eval_F(GradMatrix(2, 1), 3.0).norm() == 0.0);
  const GradMatrix f4 = eval_F(xi, 4.0);
  CHECK(f4(0, 0) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(f4(1, 0) == doctest::Approx(1.6).epsilon(1e-15));
}

TEST_CASE("eval_DS examples and finite-difference oracle") {
  std::mt19937_64 rng(2);
  const GradMatrix xi = random_matrix(rng, 2, 2, 1.5);
  const GradMatrix zeta = random_matrix(rng, 2, 2, 1.0);
  const double z2 = frobenius_dot(zeta, zeta);
  CHECK(eval_DS(xi, zeta, plap(2.0, 2, 2)) == doctest::Approx(z2));
  for (double p : {1.5, 3.0, 4.0}) {
    CHECK(eval_DS(GradMatrix(2, 2), zeta, plap(p, 2, 2)) ==
          doctest::Approx(z2).epsilon(1e-15));
  }
  // |xi| = 1, zeta = xi, p = 3: nu = 2, nu' = 1, so 2 + 1 = 3.
  const GradMatrix u = unit_xi();
  const double ds = eval_DS(u, u, plap(3.0));
  CHECK(ds == doctest::Approx(3.0).epsilon(1e-14));
  const double h = 1e-5;
  const double fd = frobenius_dot(
      axpy(eval_S(axpy(u, h, u), plap(3.0)), -1.0,
           eval_S(axpy(u, -h, u), plap(3.0))),
      u) / (2.0 * h);
  CHECK(fd == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("eval_potential examples") {
  const GradMatrix u = unit_xi();
  CHECK(eval_potential(u, plap(2.0)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(eval_potential(GradMatrix(2, 1), plap(3.0)) == 0.0);
  CHECK(eval_potential(u, plap(3.0)) == doctest::Approx(5.0 / 6.0).epsilon(1e-14));
}

TEST_CASE("potential gradient and second variation match S and DS") {
  std::mt19937_64 rng(3);
  for (const ModelSpec& m :
       {plap(1.5, 2, 2), plap(2.0, 2, 2), plap(3.0, 2, 2), saturating(1.5),
        saturating(3.0)}) {
    const int D = m.D;
    double worst_grad = 0.0;
    double worst_form = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const GradMatrix xi =
          random_matrix(rng, 2, D, std::exp(std::uniform_real_distribution<>(
                                       -3.0, 3.0)(rng)));
      const GradMatrix S = eval_S(xi, m);
      const double scale = std::max(1.0, xi.norm());
      const double h = 1e-6 * scale;
      for (int i = 0; i < xi.size(); ++i) {
        GradMatrix e(2, D);
        e.entries()[i] = 1.0;
        const double fd = (eval_potential(axpy(xi, h, e), m) -
                           eval_potential(axpy(xi, -h, e), m)) /
                          (2.0 * h);
        worst_grad = std::max(worst_grad, std::abs(fd - S.entries()[i]) /
                                              std::max(1.0, S.norm()));
      }
      const GradMatrix zeta = random_matrix(rng, 2, D, 1.0);
      const double k = 1e-4 * scale;
      const double second = (eval_potential(axpy(xi, k, zeta), m) -
                             2.0 * eval_potential(xi, m) +
                             eval_potential(axpy(xi, -k, zeta), m)) /
                            (k * k);
      const double ds = eval_DS(xi, zeta, m);
      worst_form = std::max(worst_form,
                            std::abs(second - ds) / std::max(1.0, std::abs(ds)));
    }
    CAPTURE(m.p);
    CHECK(worst_grad <= 1e-6);
    CHECK(worst_form <= 1e-5);
  }
}

TEST_CASE("S is monotone on random pairs") {
  std::mt19937_64 rng(4);
  for (double p : {1.5, 2.0, 3.0}) {
    const ModelSpec m = plap(p, 2, 2);
    double worst = 0.0;
    for (int trial = 0; trial < 100000; ++trial) {
      const double scale =
          std::exp(std::uniform_real_distribution<>(-4.0, 4.0)(rng));
      const GradMatrix a = random_matrix(rng, 2, 2, scale);
      const GradMatrix b = random_matrix(rng, 2, 2, scale);
      const double gap = frobenius_dot(axpy(eval_S(a, m), -1.0, eval_S(b, m)),
                                       axpy(a, -1.0, b));
      worst = std::min(worst, gap);
    }
    CHECK(worst >= -1e-12);
  }
}

TEST_CASE("check_ellipticity bounds") {
  const auto e2 = check_ellipticity(plap(2.0), 2000, 0);
  CHECK(e2.lambda_hat == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(e2.Lambda_hat == doctest::Approx(1.0).epsilon(1e-15));
  const auto e3 = check_ellipticity(plap(3.0, 3, 2), 20000, 1);
  CHECK(e3.lambda_hat >= 1.0 - 1e-9);
  CHECK(e3.Lambda_hat <= 2.0 + 1e-9);
  CHECK(e3.Lambda_hat > 1.9);
  const auto e15 = check_ellipticity(plap(1.5), 20000, 2);
  CHECK(e15.lambda_hat >= 0.5 - 1e-9);
  CHECK(e15.lambda_hat < 0.6);
  CHECK(e15.Lambda_hat <= 1.5 + 1e-9);
  const auto es = check_ellipticity(saturating(3.0), 20000, 3);
  CHECK(es.lambda_hat > 0.0);
}

TEST_CASE("ModelSpec validation") {
  ModelSpec m = plap(1.5);
  m.epsilon = 0.0;
  CHECK_THROWS_AS(m.validate(), DomainError);
  m = plap(1.0);
  CHECK_THROWS_AS(m.validate(), DomainError);
  m = plap(2.0, 4, 5);
  CHECK_THROWS_AS(m.validate(), DomainError);
  CHECK_NOTHROW(saturating(1.5).validate());
  CHECK_NOTHROW(plap(2.0).validate());

  for (const char* name : {"plaplacian", "uhlenbeck:power", "uhlenbeck:saturating"}) {
    ModelSpec x;
    parse_family(name, x);
    CHECK(x.family_name() == name);
  }
  ModelSpec x;
  CHECK_THROWS_AS(parse_family("nope", x), DomainError);
}

TEST_CASE("large gradients stay finite") {
  GradMatrix xi(2, 1);
  xi(0, 0) = 1e12;
  xi(1, 0) = -3e11;
  for (double p : {1.5, 3.0, 4.0}) {
    CHECK(eval_S(xi, plap(p)).all_finite());
    CHECK(eval_F(xi, p).all_finite());
    CHECK(std::isfinite(eval_potential(xi, plap(p))));
    CHECK(std::isfinite(eval_DS(xi, xi, plap(p))));
  }
}
