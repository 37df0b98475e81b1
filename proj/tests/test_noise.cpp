#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "plapsde/errors.hpp"
#include "plapsde/noise.hpp"

using namespace plapsde;

namespace {

NoiseModel make(NoiseFamily f, int K, double decay = 2.0, double amp = 1.0) {
  NoiseModel m;
  m.family = f;
  m.K = K;
  m.decay = decay;
  m.amplitude = amp;
  return m;
}

NodalField random_field(const Grid& g, int D, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  NodalField u = NodalField::zeros(g, D);
  for (double& v : u.values) v = n(rng);
  return u;
}

double l2(const NodalField& u) { return std::sqrt(inner(u, u)); }

}  // namespace

TEST_CASE("sine modes are ordered by |m|^2") {
  const auto m = sine_modes(2, 6);
  REQUIRE(m.size() == 6);
  CHECK(m[0] == std::vector<int>{1, 1});
  CHECK(m[1] == std::vector<int>{1, 2});
  CHECK(m[2] == std::vector<int>{2, 1});
  CHECK(m[3] == std::vector<int>{2, 2});
  const auto m1 = sine_modes(1, 4);
  CHECK(m1[3] == std::vector<int>{4});
}

TEST_CASE("sample_increments") {
  const NoiseModel none = make(NoiseFamily::Additive, 0);
  const auto empty = sample_increments(10, none, 0.1, 1, 0);
  CHECK(empty.increments.empty());

  const NoiseModel one = make(NoiseFamily::Additive, 1);
  const double tau = 1e-2;
  const int n = 100000;
  const auto dW = sample_increments(n, one, tau, 42, 3);
  double mean = 0.0;
  double var = 0.0;
  for (double v : dW.increments) mean += v;
  mean /= n;
  for (double v : dW.increments) var += (v - mean) * (v - mean);
  var /= n - 1;
  CHECK(std::abs(mean) <= 4.0 * std::sqrt(tau / n));
  CHECK(std::abs(var / tau - 1.0) <= 4.0 * std::sqrt(2.0 / n));

  const NoiseModel m = make(NoiseFamily::SpatiallyModulated, 16);
  const auto a = sample_increments(50, m, tau, 7, 9);
  const auto b = sample_increments(50, m, tau, 7, 9);
  CHECK(a.increments == b.increments);
  const auto c = sample_increments(50, m, tau, 7, 9, true);
  for (std::size_t i = 0; i < a.increments.size(); ++i) {
    CHECK(c.increments[i] == -a.increments[i]);
  }
  // K is a truncation: the first modes do not change when K grows.
  const auto wide = sample_increments(50, make(NoiseFamily::SpatiallyModulated, 32),
                                      tau, 7, 9);
  CHECK(wide.row(3)[5] == a.row(3)[5]);
}

TEST_CASE("apply_Phi examples") {
  const Grid g(2, 7);
  const NodalField u = random_field(g, 2, 1);
  std::vector<double> zero(8, 0.0);
  for (auto f : {NoiseFamily::Additive, NoiseFamily::DiagonalMultiplicative,
                 NoiseFamily::SpatiallyModulated}) {
    const NodalField r = apply_Phi(u, zero, make(f, 8));
    for (double v : r.values) CHECK(v == 0.0);
  }

  std::vector<double> dW{0.3, -0.1, 0.7, 0.2, -0.4, 0.5, 0.1, -0.2};
  const NoiseModel add = make(NoiseFamily::Additive, 8);
  const NodalField a1 = apply_Phi(u, dW, add);
  const NodalField a2 = apply_Phi(random_field(g, 2, 2), dW, add);
  CHECK(a1.values == a2.values);

  const double c0 = 0.8;
  const double b = -1.3;
  const NodalField m = apply_Phi(u, std::vector<double>{b},
                                 make(NoiseFamily::DiagonalMultiplicative, 1,
                                      2.0, c0));
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    CHECK(m.values[i] == doctest::Approx(c0 * b * u.values[i]).epsilon(1e-15));
  }
}

TEST_CASE("verify_growth") {
  const auto zero = verify_growth(make(NoiseFamily::SpatiallyModulated, 0), 2, 1,
                                  50, {0}, 1);
  CHECK(zero.probes[0].sum_g == 0.0);
  CHECK(zero.probes[0].sum_dxi == 0.0);
  CHECK(zero.probes[0].sum_dx == 0.0);

  const auto ok = verify_growth(make(NoiseFamily::SpatiallyModulated, 16), 2, 1,
                                500, {16, 64, 256}, 2);
  double series = 0.0;
  for (int k = 1; k <= 256; ++k) series += std::pow(k, -4.0);
  CHECK(ok.probes.back().coefficient_series ==
        doctest::Approx(series).epsilon(1e-6));
  CHECK(ok.probes.back().coefficient_series <=
        std::pow(std::numbers::pi, 4) / 90.0);
  CHECK(ok.pass);

  const auto bad = verify_growth(make(NoiseFamily::SpatiallyModulated, 16, 1.0),
                                 2, 1, 500, {16, 64, 256}, 2);
  CHECK_FALSE(bad.pass);
  CHECK(bad.failed_condition == "grad_x");

  for (auto f : {NoiseFamily::Additive, NoiseFamily::DiagonalMultiplicative}) {
    CHECK(verify_growth(make(f, 16), 2, 2, 500, {16, 64, 256}, 3).pass);
  }
}

TEST_CASE("linear growth is realized with the measured constant") {
  const Grid g(2, 9);
  for (auto f : {NoiseFamily::Additive, NoiseFamily::DiagonalMultiplicative,
                 NoiseFamily::SpatiallyModulated}) {
    const NoiseModel m = make(f, 16);
    const double c = verify_growth(m, 2, 1, 2000, {16}, 4).constant;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      NodalField u = random_field(g, 1, 100 + trial);
      for (double& v : u.values) v *= std::pow(10.0, trial % 5 - 2);
      std::vector<double> dW(16);
      double dw2 = 0.0;
      for (double& v : dW) {
        v = n(rng);
        dw2 += v * v;
      }
      const double lhs = l2(apply_Phi(u, dW, m));
      CHECK(lhs <= 1.05 * std::sqrt(c) * (1.0 + l2(u)) * std::sqrt(dw2));
    }
  }
}

TEST_CASE("hilbert_schmidt_sq matches the mode sum") {
  const Grid g(2, 11);
  const NodalField u = random_field(g, 1, 6);
  const NoiseModel m = make(NoiseFamily::SpatiallyModulated, 8);
  const NoiseOperator op(m, g, 1);
  double direct = 0.0;
  for (int k = 0; k < 8; ++k) {
    std::vector<double> e(8, 0.0);
    e[k] = 1.0;
    const NodalField gk = op.apply(u, e);
    direct += inner(gk, gk);
  }
  CHECK(op.hilbert_schmidt_sq(u) == doctest::Approx(direct).epsilon(1e-13));
}

TEST_CASE("noise model validation") {
  CHECK_THROWS_AS(make(NoiseFamily::Additive, -1).validate(), DomainError);
  CHECK_THROWS_AS(make(NoiseFamily::Additive, 4, 0.0).validate(), DomainError);
  CHECK_THROWS_AS(parse_noise_family("white"), DomainError);
  CHECK(parse_noise_family(to_string(NoiseFamily::SpatiallyModulated)) ==
        NoiseFamily::SpatiallyModulated);
}
