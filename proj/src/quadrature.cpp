#include "plapsde/quadrature.hpp"

#include <cmath>

#include "plapsde/errors.hpp"

namespace plapsde::quad {

namespace {

struct Panel {
  double a, b, fa, fm, fb, whole;
};

double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double refine(const std::function<double(double)>& f, const Panel& p,
              double tol, int depth) {
  const double m = 0.5 * (p.a + p.b);
  const double lm = 0.5 * (p.a + m);
  const double rm = 0.5 * (m + p.b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(p.a, m, p.fa, flm, p.fm);
  const double right = simpson(m, p.b, p.fm, frm, p.fb);
  const double delta = left + right - p.whole;
  if (std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  if (depth <= 0) {
    throw ConvergenceError("adaptive Simpson: depth exhausted on [" +
                               std::to_string(p.a) + ", " +
                               std::to_string(p.b) + "]",
                           std::abs(delta));
  }
  // Below this the panel can no longer be halved in floating point.
  if (m <= p.a || m >= p.b) {
    return left + right;
  }
  return refine(f, {p.a, m, p.fa, flm, p.fm, left}, 0.5 * tol, depth - 1) +
         refine(f, {m, p.b, p.fm, frm, p.fb, right}, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol, int max_depth) {
  if (!(tol > 0.0)) {
    throw DomainError("adaptive_simpson: tolerance must be positive");
  }
  if (a == b) {
    return 0.0;
  }
  if (b < a) {
    return -adaptive_simpson(f, b, a, tol, max_depth);
  }
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  return refine(f, {a, b, fa, fm, fb, simpson(a, b, fa, fm, fb)}, tol,
                max_depth);
}

double pow1p(double r, double e) {
  if (e == 0.0) {
    return 1.0;
  }
  return std::exp(e * std::log1p(r));
}

double power_moment_integral(double beta, int m, double r) {
  if (m != 1 && m != 2) {
    throw DomainError("power_moment_integral: m must be 1 or 2");
  }
  if (!(r >= 0.0) || !std::isfinite(r)) {
    throw DomainError("power_moment_integral: r must be finite and >= 0");
  }
  if (r == 0.0) {
    return 0.0;
  }
  if (r < 0.1) {
    // sum_k binom(beta, k) r^(k+m+1) / (k+m+1)
    double binom = 1.0;
    double rk = std::pow(r, m + 1);
    double sum = 0.0;
    for (int k = 0; k < 200; ++k) {
      const double term = binom * rk / (k + m + 1);
      sum += term;
      if (std::abs(term) <= 1e-18 * std::abs(sum)) {
        break;
      }
      binom *= (beta - k) / (k + 1);
      rk *= r;
    }
    return sum;
  }
  const double lr = std::log1p(r);
  auto antiderivative = [&](double e) {
    // integral over [1, 1+r] of u^(e-1) du
    if (e == 0.0) {
      return lr;
    }
    return std::expm1(e * lr) / e;
  };
  if (m == 1) {
    // (u - 1) u^beta
    return antiderivative(beta + 2.0) - antiderivative(beta + 1.0);
  }
  // (u - 1)^2 u^beta
  return antiderivative(beta + 3.0) - 2.0 * antiderivative(beta + 2.0) +
         antiderivative(beta + 1.0);
}

}  // namespace plapsde::quad
