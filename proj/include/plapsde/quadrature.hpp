#pragma once

#include <functional>

namespace plapsde::quad {

/// Adaptive Simpson quadrature of f on [a, b] to absolute tolerance `tol`.
/// Throws ConvergenceError when the recursion depth is exhausted before the
/// local error estimate drops below its share of the tolerance.
double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol, int max_depth = 50);

/// (1+r)^e computed as exp(e * log1p(r)); valid for r > -1 and any magnitude.
double pow1p(double r, double e);

/// I(beta, m, r) = integral over [0, r] of (1+s)^beta * s^m ds for m in {1, 2}.
/// Closed form via the substitution u = 1+s; a power series is used for
/// small r where the closed form cancels.
double power_moment_integral(double beta, int m, double r);

}  // namespace plapsde::quad
