#include "plapsde/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "plapsde/errors.hpp"
#include "plapsde/quadrature.hpp"

namespace plapsde {

namespace {

void require_finite(const GradMatrix& m, const char* where) {
  if (!m.all_finite()) {
    throw DomainError(std::string(where) + ": non-finite input");
  }
}

}  // namespace

void ModelSpec::validate() const {
  if (d < 1 || D < 1) {
    throw DomainError("ModelSpec: d and D must be >= 1");
  }
  if (d * D > GradMatrix::kMaxEntries) {
    throw DomainError("ModelSpec: d*D exceeds " +
                      std::to_string(GradMatrix::kMaxEntries));
  }
  if (!std::isfinite(p) || !(p > 1.0)) {
    throw DomainError("ModelSpec: p must be finite and > 1");
  }
  if (!std::isfinite(epsilon) || epsilon < 0.0) {
    throw DomainError("ModelSpec: epsilon must be finite and >= 0");
  }
  if (epsilon == 0.0 && p < 2.0) {
    throw DomainError(
        "ModelSpec: p < 2 requires epsilon > 0 (quadratic regularization)");
  }
  if (!std::isfinite(T) || !(T > 0.0)) {
    throw DomainError("ModelSpec: T must be > 0");
  }
  if (family == Family::Uhlenbeck) {
    check_ellipticity(*this, 2000, 0);
  }
}

std::string ModelSpec::family_name() const {
  if (family == Family::PLaplacian) {
    return "plaplacian";
  }
  return profile == Profile::Power ? "uhlenbeck:power" : "uhlenbeck:saturating";
}

void parse_family(std::string_view name, ModelSpec& model) {
  if (name == "plaplacian") {
    model.family = Family::PLaplacian;
    model.profile = Profile::Power;
  } else if (name == "uhlenbeck:power") {
    model.family = Family::Uhlenbeck;
    model.profile = Profile::Power;
  } else if (name == "uhlenbeck:saturating" || name == "uhlenbeck") {
    model.family = Family::Uhlenbeck;
    model.profile = Profile::Saturating;
  } else {
    throw DomainError("unknown operator family '" + std::string(name) + "'");
  }
}

GradMatrix::GradMatrix(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 1 || cols < 1 || rows * cols > kMaxEntries) {
    throw DomainError("GradMatrix: unsupported shape");
  }
}

GradMatrix::GradMatrix(int rows, int cols, std::span<const double> entries)
    : GradMatrix(rows, cols) {
  if (entries.size() != std::size_t(size())) {
    throw DomainError("GradMatrix: entry count does not match shape");
  }
  std::copy(entries.begin(), entries.end(), data_.begin());
}

double GradMatrix::norm() const {
  double s = 0.0;
  for (double v : entries()) {
    s += v * v;
  }
  return std::sqrt(s);
}

bool GradMatrix::all_finite() const {
  return std::all_of(entries().begin(), entries().end(),
                     [](double v) { return std::isfinite(v); });
}

double frobenius_dot(const GradMatrix& a, const GradMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DomainError("frobenius_dot: shape mismatch");
  }
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    s += a.entries()[i] * b.entries()[i];
  }
  return s;
}

Constitutive::Constitutive(const ModelSpec& model)
    : p_(model.p),
      profile_(model.family == Family::PLaplacian ? Profile::Power
                                                  : model.profile) {}

double Constitutive::nu(double s) const {
  const double base = quad::pow1p(s, p_ - 2.0);
  if (profile_ == Profile::Power) {
    return base;
  }
  return base * (1.0 + s / (1.0 + s));
}

double Constitutive::dnu(double s) const {
  const double b3 = quad::pow1p(s, p_ - 3.0);
  if (profile_ == Profile::Power) {
    return (p_ - 2.0) * b3;
  }
  // d/ds [(1+s)^(p-2) + s (1+s)^(p-3)]
  return (p_ - 1.0) * b3 + (p_ - 3.0) * s * quad::pow1p(s, p_ - 4.0);
}

double Constitutive::potential(double r) const {
  const double base = quad::power_moment_integral(p_ - 2.0, 1, r);
  if (profile_ == Profile::Power) {
    return base;
  }
  return base + quad::power_moment_integral(p_ - 3.0, 2, r);
}

GradMatrix eval_S(const GradMatrix& xi, const ModelSpec& model) {
  require_finite(xi, "eval_S");
  const Constitutive law(model);
  const double nu = law.nu(xi.norm());
  GradMatrix out(xi.rows(), xi.cols());
  for (int i = 0; i < xi.size(); ++i) {
    out.entries()[i] = nu * xi.entries()[i];
  }
  return out;
}

GradMatrix eval_F(const GradMatrix& xi, double p) {
  require_finite(xi, "eval_F");
  if (!(p > 1.0)) {
    throw DomainError("eval_F: p must be > 1");
  }
  const double w = quad::pow1p(xi.norm(), 0.5 * (p - 2.0));
  GradMatrix out(xi.rows(), xi.cols());
  for (int i = 0; i < xi.size(); ++i) {
    out.entries()[i] = w * xi.entries()[i];
  }
  return out;
}

double eval_DS(const GradMatrix& xi, const GradMatrix& zeta,
               const ModelSpec& model) {
  require_finite(xi, "eval_DS");
  require_finite(zeta, "eval_DS");
  const Constitutive law(model);
  const double s = xi.norm();
  const double zz = frobenius_dot(zeta, zeta);
  double value = law.nu(s) * zz;
  // The radial term vanishes in the limit s -> 0.
  if (s > 0.0) {
    const double xz = frobenius_dot(xi, zeta);
    value += law.dnu(s) * xz * xz / s;
  }
  return value;
}

double eval_potential(const GradMatrix& xi, const ModelSpec& model) {
  require_finite(xi, "eval_potential");
  return Constitutive(model).potential(xi.norm());
}

EllipticityEstimate check_ellipticity(const ModelSpec& model, int n_samples,
                                      std::uint64_t rng_seed) {
  if (n_samples < 1) {
    throw DomainError("check_ellipticity: n_samples must be >= 1");
  }
  const Constitutive law(model);
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> log_radius(-8.0, 8.0);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);

  const int n = model.d * model.D;
  std::array<double, GradMatrix::kMaxEntries> dir{};
  std::array<double, GradMatrix::kMaxEntries> other{};

  EllipticityEstimate est{std::numeric_limits<double>::infinity(),
                          -std::numeric_limits<double>::infinity()};
  auto record = [&](double ratio) {
    est.lambda_hat = std::min(est.lambda_hat, ratio);
    est.Lambda_hat = std::max(est.Lambda_hat, ratio);
  };
  // xi = 0: DS(0)(zeta, zeta) = nu(0) |zeta|^2.
  record(law.nu(0.0));

  for (int k = 0; k < n_samples; ++k) {
    double dn = 0.0;
    for (int i = 0; i < n; ++i) {
      dir[i] = normal(rng);
      dn += dir[i] * dir[i];
    }
    dn = std::sqrt(dn);
    for (int i = 0; i < n; ++i) {
      dir[i] /= dn;
    }
    // zeta = cos(theta) xi_hat + sin(theta) w with w orthogonal to xi_hat;
    // with a single entry w does not exist and zeta is parallel.
    double c = std::cos(angle(rng));
    double proj = 0.0;
    for (int i = 0; i < n; ++i) {
      other[i] = normal(rng);
      proj += other[i] * dir[i];
    }
    double on = 0.0;
    for (int i = 0; i < n; ++i) {
      other[i] -= proj * dir[i];
      on += other[i] * other[i];
    }
    on = std::sqrt(on);
    if (n == 1 || on == 0.0) {
      c = 1.0;
    }
    const double sn = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double s = std::pow(10.0, log_radius(rng));
    GradMatrix xi(model.d, model.D);
    GradMatrix zeta(model.d, model.D);
    for (int i = 0; i < n; ++i) {
      xi.entries()[i] = s * dir[i];
      zeta.entries()[i] = c * dir[i] + (on > 0.0 ? sn * other[i] / on : 0.0);
    }
    const double zz = frobenius_dot(zeta, zeta);
    record(eval_DS(xi, zeta, model) / (quad::pow1p(s, model.p - 2.0) * zz));
  }
  if (!(est.lambda_hat > 0.0)) {
    throw ModelRejected(
        "ellipticity check failed: sampled lower constant " +
        std::to_string(est.lambda_hat) + " <= 0");
  }
  return est;
}

}  // namespace plapsde
