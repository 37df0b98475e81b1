#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace plapsde {

enum class Family { PLaplacian, Uhlenbeck };

/// Registry of radial profiles nu for S(xi) = nu(|xi|) xi.
///   Power:      nu(s) = (1+s)^(p-2)             (the p-Laplacian profile)
///   Saturating: nu(s) = (1+s)^(p-2) (1 + s/(1+s)), bounded by 2 (1+s)^(p-2)
enum class Profile { Power, Saturating };

struct ModelSpec {
  int d = 2;
  int D = 1;
  double p = 2.0;
  Family family = Family::PLaplacian;
  Profile profile = Profile::Power;
  double epsilon = 0.0;
  double T = 1.0;

  /// Throws DomainError on a malformed spec and ModelRejected when an
  /// Uhlenbeck profile fails the sampled ellipticity check.
  void validate() const;

  /// "plaplacian", "uhlenbeck:power" or "uhlenbeck:saturating".
  std::string family_name() const;
};

/// Parses the names produced by ModelSpec::family_name().
void parse_family(std::string_view name, ModelSpec& model);

/// Dense d x D matrix; row index is the spatial direction, column the
/// component. Capacity is bounded so the type stays allocation free.
class GradMatrix {
 public:
  static constexpr int kMaxEntries = 16;

  GradMatrix() = default;
  GradMatrix(int rows, int cols);
  GradMatrix(int rows, int cols, std::span<const double> entries);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int size() const noexcept { return rows_ * cols_; }

  double& operator()(int r, int c) { return data_[r * cols_ + c]; }
  double operator()(int r, int c) const { return data_[r * cols_ + c]; }

  std::span<double> entries() { return {data_.data(), std::size_t(size())}; }
  std::span<const double> entries() const {
    return {data_.data(), std::size_t(size())};
  }

  double norm() const;
  bool all_finite() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::array<double, kMaxEntries> data_{};
};

double frobenius_dot(const GradMatrix& a, const GradMatrix& b);

/// Radial data of the constitutive law for one ModelSpec. The hot loops of
/// the solver go through this instead of the GradMatrix API.
class Constitutive {
 public:
  explicit Constitutive(const ModelSpec& model);

  double p() const noexcept { return p_; }

  /// nu(s)
  double nu(double s) const;
  /// nu'(s)
  double dnu(double s) const;
  /// phi(r) = integral over [0, r] of nu(s) s ds
  double potential(double r) const;

 private:
  double p_;
  Profile profile_;
};

GradMatrix eval_S(const GradMatrix& xi, const ModelSpec& model);
GradMatrix eval_F(const GradMatrix& xi, double p);
double eval_DS(const GradMatrix& xi, const GradMatrix& zeta,
               const ModelSpec& model);
double eval_potential(const GradMatrix& xi, const ModelSpec& model);

struct EllipticityEstimate {
  double lambda_hat = 0.0;
  double Lambda_hat = 0.0;
};

/// Samples (xi, zeta) with |xi| log-uniform on [1e-8, 1e8] (plus xi = 0) and
/// returns the extreme values of DS(xi)(zeta, zeta) / ((1+|xi|)^(p-2)|zeta|^2).
/// Throws ModelRejected when lambda_hat <= 0.
EllipticityEstimate check_ellipticity(const ModelSpec& model, int n_samples,
                                      std::uint64_t rng_seed);

}  // namespace plapsde
