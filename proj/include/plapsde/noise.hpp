#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plapsde/grid.hpp"

namespace plapsde {

enum class NoiseFamily { Additive, DiagonalMultiplicative, SpatiallyModulated };

std::string to_string(NoiseFamily family);
NoiseFamily parse_noise_family(std::string_view name);

/// Truncated cylindrical noise W = sum_{k<=K} beta_k e_k with coefficients
///   additive:                 g_k(x, xi) = a_k phi_k(x) v_k
///   diagonal multiplicative:  g_k(x, xi) = a_k xi
///   spatially modulated:      g_k(x, xi) = a_k phi_k(x) rho(xi),
///                             rho(xi) = xi / sqrt(1 + |xi|^2 / M^2)
/// where a_k = amplitude * k^(-decay), phi_k are the L^2-normalized
/// tensorized sines ordered by |m|^2 and v_k = e_{(k-1) mod D}.
struct NoiseModel {
  int K = 16;
  NoiseFamily family = NoiseFamily::SpatiallyModulated;
  double decay = 2.0;
  double amplitude = 1.0;
  double M = 10.0;

  void validate() const;
  /// a_k for k = 1..K (index 0 holds a_1).
  std::vector<double> coefficients() const;
};

/// Frequency multi-indices (entries >= 1) of the first K sine modes.
std::vector<std::vector<int>> sine_modes(int d, int K);

/// Brownian increments, row-major n_steps x K.
struct WienerIncrements {
  int n_steps = 0;
  int K = 0;
  double tau = 0.0;
  std::vector<double> increments;

  std::span<const double> row(int step) const {
    return {increments.data() + std::size_t(step) * K, std::size_t(K)};
  }
};

/// Entry (n, k) is sqrt(tau) * N(0,1) keyed by (seed, path_index, n, k).
/// With `negate` set every entry changes sign (antithetic partner path).
WienerIncrements sample_increments(int n_steps, const NoiseModel& model,
                                   double tau, std::uint64_t seed,
                                   std::uint64_t path_index,
                                   bool negate = false);

/// Phi(u) on one grid: caches a_k and phi_k at the nodes.
class NoiseOperator {
 public:
  NoiseOperator(const NoiseModel& model, const Grid& grid, int D);

  const NoiseModel& model() const noexcept { return model_; }

  /// sum_k g_k(x, u(x)) dW_k at every interior node.
  NodalField apply(const NodalField& u, std::span<const double> dW) const;
  void apply_into(const NodalField& u, std::span<const double> dW,
                  NodalField& out) const;

  /// sum_k || g_k(., u) ||^2_{L^2}, the quadratic variation density per
  /// unit time.
  double hilbert_schmidt_sq(const NodalField& u) const;

 private:
  NoiseModel model_;
  Grid grid_;
  int D_;
  std::vector<double> a_;
  std::vector<double> basis_;  // [k][node]
};

NodalField apply_Phi(const NodalField& u, std::span<const double> dW,
                     const NoiseModel& model);

struct GrowthProbe {
  int K = 0;
  double sum_g = 0.0;       ///< sup sum_k |g_k|^2 / (1+|xi|^2)
  double sum_dxi = 0.0;     ///< sup sum_k |grad_xi g_k|^2
  double sum_dx = 0.0;      ///< sup sum_k |grad_x g_k|^2 / (1+|xi|^2)
  double coefficient_series = 0.0;  ///< sum_k a_k^2
};

struct GrowthReport {
  NoiseFamily family{};
  int d = 0;
  int D = 0;
  double tolerance = 0.0;
  std::vector<GrowthProbe> probes;
  bool pass = true;
  std::string failed_condition;  ///< "g", "grad_xi" or "grad_x" on failure
  /// Measured constant c: the largest of the three suprema at the largest K.
  double constant = 0.0;
};

/// Samples (x, xi) and evaluates the three partial sums of the linear growth
/// conditions for every K in K_probe (sorted ascending). A condition fails
/// when its relative increase between the last two probes exceeds
/// `tolerance` (saturation not reached).
GrowthReport verify_growth(const NoiseModel& model, int d, int D,
                           int n_samples, std::vector<int> K_probe,
                           std::uint64_t seed, double tolerance = 0.05);

}  // namespace plapsde
