#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "plapsde/estimators.hpp"
#include "plapsde/grid.hpp"
#include "plapsde/model.hpp"
#include "plapsde/noise.hpp"

namespace plapsde {

struct SolverConfig {
  double tau = 1e-3;
  int n_steps = 1000;
  double newton_tol = 1e-10;
  int newton_max_iter = 50;
  /// Backtracking factor of the line search.
  double damping = 0.5;
  int cg_max_iter = 2000;

  /// Checks ranges and tau * n_steps = T within 1e-12 relative.
  void validate(const ModelSpec& model) const;

  /// tau = T / n_steps for the given step count.
  static SolverConfig for_horizon(double T, int n_steps);
};

struct StepStats {
  int newton_iterations = 0;
  int cg_iterations = 0;
  int gradient_fallbacks = 0;
  double residual = 0.0;
};

/// One semi-implicit step: minimizes
///   J(v) = 1/2 |v - b|^2 + tau sum_cells phi(grad v) hx^d
///          + (eps tau / 2) |grad v|^2
/// by damped Newton with a diagonally preconditioned CG inner solve. The
/// workspace is reused across calls, so one stepper serves one path.
class ImplicitStepper {
 public:
  ImplicitStepper(const ModelSpec& model, const SolverConfig& cfg,
                  const Grid& grid, int D);

  /// Returns argmin J for b = u_prev + increment, starting from b.
  NodalField solve(const NodalField& b, StepStats* stats = nullptr);

  /// J(v) for the right-hand side b.
  double energy(const NodalField& v, const NodalField& b) const;
  /// v - b - tau div_adjoint(S(grad v)) - eps tau div_adjoint(grad v).
  NodalField residual(const NodalField& v, const NodalField& b) const;
  /// sqrt(sum r^2 hx^d)
  double residual_norm(const NodalField& v, const NodalField& b) const;

 private:
  void linearize(const std::vector<double>& v);
  void hessian_apply(const std::vector<double>& w,
                     std::vector<double>& out) const;
  void gradient(const std::vector<double>& v, const std::vector<double>& b,
                std::vector<double>& r) const;
  double energy_raw(const std::vector<double>& v,
                    const std::vector<double>& b) const;
  double weighted_norm(const std::vector<double>& r) const;
  int conjugate_gradient(const std::vector<double>& rhs, double rel_tol,
                         std::vector<double>& x, bool& converged);

  ModelSpec model_;
  SolverConfig cfg_;
  Grid grid_;
  int D_;
  Constitutive law_;

  // Per-cell linearization: nu(s) and nu'(s)/s at the current iterate.
  std::vector<double> cell_grad_;
  std::vector<double> cell_nu_;
  std::vector<double> cell_coef_;
  std::vector<double> diag_;
  // CG scratch.
  std::vector<double> cg_r_, cg_z_, cg_p_, cg_hp_;
};

NodalField implicit_step(const NodalField& u_prev,
                         const NodalField& noise_term, const ModelSpec& model,
                         const SolverConfig& cfg);

/// Deterministic forcing f(t) added as tau * f(t_{n+1}) to the step input.
using ForcingHook = std::function<void(double t, NodalField& f)>;

struct RunOptions {
  ForcingHook forcing;
  bool store_trajectory = false;
  /// Antithetic partner: flips the sign of every Brownian increment.
  bool negate_noise = false;
};

/// States u_0..u_N together with the inputs needed to re-evaluate the
/// discrete weak identity.
struct Trajectory {
  double tau = 0.0;
  std::vector<NodalField> states;
  WienerIncrements increments;
  /// tau * f(t_{n+1}) per step when a forcing hook was active.
  std::vector<NodalField> forcing;
};

struct PathResult {
  std::uint64_t path_index = 0;
  FunctionalValues values;
  StepStats totals;
  std::optional<Trajectory> trajectory;
};

/// Advances u_{n+1} = argmin J with b = u_n + Phi(u_n) dW_n (+ tau f) for
/// n = 0..n_steps-1 and feeds every state to the accumulators.
PathResult run_path(const NodalField& u0, const ModelSpec& model,
                    const NoiseModel& noise, const SolverConfig& cfg,
                    std::uint64_t seed, std::uint64_t path_index,
                    const FunctionalSpec& estimators,
                    const RunOptions& options = {});

/// max over test fields and checkpoints n of
///   |<u_n - u_0, phi> + sum_{m<n} tau <S(grad u_{m+1}), grad phi>
///    + eps tau <grad u_{m+1}, grad phi> - sum_{m<n} <Phi(u_m) dW_m + tau f, phi>|
/// divided by ||phi||_{L^2}.
double weak_form_residual(const Trajectory& path,
                          const std::vector<NodalField>& test_fields,
                          const ModelSpec& model, const NoiseModel& noise);

/// Initial data.
enum class InitialKind { Sine, Bump, Random };
struct InitialCondition {
  InitialKind kind = InitialKind::Sine;
  double amplitude = 1.0;
  std::uint64_t seed = 0;
  /// number of random sine modes for InitialKind::Random
  int modes = 8;
};
InitialKind parse_initial_kind(std::string_view name);
std::string to_string(InitialKind kind);
NodalField make_initial(const Grid& grid, int D, const InitialCondition& ic);

}  // namespace plapsde
