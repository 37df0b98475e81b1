#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "plapsde/grid.hpp"
#include "plapsde/model.hpp"

namespace plapsde {

/// Which functionals a path accumulates.
struct FunctionalSpec {
  /// sup_u2, int_gradp, eps_int_grad2
  bool energy = true;
  /// sup_grad2, int_gradF2 over the mask
  bool natural = false;
  /// higher_integrability_q<q> over the mask, one per entry
  std::vector<double> integrability_q;
  /// moment_energy_q<q> and moment_sup_uq_q<q>, one pair per entry
  std::vector<double> moment_q;
  SubdomainMask mask;

  /// Ordered functional ids produced by this spec.
  std::vector<std::string> ids() const;
};

/// Formats q for use in a functional id ("4", "2.5").
std::string format_q(double q);

using FunctionalValues = std::vector<std::pair<std::string, double>>;

/// Streaming evaluation of the regularity functionals along one path.
/// observe() must be called for step 0 (the initial datum) and then once per
/// accepted step. Suprema run over all observed states including t = 0;
/// time integrals are right-endpoint sums tau * sum_{n>=1}, matching the
/// implicit drift.
class PathAccumulator {
 public:
  PathAccumulator(FunctionalSpec spec, const ModelSpec& model,
                  const Grid& grid, double tau);

  void observe(int step, const NodalField& u);
  FunctionalValues values() const;

  const FunctionalSpec& spec() const noexcept { return spec_; }

 private:
  FunctionalSpec spec_;
  ModelSpec model_;
  double tau_;
  std::vector<double> cell_w_;
  std::vector<double> node_w_;
  std::vector<double> full_cells_;
  std::vector<double> full_nodes_;
  int observed_ = 0;

  double sup_u2_ = 0.0;
  double int_gradp_ = 0.0;
  double int_grad2_ = 0.0;
  double sup_grad2_ = 0.0;
  double int_gradF2_ = 0.0;
  std::vector<double> int_gradq_;
  std::vector<double> sup_uq_;
};

struct EnergyTriple {
  double sup_u2 = 0.0;
  double int_gradp = 0.0;
  double eps_int_grad2 = 0.0;
};

struct NaturalRegularity {
  double sup_grad2 = 0.0;
  double int_gradF2 = 0.0;
};

struct HigherMoments {
  double energy_power = 0.0;  ///< (sup_u2 + int_gradp)^q
  double sup_uq = 0.0;        ///< sup_n ||u_n||_{L^q}^q
};

/// Stored-trajectory evaluation (states u_0..u_N at spacing tau).
EnergyTriple energy_triple(const std::vector<NodalField>& states,
                           const ModelSpec& model, double tau);
NaturalRegularity natural_regularity(const std::vector<NodalField>& states,
                                     const ModelSpec& model, double tau,
                                     const SubdomainMask& mask);
/// tau * sum_n ||grad u_n||^q over the mask. See integrability_warnings()
/// for the hypothesis guard.
double higher_integrability(const std::vector<NodalField>& states,
                            const ModelSpec& model, double tau,
                            const SubdomainMask& mask, double q);
HigherMoments higher_moments(const std::vector<NodalField>& states,
                             const ModelSpec& model, double tau, double q);

/// Hypothesis guard for the higher-integrability functional: empty when the
/// model has Uhlenbeck structure and p > 2 - 4/d.
std::vector<std::string> integrability_warnings(const ModelSpec& model);

/// Exponent ladder alpha_0 = 0, alpha_{k+1} = omega(alpha_k) - p with
/// omega(a) = (p + a)(1 + (2/d)(a + 2)/(a + p)); qs[k] = p + alphas[k].
struct MoserLadder {
  double p = 0.0;
  int d = 0;
  std::vector<double> alphas;
  std::vector<double> qs;
};

double moser_omega(double alpha, double p, int d);
/// Throws DomainError when p <= 2 - 4/d or k_max < 0.
MoserLadder moser_ladder(double p, int d, int k_max);

struct PathRecord {
  std::uint64_t path_index = 0;
  FunctionalValues values;
};

struct Aggregate {
  std::string id;
  double mean = 0.0;
  double var = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  int n_paths = 0;
  /// false for a single sample; var/se are NaN then and the CI collapses.
  bool variance_defined = false;
};

struct FunctionalReport {
  std::vector<PathRecord> paths;
  std::vector<Aggregate> aggregates;
  nlohmann::json metadata = nlohmann::json::object();

  const Aggregate& at(const std::string& id) const;
};

/// Monte Carlo aggregation: per functional mean, sample variance, standard
/// error and a two-sided 95% t-interval with n-1 degrees of freedom. Paths
/// are reduced in path_index order, so the result does not depend on the
/// order of `paths`. With `antithetic` set, consecutive index pairs
/// (2j, 2j+1) are averaged first and the pair means are the samples.
FunctionalReport aggregate(std::vector<PathRecord> paths,
                           bool antithetic = false);

}  // namespace plapsde
