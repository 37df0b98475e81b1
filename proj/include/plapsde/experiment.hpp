#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "plapsde/estimators.hpp"
#include "plapsde/hl.hpp"
#include "plapsde/model.hpp"
#include "plapsde/noise.hpp"
#include "plapsde/solver.hpp"

namespace plapsde {

inline constexpr int kSchemaVersion = 1;
/// Environment variable holding the worker count.
inline constexpr const char* kWorkersEnv = "PLAPSDE_WORKERS";

struct ExperimentConfig {
  ModelSpec model;
  std::vector<double> epsilon_sweep;  ///< eps-study only

  int n = 31;                  ///< interior nodes per axis
  std::vector<int> n_sweep;    ///< convergence / moser
  SubdomainMask mask;

  NoiseModel noise;
  std::vector<int> K_sweep;

  SolverConfig solver;
  std::vector<double> tau_sweep;

  InitialCondition initial;

  int n_paths = 100;
  std::uint64_t base_seed = 0;
  bool antithetic = false;

  std::filesystem::path out_dir = "out";
  bool dump_trajectories = false;

  FunctionalSpec functionals;
  int ladder_rungs = 3;

  int job_cap = 64;

  int moser_k_max = 4;
  bool moser_estimate = true;

  std::vector<double> hl_alphas{0.0, 1.0, 2.0, 5.0};
  std::vector<double> hl_Ls{10.0, 20.0, 40.0};
  double hl_plateau = 1.5;
  hl::SamplingSpec hl_sampling;

  int ellipticity_samples = 100000;
  int growth_samples = 2000;
  std::vector<int> growth_K_probe{8, 16, 32, 64};
  double growth_tolerance = 0.05;

  /// Range and consistency checks shared by every command.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Flat sectioned key = value file (INI). Unknown sections or keys are
/// rejected so that typos do not silently fall back to defaults.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Worker count from PLAPSDE_WORKERS, else the hardware concurrency.
int default_workers();

/// Number of steps for horizon T at step tau; throws when tau does not
/// divide T.
int steps_for(double T, double tau);

struct FailedPath {
  std::uint64_t path_index = 0;
  std::uint64_t seed = 0;
  std::string reason;
};

/// One point of a sweep.
struct Level {
  ModelSpec model;
  int n = 0;
  NoiseModel noise;
  SolverConfig solver;
};

struct FarmResult {
  FunctionalReport report;
  std::vector<FailedPath> failures;
  int n_requested = 0;
  StepStats totals;
  std::vector<std::string> warnings;

  bool too_many_failures() const;
};

/// Runs cfg.n_paths paths of one level on `workers` threads and reduces
/// them in path order. Output does not depend on the worker count.
FarmResult run_level(const ExperimentConfig& cfg, const Level& level,
                     int workers);

Level base_level(const ExperimentConfig& cfg);

/// Writers. results.csv rows are path_index,functional_id,value.
void write_results_csv(std::ostream& os, const FunctionalReport& report);
nlohmann::json aggregates_json(const FunctionalReport& report);
nlohmann::json level_json(const Level& level);
nlohmann::json summary_json(const ExperimentConfig& cfg, const Level& level,
                            const FarmResult& farm);

/// Command drivers. Each writes its artifacts under cfg.out_dir and returns
/// the process exit code (0 success, 1 check failed, 3 too many failed
/// paths).
struct CommandOutput {
  int exit_code = 0;
  nlohmann::json summary;
};

CommandOutput cmd_simulate(const ExperimentConfig& cfg, int workers);
CommandOutput cmd_eps_study(const ExperimentConfig& cfg, int workers);
CommandOutput cmd_convergence(const ExperimentConfig& cfg, int workers);
CommandOutput cmd_moser(const ExperimentConfig& cfg, int workers);
CommandOutput cmd_hl_check(const ExperimentConfig& cfg);
CommandOutput cmd_bounds_check(const ExperimentConfig& cfg);

/// JSON text as written to disk (two-space indent, trailing newline).
std::string dump_json(const nlohmann::json& j);

}  // namespace plapsde
