#include "plapsde/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "plapsde/errors.hpp"

namespace plapsde {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string strip_comment(std::string v) {
  const auto pos = v.find_first_of(";#");
  if (pos != std::string::npos) {
    v.erase(pos);
  }
  boost::algorithm::trim(v);
  return v;
}

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> parts;
  const std::string v = strip_comment(raw);
  if (v.empty()) {
    return parts;
  }
  boost::algorithm::split(parts, v, boost::is_any_of(","));
  for (auto& p : parts) {
    boost::algorithm::trim(p);
  }
  return parts;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw DomainError("config: '" + key + "' expects a number, got '" + v + "'");
  }
  return x;
}

long long to_integer(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw DomainError("config: '" + key + "' expects an integer, got '" + v +
                      "'");
  }
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string s = boost::algorithm::to_lower_copy(v);
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  throw DomainError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& p : split_list(v)) {
    out.push_back(to_double(key, p));
  }
  return out;
}

std::vector<int> to_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& p : split_list(v)) {
    out.push_back(static_cast<int>(to_integer(key, p)));
  }
  return out;
}

template <class T>
void require_sorted_sweep(const std::string& key, const std::vector<T>& v) {
  if (v.empty()) {
    return;
  }
  const bool up = std::is_sorted(v.begin(), v.end());
  const bool down = std::is_sorted(v.rbegin(), v.rend());
  if (!up && !down) {
    throw DomainError("config: sweep '" + key + "' must be sorted");
  }
  if (std::adjacent_find(v.begin(), v.end()) != v.end() && !(up && down)) {
    throw DomainError("config: sweep '" + key + "' has repeated entries");
  }
}

WeightKind parse_weight_kind(const std::string& v) {
  if (v == "sharp") return WeightKind::SharpIndicator;
  if (v == "bump") return WeightKind::SmoothBump;
  throw DomainError("config: weight_kind must be 'sharp' or 'bump'");
}

std::string to_string(WeightKind k) {
  return k == WeightKind::SharpIndicator ? "sharp" : "bump";
}

void apply_functional_ids(const std::vector<std::string>& ids,
                          const std::vector<double>& q, FunctionalSpec& spec) {
  static const std::set<std::string> energy{"sup_u2", "int_gradp",
                                            "eps_int_grad2"};
  static const std::set<std::string> natural{"sup_grad2", "int_gradF2"};
  spec.energy = false;
  spec.natural = false;
  spec.integrability_q.clear();
  spec.moment_q.clear();
  bool wants_q = false;
  for (const auto& id : ids) {
    if (energy.count(id)) {
      spec.energy = true;
    } else if (natural.count(id)) {
      spec.natural = true;
    } else if (id == "higher_integrability") {
      spec.integrability_q = q;
      wants_q = true;
    } else if (id == "moment_energy" || id == "moment_sup_uq") {
      spec.moment_q = q;
      wants_q = true;
    } else {
      throw DomainError("config: unknown functional id '" + id + "'");
    }
  }
  if (wants_q && q.empty()) {
    throw DomainError("config: functionals.q is required for q-functionals");
  }
}

}  // namespace

int steps_for(double T, double tau) {
  if (!(tau > 0.0) || !(T > 0.0)) {
    throw DomainError("tau and T must be > 0");
  }
  const double r = T / tau;
  const long long n = std::llround(r);
  if (n < 1 || std::abs(tau * double(n) - T) > 1e-12 * T) {
    throw DomainError("tau does not divide T");
  }
  return static_cast<int>(n);
}

ExperimentConfig parse_config(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw DomainError(std::string("config: ") + e.what());
  }

  ExperimentConfig cfg;
  std::vector<std::string> ids{"sup_u2", "int_gradp", "eps_int_grad2"};
  std::vector<double> qs;
  std::optional<double> tau;
  std::optional<int> cells;
  std::optional<int> nodes;
  std::vector<int> cells_sweep;

  for (const auto& [section, body] : tree) {
    if (body.data().size() && body.empty()) {
      throw DomainError("config: key '" + section + "' outside any section");
    }
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      const std::string v = strip_comment(node.data());
      auto unknown = [&] {
        throw DomainError("config: unknown key '" + full + "'");
      };
      if (section == "model") {
        if (key == "d") cfg.model.d = int(to_integer(full, v));
        else if (key == "D") cfg.model.D = int(to_integer(full, v));
        else if (key == "p") cfg.model.p = to_double(full, v);
        else if (key == "family") parse_family(v, cfg.model);
        else if (key == "epsilon") cfg.model.epsilon = to_double(full, v);
        else if (key == "epsilon_sweep") cfg.epsilon_sweep = to_doubles(full, v);
        else if (key == "T") cfg.model.T = to_double(full, v);
        else unknown();
      } else if (section == "grid") {
        if (key == "n") nodes = int(to_integer(full, v));
        else if (key == "cells") cells = int(to_integer(full, v));
        else if (key == "n_sweep") cfg.n_sweep = to_ints(full, v);
        else if (key == "cells_sweep") cells_sweep = to_ints(full, v);
        else if (key == "margin") cfg.mask.margin = to_double(full, v);
        else if (key == "weight_kind") cfg.mask.kind = parse_weight_kind(v);
        else unknown();
      } else if (section == "noise") {
        if (key == "family") cfg.noise.family = parse_noise_family(v);
        else if (key == "K") cfg.noise.K = int(to_integer(full, v));
        else if (key == "K_sweep") cfg.K_sweep = to_ints(full, v);
        else if (key == "decay") cfg.noise.decay = to_double(full, v);
        else if (key == "amplitude") cfg.noise.amplitude = to_double(full, v);
        else if (key == "M") cfg.noise.M = to_double(full, v);
        else unknown();
      } else if (section == "solver") {
        if (key == "tau") tau = to_double(full, v);
        else if (key == "tau_sweep") cfg.tau_sweep = to_doubles(full, v);
        else if (key == "newton_tol") cfg.solver.newton_tol = to_double(full, v);
        else if (key == "newton_max_iter")
          cfg.solver.newton_max_iter = int(to_integer(full, v));
        else if (key == "damping") cfg.solver.damping = to_double(full, v);
        else if (key == "cg_max_iter")
          cfg.solver.cg_max_iter = int(to_integer(full, v));
        else unknown();
      } else if (section == "initial") {
        if (key == "kind") cfg.initial.kind = parse_initial_kind(v);
        else if (key == "amplitude") cfg.initial.amplitude = to_double(full, v);
        else if (key == "seed")
          cfg.initial.seed = std::uint64_t(to_integer(full, v));
        else if (key == "modes") cfg.initial.modes = int(to_integer(full, v));
        else unknown();
      } else if (section == "mc") {
        if (key == "n_paths") cfg.n_paths = int(to_integer(full, v));
        else if (key == "base_seed")
          cfg.base_seed = std::uint64_t(to_integer(full, v));
        else if (key == "antithetic") cfg.antithetic = to_bool(full, v);
        else unknown();
      } else if (section == "outputs") {
        if (key == "directory") cfg.out_dir = v;
        else if (key == "dump_trajectories")
          cfg.dump_trajectories = to_bool(full, v);
        else if (key == "formats") {
          for (const auto& f : split_list(v)) {
            if (f != "csv" && f != "json") {
              throw DomainError("config: outputs.formats accepts csv, json");
            }
          }
        } else unknown();
      } else if (section == "functionals") {
        if (key == "ids") ids = split_list(v);
        else if (key == "q") qs = to_doubles(full, v);
        else if (key == "ladder_rungs")
          cfg.ladder_rungs = int(to_integer(full, v));
        else unknown();
      } else if (section == "sweep") {
        if (key == "job_cap") cfg.job_cap = int(to_integer(full, v));
        else unknown();
      } else if (section == "moser") {
        if (key == "k_max") cfg.moser_k_max = int(to_integer(full, v));
        else if (key == "estimate") cfg.moser_estimate = to_bool(full, v);
        else unknown();
      } else if (section == "hl") {
        if (key == "alphas") cfg.hl_alphas = to_doubles(full, v);
        else if (key == "Ls") cfg.hl_Ls = to_doubles(full, v);
        else if (key == "plateau") cfg.hl_plateau = to_double(full, v);
        else if (key == "n_grid") cfg.hl_sampling.n_grid = int(to_integer(full, v));
        else if (key == "n_pairs")
          cfg.hl_sampling.n_pairs = int(to_integer(full, v));
        else unknown();
      } else if (section == "bounds") {
        if (key == "ellipticity_samples")
          cfg.ellipticity_samples = int(to_integer(full, v));
        else if (key == "growth_samples")
          cfg.growth_samples = int(to_integer(full, v));
        else if (key == "K_probe") cfg.growth_K_probe = to_ints(full, v);
        else if (key == "tolerance") cfg.growth_tolerance = to_double(full, v);
        else unknown();
      } else {
        throw DomainError("config: unknown section [" + section + "]");
      }
    }
  }

  if (nodes && cells) {
    throw DomainError("config: give grid.n or grid.cells, not both");
  }
  if (cells) cfg.n = *cells - 1;
  if (nodes) cfg.n = *nodes;
  if (!cells_sweep.empty()) {
    if (!cfg.n_sweep.empty()) {
      throw DomainError("config: give grid.n_sweep or grid.cells_sweep");
    }
    for (int c : cells_sweep) cfg.n_sweep.push_back(c - 1);
  }
  if (tau) {
    cfg.solver.tau = *tau;
  }
  cfg.solver.n_steps = steps_for(cfg.model.T, cfg.solver.tau);
  cfg.solver.tau = cfg.model.T / cfg.solver.n_steps;
  apply_functional_ids(ids, qs, cfg.functionals);
  cfg.functionals.mask = cfg.mask;

  require_sorted_sweep("model.epsilon_sweep", cfg.epsilon_sweep);
  require_sorted_sweep("grid.n_sweep", cfg.n_sweep);
  require_sorted_sweep("noise.K_sweep", cfg.K_sweep);
  require_sorted_sweep("solver.tau_sweep", cfg.tau_sweep);
  require_sorted_sweep("hl.Ls", cfg.hl_Ls);
  require_sorted_sweep("bounds.K_probe", cfg.growth_K_probe);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DomainError("cannot open config '" + path.string() + "'");
  }
  return parse_config(in);
}

void ExperimentConfig::validate() const {
  if (n < 2) {
    throw DomainError("config: grid needs n >= 2 interior nodes");
  }
  for (int m : n_sweep) {
    if (m < 2) throw DomainError("config: grid sweep needs n >= 2");
  }
  if (n_paths < 1) {
    throw DomainError("config: mc.n_paths must be >= 1");
  }
  if (antithetic && n_paths % 2 != 0) {
    throw DomainError("config: antithetic sampling needs an even n_paths");
  }
  if (job_cap < 1) {
    throw DomainError("config: sweep.job_cap must be >= 1");
  }
  if (ladder_rungs < 1) {
    throw DomainError("config: functionals.ladder_rungs must be >= 1");
  }
  for (int K : K_sweep) {
    if (K < 0) throw DomainError("config: K_sweep entries must be >= 0");
  }
  for (double e : epsilon_sweep) {
    if (!(e >= 0.0)) throw DomainError("config: epsilon_sweep must be >= 0");
  }
  mask.validate();
  noise.validate();
}

json ExperimentConfig::to_json() const {
  return {
      {"model",
       {{"d", model.d},
        {"D", model.D},
        {"p", model.p},
        {"family", model.family_name()},
        {"epsilon", model.epsilon},
        {"epsilon_sweep", epsilon_sweep},
        {"T", model.T}}},
      {"grid",
       {{"n", n},
        {"n_sweep", n_sweep},
        {"margin", mask.margin},
        {"weight_kind", to_string(mask.kind)}}},
      {"noise",
       {{"family", plapsde::to_string(noise.family)},
        {"K", noise.K},
        {"K_sweep", K_sweep},
        {"decay", noise.decay},
        {"amplitude", noise.amplitude},
        {"M", noise.M}}},
      {"solver",
       {{"tau", solver.tau},
        {"tau_sweep", tau_sweep},
        {"n_steps", solver.n_steps},
        {"newton_tol", solver.newton_tol},
        {"newton_max_iter", solver.newton_max_iter},
        {"damping", solver.damping}}},
      {"initial",
       {{"kind", plapsde::to_string(initial.kind)},
        {"amplitude", initial.amplitude},
        {"seed", initial.seed}}},
      {"mc",
       {{"n_paths", n_paths},
        {"base_seed", base_seed},
        {"antithetic", antithetic}}},
      {"functionals", functionals.ids()},
  };
}

int default_workers() {
  if (const char* env = std::getenv(kWorkersEnv)) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) {
      return static_cast<int>(v);
    }
    throw DomainError(std::string(kWorkersEnv) + " must be a positive integer");
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

bool FarmResult::too_many_failures() const {
  return failures.size() * 100 > std::size_t(n_requested);
}

Level base_level(const ExperimentConfig& cfg) {
  return {cfg.model, cfg.n, cfg.noise, cfg.solver};
}

namespace {

std::vector<std::string> level_warnings(const Level& level) {
  std::vector<std::string> w;
  if (level.noise.K > 0 &&
      level.noise.family == NoiseFamily::SpatiallyModulated &&
      !(level.noise.decay > 1.5)) {
    w.push_back(
        "noise decay <= 1.5: the spatial growth condition is not summable");
  }
  return w;
}

}  // namespace

FarmResult run_level(const ExperimentConfig& cfg, const Level& level,
                     int workers) {
  level.model.validate();
  level.noise.validate();
  level.solver.validate(level.model);
  const Grid grid(level.model.d, level.n);
  const NodalField u0 = make_initial(grid, level.model.D, cfg.initial);
  // Surface configuration errors once instead of as per-path failures.
  PathAccumulator probe(cfg.functionals, level.model, grid, level.solver.tau);
  (void)probe;

  const int n_paths = cfg.n_paths;
  std::vector<std::optional<PathResult>> results(n_paths);
  std::vector<std::string> errors(n_paths);
  if (cfg.dump_trajectories) {
    fs::create_directories(cfg.out_dir / "snapshots");
  }

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n_paths; i = next++) {
      RunOptions opt;
      std::uint64_t key = std::uint64_t(i);
      if (cfg.antithetic && i % 2 == 1) {
        key = std::uint64_t(i - 1);
        opt.negate_noise = true;
      }
      opt.store_trajectory = cfg.dump_trajectories;
      try {
        PathResult r = run_path(u0, level.model, level.noise, level.solver,
                                cfg.base_seed, key, cfg.functionals, opt);
        r.path_index = std::uint64_t(i);
        if (r.trajectory) {
          char name[64];
          std::snprintf(name, sizeof name, "path_%06d_final.csv", i);
          std::ofstream os(cfg.out_dir / "snapshots" / name);
          write_snapshot_csv(os, r.trajectory->states.back());
          r.trajectory.reset();
        }
        results[i] = std::move(r);
      } catch (const Error& e) {
        errors[i] = e.what();
      }
    }
  };
  const int n_workers = std::clamp(workers, 1, n_paths);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (int w = 0; w < n_workers; ++w) {
      pool.emplace_back(worker);
    }
    for (auto& t : pool) {
      t.join();
    }
  }

  FarmResult out;
  out.n_requested = n_paths;
  out.warnings = level_warnings(level);
  std::vector<PathRecord> records;
  for (int i = 0; i < n_paths; ++i) {
    if (results[i]) {
      records.push_back({results[i]->path_index, std::move(results[i]->values)});
      out.totals.newton_iterations += results[i]->totals.newton_iterations;
      out.totals.cg_iterations += results[i]->totals.cg_iterations;
      out.totals.gradient_fallbacks += results[i]->totals.gradient_fallbacks;
    } else {
      out.failures.push_back({std::uint64_t(i), cfg.base_seed, errors[i]});
    }
  }
  if (records.empty()) {
    throw ConvergenceError("every path failed; first: " + errors.front(),
                           std::nan(""));
  }
  // An antithetic pair with a failed member is reduced as singletons.
  out.report = aggregate(std::move(records), cfg.antithetic);
  return out;
}

void write_results_csv(std::ostream& os, const FunctionalReport& report) {
  os << "path_index,functional_id,value\n";
  char buf[64];
  for (const auto& path : report.paths) {
    for (const auto& [id, value] : path.values) {
      std::snprintf(buf, sizeof buf, "%.17g", value);
      os << path.path_index << ',' << id << ',' << buf << '\n';
    }
  }
}

json aggregates_json(const FunctionalReport& report) {
  json arr = json::array();
  for (const auto& a : report.aggregates) {
    arr.push_back({{"id", a.id},
                   {"mean", a.mean},
                   {"var", a.var},
                   {"se", a.se},
                   {"ci_lo", a.ci_lo},
                   {"ci_hi", a.ci_hi},
                   {"n_paths", a.n_paths},
                   {"variance_defined", a.variance_defined}});
  }
  return arr;
}

json level_json(const Level& level) {
  return {{"d", level.model.d},
          {"D", level.model.D},
          {"p", level.model.p},
          {"family", level.model.family_name()},
          {"epsilon", level.model.epsilon},
          {"T", level.model.T},
          {"n", level.n},
          {"cells_per_axis", level.n + 1},
          {"K", level.noise.K},
          {"noise_family", to_string(level.noise.family)},
          {"tau", level.solver.tau},
          {"n_steps", level.solver.n_steps}};
}

namespace {

json failures_json(const std::vector<FailedPath>& failures) {
  json arr = json::array();
  for (const auto& f : failures) {
    arr.push_back(
        {{"path_index", f.path_index}, {"seed", f.seed}, {"reason", f.reason}});
  }
  return arr;
}

json header(const std::string& schema, const std::string& command,
            const ExperimentConfig& cfg) {
  return {{"schema", schema},
          {"schema_version", kSchemaVersion},
          {"command", command},
          {"version", PLAPSDE_VERSION},
          {"base_seed", cfg.base_seed}};
}

json level_entry(const Level& level, const FarmResult& farm) {
  return {{"level", level_json(level)},
          {"aggregates", aggregates_json(farm.report)},
          {"n_paths_requested", farm.n_requested},
          {"n_paths_failed", farm.failures.size()},
          {"failed_paths", failures_json(farm.failures)}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw Error("cannot write '" + path.string() + "'");
  }
  os << text;
}

void write_level_outputs(const fs::path& dir, const json& summary,
                         const FunctionalReport& report) {
  fs::create_directories(dir);
  std::ostringstream csv;
  write_results_csv(csv, report);
  write_text(dir / "results.csv", csv.str());
  write_text(dir / "summary.json", dump_json(summary));
}

const Aggregate* find_aggregate(const FunctionalReport& r,
                                const std::string& id) {
  for (const auto& a : r.aggregates) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

std::string level_dir(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "level_%02zu", k);
  return buf;
}

}  // namespace

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

json summary_json(const ExperimentConfig& cfg, const Level& level,
                  const FarmResult& farm) {
  json s = header("plapsde.summary", "simulate", cfg);
  s["config"] = cfg.to_json();
  s["level"] = level_json(level);
  s["aggregates"] = aggregates_json(farm.report);
  s["n_paths_requested"] = farm.n_requested;
  s["n_paths_ok"] = farm.report.paths.size();
  s["failed_paths"] = failures_json(farm.failures);
  s["warnings"] = farm.warnings;
  s["solver_stats"] = {{"newton_iterations", farm.totals.newton_iterations},
                       {"cg_iterations", farm.totals.cg_iterations},
                       {"gradient_fallbacks", farm.totals.gradient_fallbacks}};
  return s;
}

CommandOutput cmd_simulate(const ExperimentConfig& cfg, int workers) {
  const Level level = base_level(cfg);
  const FarmResult farm = run_level(cfg, level, workers);
  CommandOutput out;
  out.summary = summary_json(cfg, level, farm);
  write_level_outputs(cfg.out_dir, out.summary, farm.report);
  out.exit_code = farm.too_many_failures() ? 3 : 0;
  return out;
}

CommandOutput cmd_eps_study(const ExperimentConfig& cfg_in, int workers) {
  ExperimentConfig cfg = cfg_in;
  cfg.functionals.energy = true;
  std::vector<double> eps = cfg.epsilon_sweep;
  if (eps.empty()) {
    eps.push_back(cfg.model.epsilon);
  }
  json s = header("plapsde.eps_study", "eps-study", cfg);
  s["config"] = cfg.to_json();
  std::vector<std::string> warnings;
  if (cfg.model.p >= 2.0 && eps.size() > 1) {
    warnings.push_back("p >= 2: the epsilon regularization is unnecessary");
  }
  if (eps.size() > std::size_t(cfg.job_cap)) {
    throw DomainError("eps-study: sweep exceeds sweep.job_cap");
  }

  struct Row {
    double eps;
    Aggregate energy_sum;
    Aggregate eps_grad;
  };
  std::vector<Row> rows;
  json levels = json::array();
  int exit_code = 0;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    Level level = base_level(cfg);
    level.model.epsilon = eps[k];
    const FarmResult farm = run_level(cfg, level, workers);
    if (farm.too_many_failures()) exit_code = 3;
    for (const auto& w : farm.warnings) warnings.push_back(w);

    std::vector<PathRecord> sums;
    for (const auto& p : farm.report.paths) {
      double su = 0.0;
      double ig = 0.0;
      for (const auto& [id, v] : p.values) {
        if (id == "sup_u2") su = v;
        if (id == "int_gradp") ig = v;
      }
      sums.push_back({p.path_index, {{"energy_sum", su + ig}}});
    }
    const FunctionalReport sum_report = aggregate(sums, cfg.antithetic);
    rows.push_back({eps[k], sum_report.aggregates.front(),
                    *find_aggregate(farm.report, "eps_int_grad2")});

    json entry = level_entry(level, farm);
    entry["epsilon"] = eps[k];
    entry["energy_sum"] = aggregates_json(sum_report).front();
    levels.push_back(entry);
    json level_summary = summary_json(cfg, level, farm);
    write_level_outputs(cfg.out_dir / level_dir(k), level_summary, farm.report);
  }
  s["levels"] = levels;

  if (rows.size() >= 2) {
    double lo = rows[0].energy_sum.mean;
    double hi = lo;
    double ci_lo_max = rows[0].energy_sum.ci_lo;
    double ci_hi_min = rows[0].energy_sum.ci_hi;
    for (const auto& r : rows) {
      lo = std::min(lo, r.energy_sum.mean);
      hi = std::max(hi, r.energy_sum.mean);
      ci_lo_max = std::max(ci_lo_max, r.energy_sum.ci_lo);
      ci_hi_min = std::min(ci_hi_min, r.energy_sum.ci_hi);
    }
    auto by_eps = rows;
    std::sort(by_eps.begin(), by_eps.end(),
              [](const Row& a, const Row& b) { return a.eps > b.eps; });
    bool monotone = true;
    for (std::size_t k = 1; k < by_eps.size(); ++k) {
      monotone = monotone && by_eps[k].eps_grad.mean < by_eps[k - 1].eps_grad.mean;
    }
    const double ratio = hi / lo;
    const bool uniform = ratio <= 1.25;
    const bool overlap = ci_lo_max <= ci_hi_min;
    s["verdict"] = {{"energy_ratio_max_min", ratio},
                    {"energy_uniform", uniform},
                    {"cis_overlap", overlap},
                    {"eps_term_monotone", monotone},
                    {"pass", uniform && overlap && monotone}};
    if (!(uniform && overlap && monotone) && exit_code == 0) {
      exit_code = 1;
    }
  } else {
    s["verdict"] = nullptr;
  }
  s["warnings"] = warnings;
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "summary.json", dump_json(s));
  return {exit_code, s};
}

namespace {

std::vector<Level> convergence_levels(const ExperimentConfig& cfg) {
  const std::vector<int> ns = cfg.n_sweep.empty() ? std::vector<int>{cfg.n}
                                                  : cfg.n_sweep;
  const std::vector<double> taus =
      cfg.tau_sweep.empty() ? std::vector<double>{cfg.solver.tau}
                            : cfg.tau_sweep;
  const std::vector<int> Ks =
      cfg.K_sweep.empty() ? std::vector<int>{cfg.noise.K} : cfg.K_sweep;
  const std::size_t count = ns.size() * taus.size() * Ks.size();
  if (count > std::size_t(cfg.job_cap)) {
    throw DomainError("sweep cross-product (" + std::to_string(count) +
                      ") exceeds sweep.job_cap");
  }
  std::vector<Level> levels;
  for (int n : ns) {
    for (double tau : taus) {
      for (int K : Ks) {
        Level l = base_level(cfg);
        l.n = n;
        l.solver.n_steps = steps_for(cfg.model.T, tau);
        l.solver.tau = cfg.model.T / l.solver.n_steps;
        l.noise.K = K;
        levels.push_back(l);
      }
    }
  }
  return levels;
}

// Successive mean ratios and difference contraction factors per functional.
json refinement_table(const std::vector<FunctionalReport>& reports,
                      double factor, bool& within) {
  json table = json::object();
  within = true;
  for (const auto& a0 : reports.front().aggregates) {
    std::vector<double> means;
    for (const auto& r : reports) {
      means.push_back(find_aggregate(r, a0.id)->mean);
    }
    json ratios = json::array();
    json contraction = json::array();
    for (std::size_t k = 1; k < means.size(); ++k) {
      const double r = means[k] / means[k - 1];
      ratios.push_back(r);
      if (!(r <= factor && r >= 1.0 / factor)) {
        within = false;
      }
      if (k >= 2) {
        contraction.push_back(std::abs(means[k - 1] - means[k - 2]) /
                              std::abs(means[k] - means[k - 1]));
      }
    }
    table[a0.id] = {{"means", means},
                    {"ratios", ratios},
                    {"difference_contraction", contraction}};
  }
  return table;
}

}  // namespace

CommandOutput cmd_convergence(const ExperimentConfig& cfg, int workers) {
  const auto levels = convergence_levels(cfg);
  if (levels.size() < 2) {
    throw DomainError("convergence: need at least two sweep points");
  }
  json s = header("plapsde.convergence", "convergence", cfg);
  s["config"] = cfg.to_json();
  json rows = json::array();
  std::vector<FunctionalReport> reports;
  std::vector<std::string> warnings;
  int exit_code = 0;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const FarmResult farm = run_level(cfg, levels[k], workers);
    if (farm.too_many_failures()) exit_code = 3;
    for (const auto& w : farm.warnings) warnings.push_back(w);
    rows.push_back(level_entry(levels[k], farm));
    write_level_outputs(cfg.out_dir / level_dir(k),
                        summary_json(cfg, levels[k], farm), farm.report);
    reports.push_back(farm.report);
  }
  bool within = true;
  s["levels"] = rows;
  s["refinement"] = refinement_table(reports, 2.0, within);
  s["stable_within_factor_2"] = within;
  s["warnings"] = warnings;
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "summary.json", dump_json(s));
  return {exit_code, s};
}

CommandOutput cmd_moser(const ExperimentConfig& cfg_in, int workers) {
  ExperimentConfig cfg = cfg_in;
  const MoserLadder ladder =
      moser_ladder(cfg.model.p, cfg.model.d, cfg.moser_k_max);
  json s = header("plapsde.moser", "moser", cfg);
  s["p"] = ladder.p;
  s["d"] = ladder.d;
  s["k_max"] = cfg.moser_k_max;
  s["alphas"] = ladder.alphas;
  s["qs"] = ladder.qs;
  s["warnings"] = integrability_warnings(cfg.model);
  int exit_code = 0;
  if (!cfg.moser_estimate) {
    s["estimates"] = nullptr;
  } else {
    const std::size_t rungs =
        std::min<std::size_t>(cfg.ladder_rungs, ladder.qs.size());
    cfg.functionals = FunctionalSpec{};
    cfg.functionals.energy = false;
    cfg.functionals.mask = cfg.mask;
    cfg.functionals.integrability_q.assign(ladder.qs.begin(),
                                           ladder.qs.begin() + rungs);
    ExperimentConfig grid_cfg = cfg;
    grid_cfg.tau_sweep.clear();
    grid_cfg.K_sweep.clear();
    const auto levels = convergence_levels(grid_cfg);
    json rows = json::array();
    std::vector<FunctionalReport> reports;
    bool finite = true;
    for (std::size_t k = 0; k < levels.size(); ++k) {
      const FarmResult farm = run_level(cfg, levels[k], workers);
      if (farm.too_many_failures()) exit_code = 3;
      for (const auto& a : farm.report.aggregates) {
        finite = finite && std::isfinite(a.mean);
      }
      rows.push_back(level_entry(levels[k], farm));
      write_level_outputs(cfg.out_dir / level_dir(k),
                          summary_json(cfg, levels[k], farm), farm.report);
      reports.push_back(farm.report);
    }
    bool within = true;
    json est = {{"levels", rows}, {"finite", finite}};
    if (reports.size() >= 2) {
      est["refinement"] = refinement_table(reports, 2.0, within);
      est["stable_within_factor_2"] = within;
    }
    s["estimates"] = est;
    if ((!finite || !within) && exit_code == 0) {
      exit_code = 1;
    }
  }
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "summary.json", dump_json(s));
  return {exit_code, s};
}

CommandOutput cmd_hl_check(const ExperimentConfig& cfg) {
  json s = header("plapsde.hl_report", "hl-check", cfg);
  json reports = json::array();
  json uniformity = json::array();
  bool all = true;
  for (double alpha : cfg.hl_alphas) {
    double c_min = std::numeric_limits<double>::infinity();
    double c_max = 0.0;
    for (double L : cfg.hl_Ls) {
      hl::HLFamily fam;
      fam.alpha = alpha;
      fam.L = L;
      fam.plateau = cfg.hl_plateau;
      const hl::LemmaReport rep = hl::certify_lemma(fam, cfg.hl_sampling);
      all = all && rep.pass();
      c_min = std::min(c_min, rep.c.constant);
      c_max = std::max(c_max, rep.c.constant);
      reports.push_back(hl::to_json(rep));
    }
    const double ratio = c_max / c_min;
    const bool ok = ratio <= 1.1;
    all = all && ok;
    uniformity.push_back({{"alpha", alpha},
                          {"c_min", c_min},
                          {"c_max", c_max},
                          {"ratio", ratio},
                          {"pass", ok}});
  }
  s["reports"] = reports;
  s["c_uniformity"] = uniformity;
  s["pass"] = all;
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "summary.json", dump_json(s));
  return {all ? 0 : 1, s};
}

CommandOutput cmd_bounds_check(const ExperimentConfig& cfg) {
  json s = header("plapsde.bounds_report", "bounds-check", cfg);
  s["model"] = {{"d", cfg.model.d},
                {"D", cfg.model.D},
                {"p", cfg.model.p},
                {"family", cfg.model.family_name()}};
  bool pass = true;
  json ell;
  try {
    const auto est = check_ellipticity(cfg.model, cfg.ellipticity_samples,
                                       cfg.base_seed);
    ell = {{"lambda_hat", est.lambda_hat},
           {"Lambda_hat", est.Lambda_hat},
           {"admissible", true}};
    if (cfg.model.profile == Profile::Power) {
      const double lo = std::min(1.0, cfg.model.p - 1.0);
      const double hi = 1.0 + std::abs(cfg.model.p - 2.0);
      const bool ok = est.lambda_hat >= lo - 1e-9 && est.Lambda_hat <= hi + 1e-9;
      ell["expected_lower"] = lo;
      ell["expected_upper"] = hi;
      ell["within_expected"] = ok;
      pass = pass && ok;
    }
  } catch (const ModelRejected& e) {
    ell = {{"admissible", false}, {"reason", e.what()}};
    pass = false;
  }
  s["ellipticity"] = ell;

  const GrowthReport g =
      verify_growth(cfg.noise, cfg.model.d, cfg.model.D, cfg.growth_samples,
                    cfg.growth_K_probe, cfg.base_seed, cfg.growth_tolerance);
  json probes = json::array();
  for (const auto& pr : g.probes) {
    probes.push_back({{"K", pr.K},
                      {"sum_g", pr.sum_g},
                      {"sum_dxi", pr.sum_dxi},
                      {"sum_dx", pr.sum_dx},
                      {"coefficient_series", pr.coefficient_series}});
  }
  s["growth"] = {{"family", to_string(g.family)},
                 {"decay", cfg.noise.decay},
                 {"tolerance", g.tolerance},
                 {"probes", probes},
                 {"pass", g.pass},
                 {"failed_condition", g.failed_condition},
                 {"constant", g.constant}};
  pass = pass && g.pass;
  s["pass"] = pass;
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "summary.json", dump_json(s));
  return {pass ? 0 : 1, s};
}

}  // namespace plapsde
