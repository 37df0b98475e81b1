// Command line driver: plapsde <subcommand> --config PATH [--out DIR]
// [--paths N] [--seed S]. Worker count comes from PLAPSDE_WORKERS.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "plapsde/errors.hpp"
#include "plapsde/experiment.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<int> paths;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "experiment config (INI)")
      ->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--paths", c.paths, "override mc.n_paths")
      ->check(CLI::PositiveNumber);
  sub->add_option("--seed", c.seed, "override mc.base_seed");
}

plapsde::ExperimentConfig resolve(const Common& c) {
  plapsde::ExperimentConfig cfg;
  if (!c.config.empty()) {
    cfg = plapsde::load_config(c.config);
  } else {
    cfg.solver.n_steps = plapsde::steps_for(cfg.model.T, cfg.solver.tau);
  }
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.paths) cfg.n_paths = *c.paths;
  if (c.seed) cfg.base_seed = *c.seed;
  cfg.validate();
  return cfg;
}

void print_aggregates(const nlohmann::json& aggs) {
  for (const auto& a : aggs) {
    const double mean = a["mean"].get<double>();
    if (a["variance_defined"].get<bool>()) {
      std::printf("  %-28s %.6g  [%.6g, %.6g]\n",
                  a["id"].get<std::string>().c_str(), mean,
                  a["ci_lo"].get<double>(), a["ci_hi"].get<double>());
    } else {
      std::printf("  %-28s %.6g\n", a["id"].get<std::string>().c_str(), mean);
    }
  }
}

void report(const std::string& cmd, const plapsde::CommandOutput& out) {
  const auto& s = out.summary;
  if (cmd == "simulate") {
    print_aggregates(s["aggregates"]);
    if (!s["failed_paths"].empty()) {
      std::printf("failed paths: %zu\n", s["failed_paths"].size());
    }
  } else if (cmd == "eps-study") {
    for (const auto& l : s["levels"]) {
      std::printf("eps = %g\n", l["epsilon"].get<double>());
      print_aggregates(l["aggregates"]);
    }
    if (!s["verdict"].is_null()) {
      std::printf("verdict: %s (ratio %.4g)\n",
                  s["verdict"]["pass"].get<bool>() ? "PASS" : "FAIL",
                  s["verdict"]["energy_ratio_max_min"].get<double>());
    }
  } else if (cmd == "convergence") {
    for (const auto& l : s["levels"]) {
      std::printf("n = %d  tau = %g  K = %d\n", l["level"]["n"].get<int>(),
                  l["level"]["tau"].get<double>(), l["level"]["K"].get<int>());
      print_aggregates(l["aggregates"]);
    }
  } else if (cmd == "moser") {
    std::printf("q:");
    for (const auto& q : s["qs"]) std::printf(" %g", q.get<double>());
    std::printf("\nalpha:");
    for (const auto& a : s["alphas"]) std::printf(" %g", a.get<double>());
    std::printf("\n");
  } else if (cmd == "hl-check" || cmd == "bounds-check") {
    std::printf("%s\n", s["pass"].get<bool>() ? "PASS" : "FAIL");
  }
  for (const auto& w : s.value("warnings", nlohmann::json::array())) {
    std::fprintf(stderr, "warning: %s\n", w.get<std::string>().c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic p-Laplace experiments"};
  app.require_subcommand(1);
  Common common;
  const char* names[] = {"simulate", "eps-study", "convergence",
                         "moser", "hl-check", "bounds-check"};
  for (const char* name : names) {
    add_common(app.add_subcommand(name), common);
  }
  CLI11_PARSE(app, argc, argv);

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const plapsde::ExperimentConfig cfg = resolve(common);
    const int workers = plapsde::default_workers();
    plapsde::CommandOutput out;
    if (cmd == "simulate") out = plapsde::cmd_simulate(cfg, workers);
    else if (cmd == "eps-study") out = plapsde::cmd_eps_study(cfg, workers);
    else if (cmd == "convergence") out = plapsde::cmd_convergence(cfg, workers);
    else if (cmd == "moser") out = plapsde::cmd_moser(cfg, workers);
    else if (cmd == "hl-check") out = plapsde::cmd_hl_check(cfg);
    else out = plapsde::cmd_bounds_check(cfg);
    report(cmd, out);
    return out.exit_code;
  } catch (const plapsde::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
