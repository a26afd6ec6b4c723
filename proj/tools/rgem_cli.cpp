#include "experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Overrides {
  std::optional<std::uint64_t> k;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::optional<std::uint64_t> cadence;
  std::optional<unsigned> workers;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--k", k, "iteration count (overrides config)");
    cmd->add_option("--seeds", seeds, "seed list (overrides config)");
    cmd->add_option("--out", out, "output directory (overrides config and $RGEM_OUT_DIR)");
    cmd->add_option("--cadence", cadence, "log every j-th iteration");
    cmd->add_option("--workers", workers, "worker threads (0: all cores)");
  }

  void apply(rgem::cli::ExperimentConfig& c) const {
    if (k) c.k = *k;
    if (!seeds.empty()) c.seeds = seeds;
    if (!out.empty()) c.output.dir = out;
    if (cadence) c.output.cadence = *cadence;
    if (workers) c.workers = *workers;
  }
};

}  // namespace

int main(int argc, char** argv) {
  using namespace rgem::cli;
  CLI::App app{"Gradient extrapolation solvers and experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;
  auto* run = app.add_subcommand("run", "run the configured solver for every seed and write traces");
  auto* sweep = app.add_subcommand("sweep", "run the (m, cond, sigma) grid and write a summary table");
  auto* bounds = app.add_subcommand("bounds", "print the bound report for the configured problem");
  auto* validate = app.add_subcommand("validate", "check a config file without running it");
  for (auto* cmd : {run, sweep, bounds, validate}) {
    cmd->add_option("config", config_path, "JSON experiment config")->required();
    ov.add_to(cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigFailure;
  }

  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
    ov.apply(cfg);
    if (cfg.k < 1) throw rgem::ConfigError("k: must be >= 1");
    if (cfg.seeds.empty()) throw rgem::ConfigError("seeds: need at least one seed");
    if (cfg.output.cadence < 1) throw rgem::ConfigError("output.cadence: must be >= 1");
  } catch (const rgem::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigFailure;
  }

  if (*run) return cmd_run(cfg, std::cout, std::cerr);
  if (*sweep) return cmd_sweep(cfg, std::cout, std::cerr);
  if (*bounds) return cmd_bounds(cfg, std::cout, std::cerr);
  return cmd_validate(cfg, std::cout);
}
