#pragma once

#include <rgem/all.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rgem::cli {

inline constexpr const char* kTraceSchema = "rgem-trace/1";
inline constexpr const char* kOutDirEnv = "RGEM_OUT_DIR";

enum ExitCode : int { kOk = 0, kRunFailure = 1, kConfigFailure = 2 };

struct DatasetSpec {
  std::string path;
  DataFormat format = DataFormat::sparse;
  index_t dim = 0;
  PartitionScheme partition = PartitionScheme::round_robin;
  std::optional<std::uint64_t> shuffle_seed;
};

struct ProblemSpec {
  std::string family = "quadratic";  // quadratic | logistic
  index_t m = 4;
  index_t n = 10;
  std::optional<double> mu;
  std::optional<double> cond;  // mu = Lhat / cond
  double spectrum_lo = 0.0;
  double spectrum_hi = 1.0;
  double b_scale = 1.0;
  std::uint64_t seed = 1;
  std::optional<DatasetSpec> dataset;
  index_t per_agent = 50;  // synthetic logistic data
  double noise_sigma = 0.0;
  double reference_tol = 1e-12;
};

struct SolverSpec {
  std::string method = "rgem";  // gem | rgem | rgem_stochastic | simulate
  std::string policy = "strongly_convex";
  InitMode init = InitMode::zero_init;
  std::optional<double> alpha;
  std::optional<double> eta;
  std::optional<double> tau;
  SimMode mode = SimMode::deterministic;
  std::vector<double> responsiveness;  // empty: all 1; one value: broadcast
  RetryMode retry = RetryMode::redraw;
  bool persist = true;
  std::uint64_t retry_cap = 100'000;
  double audit_fraction = 0.0;
};

struct OutputSpec {
  std::string dir;
  std::uint64_t cadence = 1;
  bool timing = false;       // write wall_ns; off keeps files byte-reproducible
  bool jsonl = false;        // line-delimited trace next to the CSV
  bool message_log = false;  // simulator message log per seed
};

struct SweepSpec {
  std::vector<index_t> m;
  std::vector<double> cond;
  std::vector<double> sigma{0.0};
  double eps = 1e-6;
  int seeds = 10;
  index_t n = 20;
  double budget_factor = 10.0;
};

struct ExperimentConfig {
  ProblemSpec problem;
  SolverSpec solver;
  std::uint64_t k = 100;
  std::vector<std::uint64_t> seeds{1};
  OutputSpec output;
  unsigned workers = 0;  // 0: hardware concurrency
  std::optional<SweepSpec> sweep;
};

/// Schema-checked parse; unknown keys and type errors raise ConfigError naming the field path.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Output directory: config value, else $RGEM_OUT_DIR, else ./rgem_out.
std::filesystem::path resolve_out_dir(const ExperimentConfig& cfg);

ProblemInstance build_problem(const ProblemSpec& spec);

struct SeedOutput {
  std::uint64_t seed = 0;
  RunTrace trace;
  std::string message_log;
  std::optional<CommStats> comm;
  std::string error;
};

/// Runs every seed of the configured solver on a worker pool.
std::vector<SeedOutput> run_replicas(const ExperimentConfig& cfg, const ProblemInstance& problem);

void write_trace_csv(std::ostream& out, const std::string& series, std::optional<std::uint64_t> seed,
                     const RunTrace& trace, bool timing, bool header = true);
void write_trace_jsonl(std::ostream& out, std::uint64_t seed, const RunTrace& trace, bool timing);
/// Mean and sample standard deviation per logged iteration (series=mean, series=std).
void write_aggregate_csv(std::ostream& out, const std::vector<SeedOutput>& runs, bool timing);
/// Bound curves at the logged iterations (series=bound).
void write_bound_csv(std::ostream& out, const std::vector<std::uint64_t>& iterations,
                     const std::vector<real_ext>& psi_curve, const std::vector<real_ext>& p_curve);

int cmd_run(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_sweep(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_bounds(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_validate(const ExperimentConfig& cfg, std::ostream& out);

}  // namespace rgem::cli
