#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perfzo/optimizers.hpp"

namespace perfzo {

struct ExperimentConfig {
  enum class Optimizer { Convex, TwoLevel };

  std::string env_name;
  EnvParams env_params;
  Optimizer optimizer = Optimizer::TwoLevel;

  // two-level optimizer
  double eps = 0.0, p = 0.1;
  double eps_lm = 0.0, p_lm = 0.1;
  double eps_kl = 0.0, p_kl = 0.1;
  std::optional<double> budget;  // theorem schedule when set
  OptimizerOverrides overrides;
  std::string calibration_path;

  // convex optimizer
  std::size_t convex_T = 0;

  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";
  std::size_t workers = 1;
  double slope_window = 0.8;
  std::size_t csv_stride = 1;
  double oracle_resolution = 1e-4;
  double success_threshold = 0.1;  // as a fraction of F
};

/// Reads an INI file with [experiment], [environment] and [optimizer]
/// sections. PERF_SEED, when set, replaces the seed list.
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(std::istream& in);

/// Seed list from "1,2,3" or "1-20".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

/// Validates the config against the environment and resolves the optimizer schedule.
OptimizerConfig resolve_optimizer(const ExperimentConfig& cfg, const Environment& env);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double window = 0.8;
  std::size_t points = 0;
};

/// OLS of log R on log k over the final `window` fraction of k (k > (1 - window) k_max),
/// restricted to R > 0. Needs at least 50 such points.
SlopeFit fit_slope(std::span<const double> k, std::span<const double> regret, double window = 0.8);
/// Same for a dense series where element i holds R_{i+1}.
SlopeFit fit_slope(std::span<const double> regret, double window = 0.8);

/// Per-seed CSV: k, level, theta0.., loss, cum_loss, regret. Every `stride`-th
/// row is written, plus the last one.
void write_run_csv(std::ostream& out, const RegretLedger& ledger, std::size_t stride = 1);

struct CsvSeries {
  std::vector<double> k;
  std::vector<double> loss;
  std::vector<double> cum_loss;
  std::vector<double> regret;
};
CsvSeries read_run_csv(const std::string& path);

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::string csv_path;
  Vector theta_bar;
  Vector phi_bar;
  double pr_theta_bar = 0.0;
  double gap = 0.0;
  bool success = false;
  std::optional<SlopeFit> slope;
  double final_regret = 0.0;
  std::uint64_t loop_n = 0;
  std::uint64_t total_n = 0;
  std::size_t inner_warnings = 0;
};

struct ExperimentReport {
  OracleReport oracle;
  std::optional<OptimizerConfig> optimizer;
  std::vector<SeedOutcome> seeds;
  std::optional<double> median_slope;
  double success_rate = 0.0;
  std::uint64_t expected_loop_n = 0;
  double wall_seconds = 0.0;
  std::string report_path;
};

/// Runs every seed (up to `workers` at a time), writes one CSV per seed and
/// report.json into the output directory.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// One seed of an experiment without file output.
RunResult run_seed(const ExperimentConfig& cfg, const OptimizerConfig* opt, std::uint64_t seed, Environment& env);

/// Exit status for an error: 2 for configuration problems, 3 for oracle failures, 1 otherwise.
int exit_code_for(ErrorKind kind) noexcept;

}  // namespace perfzo
