#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "radloc/coop.hpp"
#include "radloc/scenario.hpp"

namespace radloc::harness {

enum class SolverKind { Ls, Sequential, Mds, Pocs, Admm };
enum class Connectivity { Range, Full };

struct SolverSpec {
  /// Column value in the output; defaults to a name derived from the settings.
  std::string label;
  SolverKind kind = SolverKind::Ls;
  bool cooperative = true;
  Connectivity connectivity = Connectivity::Range;
  coop::SolverConfig config;
  coop::AdmmOptions admm;
  /// ADMM only: start from the POCS solution on the same measurements.
  bool warm_start_pocs = false;
};

struct ScenarioSource {
  scenario::BenchmarkSpec benchmark;
  std::uint64_t seed = 1;
  /// Generate a new placement every trial instead of one per experiment.
  bool resample_per_trial = false;
  /// Loaded scenario; overrides the benchmark generator when present.
  std::optional<scenario::NetworkScenario> fixed;
};

struct ExperimentConfig {
  ScenarioSource scenario;
  std::vector<double> sigmas;
  std::vector<SolverSpec> solvers;
  int n_trials = 100;
  std::uint64_t base_seed = 1;
  std::filesystem::path output;
  /// 0 picks the hardware concurrency.
  int threads = 0;
};

/// Parses and validates a configuration document. `base_dir` resolves a relative
/// scenario file reference. Throws ConfigError listing every offending field.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& file);

struct MetricRow {
  std::string solver;
  double sigma = 0.0;
  int trial = 0;
  /// NaN when no agent was resolved.
  double rmse = 0.0;
  double resolved_fraction = 0.0;
  double converged_fraction = 0.0;
  double wall_time_s = 0.0;
  /// Fingerprint of the measurements the solver consumed.
  std::string range_hash;
  std::vector<double> agent_errors;
};

struct AggregateRow {
  std::string solver;
  double sigma = 0.0;
  /// Mean over trials with at least one resolved agent.
  double mean_rmse = 0.0;
  /// Percentiles of the pooled per-agent errors.
  double p50 = 0.0;
  double p90 = 0.0;
  double resolved_fraction = 0.0;
  double converged_fraction = 0.0;
  int scored_trials = 0;
};

struct MetricTable {
  /// Sorted by (solver order in the config, sigma, trial).
  std::vector<MetricRow> rows;
  std::vector<AggregateRow> aggregates;

  const AggregateRow& aggregate(const std::string& solver, double sigma) const;
};

MetricTable run_experiment(const ExperimentConfig& config);

/// Deterministic per-trial metrics (no timings).
void write_metrics_csv(std::ostream& out, const MetricTable& table);
void write_timing_csv(std::ostream& out, const MetricTable& table);
nlohmann::json aggregate_json(const MetricTable& table);
/// metrics.csv, timing.csv and aggregate.json under `dir`.
void write_outputs(const std::filesystem::path& dir, const MetricTable& table);

/// Euclidean error of each estimate against the truth; both maps must hold the same ids.
std::vector<double> per_agent_errors(const std::map<NodeId, Position>& estimates,
                                     const std::map<NodeId, Position>& truth);
/// sqrt(mean squared error). Throws EmptyResolvedSet on empty input.
double compute_rmse(const std::map<NodeId, Position>& estimates, const std::map<NodeId, Position>& truth);

/// Empirical quantiles with linear interpolation between order statistics at
/// h = (n - 1) p / 100. Returns (p, value) pairs.
std::vector<std::pair<double, double>> error_cdf(std::vector<double> errors, const std::vector<double>& percentiles);

/// 64-bit FNV-1a over the measurement list, as 16 hex digits.
std::string range_hash(const scenario::RangeSet& ranges);

}  // namespace radloc::harness
