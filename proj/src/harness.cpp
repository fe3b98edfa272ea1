#include "radloc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <thread>

namespace radloc::harness {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Collects field-level problems and throws them together.
class Diagnostics {
 public:
  void add(const std::string& field, const std::string& problem) { issues_.push_back(field + ": " + problem); }
  bool ok() const { return issues_.empty(); }
  [[noreturn]] void raise() const {
    std::string msg = "invalid experiment config";
    for (const auto& i : issues_) msg += "\n  " + i;
    fail(ErrorCode::ConfigError, msg);
  }

 private:
  std::vector<std::string> issues_;
};

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed, Diagnostics& d) {
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      d.add(where + "." + key, "unknown field");
    }
  }
}

template <class T>
std::optional<T> get(const json& obj, const char* key, const std::string& where, Diagnostics& d) {
  if (!obj.contains(key)) return std::nullopt;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    d.add(where + "." + key, "wrong type");
    return std::nullopt;
  }
}

std::string default_label(const SolverSpec& s) {
  std::string base;
  switch (s.kind) {
    case SolverKind::Ls: base = s.cooperative ? "ls-coop" : "ls-anchor"; break;
    case SolverKind::Sequential: base = "sequential"; break;
    case SolverKind::Mds: base = "mds"; break;
    case SolverKind::Pocs: base = "pocs"; break;
    case SolverKind::Admm: base = s.warm_start_pocs ? "admm-pocs" : "admm"; break;
  }
  return s.connectivity == Connectivity::Full ? base + "-full" : base;
}

SolverSpec parse_solver(const json& j, const std::string& where, Diagnostics& d) {
  SolverSpec s;
  if (!j.is_object()) {
    d.add(where, "expected an object");
    return s;
  }
  check_keys(j,
             where,
             {"name", "label", "cooperative", "connectivity", "max_iterations", "step_tolerance", "objective_tolerance",
              "acceleration", "penalty", "primal_tolerance", "dual_tolerance", "warm_start"},
             d);
  const auto name = get<std::string>(j, "name", where, d);
  static const std::map<std::string, SolverKind> kinds{{"ls", SolverKind::Ls},
                                                       {"sequential", SolverKind::Sequential},
                                                       {"mds", SolverKind::Mds},
                                                       {"pocs", SolverKind::Pocs},
                                                       {"admm", SolverKind::Admm}};
  if (!name) {
    if (!j.contains("name")) d.add(where + ".name", "missing");
  } else if (auto it = kinds.find(*name); it == kinds.end()) {
    d.add(where + ".name", "unknown solver '" + *name + "' (ls, sequential, mds, pocs, admm)");
  } else {
    s.kind = it->second;
  }
  if (auto v = get<bool>(j, "cooperative", where, d)) s.cooperative = *v;
  if (auto v = get<std::string>(j, "connectivity", where, d)) {
    if (*v == "range") s.connectivity = Connectivity::Range;
    else if (*v == "full") s.connectivity = Connectivity::Full;
    else d.add(where + ".connectivity", "expected 'range' or 'full'");
  }
  if (auto v = get<int>(j, "max_iterations", where, d)) {
    if (*v < 1) d.add(where + ".max_iterations", "must be >= 1");
    s.config.max_iterations = *v;
  }
  auto positive = [&](const char* key, double& target) {
    if (auto v = get<double>(j, key, where, d)) {
      if (!(*v > 0.0) || !std::isfinite(*v)) d.add(where + "." + key, "must be > 0");
      target = *v;
    }
  };
  positive("step_tolerance", s.config.step_tolerance);
  positive("objective_tolerance", s.config.objective_tolerance);
  positive("penalty", s.admm.penalty);
  positive("primal_tolerance", s.admm.primal_tolerance);
  positive("dual_tolerance", s.admm.dual_tolerance);
  if (auto v = get<std::string>(j, "acceleration", where, d)) {
    if (*v == "none") s.config.acceleration = coop::Acceleration::None;
    else if (*v == "nesterov") s.config.acceleration = coop::Acceleration::Nesterov;
    else d.add(where + ".acceleration", "expected 'none' or 'nesterov'");
  }
  if (auto v = get<std::string>(j, "warm_start", where, d)) {
    if (*v == "pocs") s.warm_start_pocs = true;
    else if (*v != "none") d.add(where + ".warm_start", "expected 'pocs' or 'none'");
    if (s.kind != SolverKind::Admm && s.warm_start_pocs) d.add(where + ".warm_start", "only ADMM accepts a warm start");
  }
  s.label = get<std::string>(j, "label", where, d).value_or(default_label(s));
  return s;
}

ScenarioSource parse_scenario(const json& j, const std::filesystem::path& base_dir, Diagnostics& d) {
  ScenarioSource src;
  const std::string where = "scenario";
  if (!j.is_object()) {
    d.add(where, "expected an object");
    return src;
  }
  if (j.contains("file")) {
    check_keys(j, where, {"file"}, d);
    const auto file = get<std::string>(j, "file", where, d);
    if (!file) return src;
    std::filesystem::path path(*file);
    if (path.is_relative()) path = base_dir / path;
    std::ifstream in(path);
    if (!in) {
      d.add(where + ".file", "cannot open '" + path.string() + "'");
      return src;
    }
    try {
      src.fixed = scenario::scenario_from_json(json::parse(in));
    } catch (const json::exception& e) {
      d.add(where + ".file", std::string("not valid JSON: ") + e.what());
    } catch (const Error& e) {
      d.add(where + ".file", e.what());
    }
    return src;
  }
  check_keys(j, where, {"n_anchors", "n_agents", "side", "range", "seed", "resample_per_trial", "require_connected"}, d);
  auto& b = src.benchmark;
  if (auto v = get<int>(j, "n_anchors", where, d)) b.n_anchors = *v;
  if (auto v = get<int>(j, "n_agents", where, d)) b.n_agents = *v;
  if (auto v = get<double>(j, "side", where, d)) b.side = *v;
  if (auto v = get<double>(j, "range", where, d)) b.range = *v;
  if (auto v = get<bool>(j, "require_connected", where, d)) b.require_connected = *v;
  if (auto v = get<std::uint64_t>(j, "seed", where, d)) src.seed = *v;
  if (auto v = get<bool>(j, "resample_per_trial", where, d)) src.resample_per_trial = *v;
  if (b.n_anchors < 3) d.add(where + ".n_anchors", "must be >= 3");
  if (b.n_agents < 1) d.add(where + ".n_agents", "must be >= 1");
  if (!(b.side > 0.0)) d.add(where + ".side", "must be > 0");
  if (!(b.range > 0.0)) d.add(where + ".range", "must be > 0");
  return src;
}

struct TrialOutput {
  std::vector<MetricRow> rows;  // one per solver, config order
};

coop::PositionEstimateSet run_solver(const SolverSpec& spec, const scenario::NetworkScenario& sc,
                                     const scenario::RangeSet& ranges) {
  switch (spec.kind) {
    case SolverKind::Ls:
      return coop::solve_ls_gradient(sc, ranges, spec.config, spec.cooperative);
    case SolverKind::Sequential:
      return coop::solve_sequential(sc, ranges, spec.config);
    case SolverKind::Mds:
      return coop::solve_mds_smacof(sc, ranges, spec.config);
    case SolverKind::Pocs:
      return coop::solve_pocs(sc, ranges, spec.config);
    case SolverKind::Admm:
    default: {
      coop::SolverConfig cfg = spec.config;
      if (spec.warm_start_pocs) {
        cfg.initializer = coop::WarmStart{coop::solve_pocs(sc, ranges, spec.config).positions};
      }
      return coop::solve_admm(sc, ranges, cfg, spec.admm);
    }
  }
}

scenario::NetworkScenario scenario_for_trial(const ScenarioSource& src, int trial) {
  if (src.fixed) return *src.fixed;
  const std::uint64_t seed = src.resample_per_trial ? derive_seed(src.seed, {static_cast<std::uint64_t>(trial)}) : src.seed;
  return scenario::generate_benchmark_scenario(src.benchmark, RngSeed{seed});
}

TrialOutput run_trial(const ExperimentConfig& config, std::size_t sigma_index, int trial,
                      const scenario::NetworkScenario& base) {
  const double sigma = config.sigmas[sigma_index];
  const auto full = base.fully_connected();
  // Every solver in this (sigma, trial) draws from the same measurement set.
  const auto all_ranges = scenario::synthesize_ranges(
      full, sigma, RngSeed{derive_seed(config.base_seed, {sigma_index, static_cast<std::uint64_t>(trial)})});
  const auto limited_ranges = all_ranges.restricted_to(base);

  std::map<NodeId, Position> truth;
  for (const auto& n : base.nodes()) {
    if (n.role == scenario::Role::Agent && n.truth_known) truth[n.id] = n.position;
  }

  TrialOutput out;
  for (const auto& spec : config.solvers) {
    const bool use_full = spec.connectivity == Connectivity::Full;
    const auto& sc = use_full ? full : base;
    const auto& ranges = use_full ? all_ranges : limited_ranges;
    MetricRow row;
    row.solver = spec.label;
    row.sigma = sigma;
    row.trial = trial;
    row.range_hash = range_hash(ranges);
    const auto t0 = std::chrono::steady_clock::now();
    const auto est = run_solver(spec, sc, ranges);
    row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::map<NodeId, Position> resolved, resolved_truth;
    for (const auto& [id, p] : truth) {
      if (est.status.at(id) == coop::AgentStatus::Resolved) {
        resolved[id] = est.positions.at(id);
        resolved_truth[id] = p;
      }
    }
    row.resolved_fraction = truth.empty() ? 0.0 : static_cast<double>(resolved.size()) / static_cast<double>(truth.size());
    row.converged_fraction = est.converged ? 1.0 : 0.0;
    if (resolved.empty()) {
      row.rmse = std::numeric_limits<double>::quiet_NaN();
    } else {
      row.agent_errors = per_agent_errors(resolved, resolved_truth);
      row.rmse = compute_rmse(resolved, resolved_truth);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::vector<AggregateRow> aggregate(const ExperimentConfig& config, const std::vector<MetricRow>& rows) {
  std::vector<AggregateRow> out;
  for (const auto& spec : config.solvers) {
    for (double sigma : config.sigmas) {
      AggregateRow a;
      a.solver = spec.label;
      a.sigma = sigma;
      std::vector<double> pooled;
      double rmse_sum = 0.0, resolved = 0.0, converged = 0.0;
      int count = 0;
      for (const auto& r : rows) {
        if (r.solver != spec.label || r.sigma != sigma) continue;
        ++count;
        resolved += r.resolved_fraction;
        converged += r.converged_fraction;
        if (!std::isnan(r.rmse)) {
          rmse_sum += r.rmse;
          ++a.scored_trials;
          pooled.insert(pooled.end(), r.agent_errors.begin(), r.agent_errors.end());
        }
      }
      const double nan = std::numeric_limits<double>::quiet_NaN();
      a.mean_rmse = a.scored_trials > 0 ? rmse_sum / a.scored_trials : nan;
      a.resolved_fraction = count > 0 ? resolved / count : nan;
      a.converged_fraction = count > 0 ? converged / count : nan;
      if (!pooled.empty()) {
        const auto q = error_cdf(std::move(pooled), {50.0, 90.0});
        a.p50 = q[0].second;
        a.p90 = q[1].second;
      } else {
        a.p50 = a.p90 = nan;
      }
      out.push_back(a);
    }
  }
  return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j, const std::filesystem::path& base_dir) {
  Diagnostics d;
  ExperimentConfig c;
  if (!j.is_object()) {
    d.add("<root>", "expected an object");
    d.raise();
  }
  check_keys(j, "<root>", {"scenario", "sigmas", "solvers", "n_trials", "base_seed", "output", "threads"}, d);
  if (j.contains("scenario")) c.scenario = parse_scenario(j.at("scenario"), base_dir, d);
  if (auto v = get<std::vector<double>>(j, "sigmas", "<root>", d)) c.sigmas = *v;
  if (c.sigmas.empty()) d.add("sigmas", "needs at least one noise level");
  for (std::size_t i = 0; i < c.sigmas.size(); ++i) {
    if (!(c.sigmas[i] >= 0.0) || !std::isfinite(c.sigmas[i])) d.add("sigmas[" + std::to_string(i) + "]", "must be >= 0");
  }
  if (!j.contains("solvers") || !j.at("solvers").is_array() || j.at("solvers").empty()) {
    d.add("solvers", "needs a non-empty list");
  } else {
    std::set<std::string> labels;
    for (std::size_t i = 0; i < j.at("solvers").size(); ++i) {
      const std::string where = "solvers[" + std::to_string(i) + "]";
      c.solvers.push_back(parse_solver(j.at("solvers")[i], where, d));
      if (!labels.insert(c.solvers.back().label).second) d.add(where + ".label", "duplicate label '" + c.solvers.back().label + "'");
    }
  }
  if (auto v = get<int>(j, "n_trials", "<root>", d)) c.n_trials = *v;
  if (c.n_trials < 1) d.add("n_trials", "must be >= 1");
  if (auto v = get<std::uint64_t>(j, "base_seed", "<root>", d)) c.base_seed = *v;
  if (auto v = get<std::string>(j, "output", "<root>", d)) c.output = *v;
  if (auto v = get<int>(j, "threads", "<root>", d)) c.threads = *v;
  if (c.threads < 0) d.add("threads", "must be >= 0");
  if (!d.ok()) d.raise();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorCode::ConfigError, "cannot open config '" + file.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, "config '" + file.string() + "' is not valid JSON: " + e.what());
  }
  return parse_experiment_config(j, file.parent_path());
}

const AggregateRow& MetricTable::aggregate(const std::string& solver, double sigma) const {
  for (const auto& a : aggregates) {
    if (a.solver == solver && a.sigma == sigma) return a;
  }
  fail(ErrorCode::InvalidArgument, "no aggregate for solver '" + solver + "' at sigma " + fmt(sigma));
}

MetricTable run_experiment(const ExperimentConfig& config) {
  if (config.sigmas.empty() || config.solvers.empty() || config.n_trials < 1) {
    fail(ErrorCode::ConfigError, "experiment needs sigmas, solvers and n_trials >= 1");
  }
  const std::size_t n_sigma = config.sigmas.size();
  const std::size_t n_tasks = n_sigma * static_cast<std::size_t>(config.n_trials);

  std::vector<std::optional<scenario::NetworkScenario>> scenarios(static_cast<std::size_t>(config.n_trials));
  const bool per_trial = !config.scenario.fixed && config.scenario.resample_per_trial;
  if (!per_trial) {
    const auto sc = scenario_for_trial(config.scenario, 0);
    for (auto& s : scenarios) s = sc;
  }

  std::vector<TrialOutput> results(n_tasks);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= n_tasks) return;
      const std::size_t sigma_index = task % n_sigma;
      const int trial = static_cast<int>(task / n_sigma);
      try {
        const auto sc = per_trial ? scenario_for_trial(config.scenario, trial) : *scenarios[static_cast<std::size_t>(trial)];
        results[task] = run_trial(config, sigma_index, trial, sc);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n_tasks;
      }
    }
  };
  std::size_t n_threads = config.threads > 0 ? static_cast<std::size_t>(config.threads)
                                             : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, n_tasks);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  // Deterministic merge: solver order, then sigma order, then trial.
  MetricTable table;
  for (std::size_t s = 0; s < config.solvers.size(); ++s) {
    for (std::size_t si = 0; si < n_sigma; ++si) {
      for (int trial = 0; trial < config.n_trials; ++trial) {
        table.rows.push_back(results[static_cast<std::size_t>(trial) * n_sigma + si].rows[s]);
      }
    }
  }
  table.aggregates = aggregate(config, table.rows);

  // The aggregate must match a direct recomputation from the rows.
  for (const auto& a : table.aggregates) {
    std::vector<double> vals;
    for (const auto& r : table.rows) {
      if (r.solver == a.solver && r.sigma == a.sigma && !std::isnan(r.rmse)) vals.push_back(r.rmse);
    }
    const double mean = vals.empty() ? std::numeric_limits<double>::quiet_NaN()
                                     : std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
    const bool same = (std::isnan(mean) && std::isnan(a.mean_rmse)) || std::abs(mean - a.mean_rmse) <= 1e-12 * std::abs(mean);
    if (!same) throw std::logic_error("aggregate RMSE disagrees with per-trial rows");
  }
  return table;
}

void write_metrics_csv(std::ostream& out, const MetricTable& table) {
  out << "solver,sigma,trial,rmse_m,resolved_fraction,converged_fraction,range_hash\n";
  for (const auto& r : table.rows) {
    out << r.solver << ',' << fmt(r.sigma) << ',' << r.trial << ',' << fmt(r.rmse) << ',' << fmt(r.resolved_fraction)
        << ',' << fmt(r.converged_fraction) << ',' << r.range_hash << '\n';
  }
}

void write_timing_csv(std::ostream& out, const MetricTable& table) {
  out << "solver,sigma,trial,wall_time_s\n";
  for (const auto& r : table.rows) out << r.solver << ',' << fmt(r.sigma) << ',' << r.trial << ',' << fmt(r.wall_time_s) << '\n';
}

nlohmann::json aggregate_json(const MetricTable& table) {
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  json list = json::array();
  for (const auto& a : table.aggregates) {
    list.push_back({{"solver", a.solver},
                    {"sigma", a.sigma},
                    {"mean_rmse", num(a.mean_rmse)},
                    {"p50", num(a.p50)},
                    {"p90", num(a.p90)},
                    {"resolved_fraction", num(a.resolved_fraction)},
                    {"converged_fraction", num(a.converged_fraction)},
                    {"scored_trials", a.scored_trials}});
  }
  return {{"aggregates", list}};
}

void write_outputs(const std::filesystem::path& dir, const MetricTable& table) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) fail(ErrorCode::InvalidArgument, "cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("metrics.csv");
    write_metrics_csv(f, table);
  }
  {
    auto f = open("timing.csv");
    write_timing_csv(f, table);
  }
  auto f = open("aggregate.json");
  f << aggregate_json(table).dump(2) << '\n';
}

std::vector<double> per_agent_errors(const std::map<NodeId, Position>& estimates,
                                     const std::map<NodeId, Position>& truth) {
  require(estimates.size() == truth.size(), "estimates and truth cover different agents");
  std::vector<double> errors;
  errors.reserve(truth.size());
  for (const auto& [id, p] : truth) {
    auto it = estimates.find(id);
    require(it != estimates.end(), "estimates and truth cover different agents");
    require(it->second.size() == p.size(), "estimate dimension differs from truth");
    errors.push_back((it->second - p).norm());
  }
  return errors;
}

double compute_rmse(const std::map<NodeId, Position>& estimates, const std::map<NodeId, Position>& truth) {
  if (truth.empty() && estimates.empty()) fail(ErrorCode::EmptyResolvedSet, "no resolved agents to score");
  const auto errors = per_agent_errors(estimates, truth);
  double s = 0.0;
  for (double e : errors) s += e * e;
  return std::sqrt(s / static_cast<double>(errors.size()));
}

std::vector<std::pair<double, double>> error_cdf(std::vector<double> errors, const std::vector<double>& percentiles) {
  require(!errors.empty(), "error list is empty");
  std::sort(errors.begin(), errors.end());
  const double n = static_cast<double>(errors.size());
  std::vector<std::pair<double, double>> out;
  for (double p : percentiles) {
    require(p >= 0.0 && p <= 100.0, "percentiles must lie in [0, 100]");
    const double h = (n - 1.0) * p / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, errors.size() - 1);
    out.emplace_back(p, errors[lo] + (h - static_cast<double>(lo)) * (errors[hi] - errors[lo]));
  }
  return out;
}

std::string range_hash(const scenario::RangeSet& ranges) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& m : ranges.measurements()) {
    const std::uint32_t a = index_of(m.edge.a), b = index_of(m.edge.b);
    mix(&a, sizeof a);
    mix(&b, sizeof b);
    mix(&m.range, sizeof m.range);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace radloc::harness
