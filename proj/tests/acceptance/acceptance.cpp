// Acceptance suite: one PASS/FAIL line per headline property of the library.
// Tolerances are fixed here; the process exits non-zero if any line fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "radloc/aoa.hpp"
#include "radloc/bayes.hpp"
#include "radloc/bounds.hpp"
#include "radloc/coop.hpp"
#include "radloc/fingerprint.hpp"
#include "radloc/geomsolve.hpp"
#include "radloc/harness.hpp"
#include "radloc/scenario.hpp"

using namespace radloc;

namespace {

constexpr double kExactTol = 1e-6;
constexpr double kGridTol = 1e-3;
constexpr double kFoyStartRadius = 0.05;
constexpr double kBpCellTol = 1e-9;
constexpr double kNbpCells = 3.0;
constexpr double kAngleTolDeg = 1e-4;
constexpr double kPriorLimitTol = 1e-3;
constexpr double kZzlbCrlbMax = 1.1;
constexpr double kRelaxationFactor = 1.5;
constexpr double kBenchmarkBudgetS = 300.0;

int failures = 0;

void report(const char* name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void info(const char* name, const std::string& detail) {
  std::printf("INFO %s: %s\n", name, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Position pt(double x, double y) {
  Position p(2);
  p << x, y;
  return p;
}

double elapsed_s(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

// ---------------------------------------------------------------------------------------
// Benchmark ordering

void benchmark_ordering() {
  const auto j = nlohmann::json::parse(R"({
    "scenario": {"n_anchors": 12, "n_agents": 50, "side": 1.0, "range": 0.3, "seed": 7, "resample_per_trial": true},
    "sigmas": [0.02, 0.05, 0.1],
    "solvers": [
      {"name": "ls", "cooperative": false},
      {"name": "ls", "cooperative": true},
      {"name": "ls", "cooperative": false, "connectivity": "full"},
      {"name": "ls", "cooperative": true, "connectivity": "full"},
      {"name": "mds", "connectivity": "full"},
      {"name": "pocs", "acceleration": "nesterov"},
      {"name": "admm", "warm_start": "pocs", "acceleration": "nesterov"}
    ],
    "n_trials": 100,
    "base_seed": 1
  })");
  const auto cfg = harness::parse_experiment_config(j);
  const auto start = std::chrono::steady_clock::now();
  const auto table = harness::run_experiment(cfg);
  const double wall = elapsed_s(start);

  bool ok = wall < kBenchmarkBudgetS;
  std::ostringstream detail;
  detail << "100 placements x 3 sigmas in " << fmt("%.1f", wall) << " s;";
  std::ostringstream strict;
  for (double s : cfg.sigmas) {
    auto m = [&](const char* label) { return table.aggregate(label, s).mean_rmse; };
    const double anchor = m("ls-anchor"), coop = m("ls-coop");
    const double anchor_full = m("ls-anchor-full"), coop_full = m("ls-coop-full"), mds = m("mds-full");
    const double pocs = m("pocs"), admm = m("admm-pocs");
    ok = ok && coop < anchor && coop_full < anchor_full && mds >= coop_full && pocs <= kRelaxationFactor * coop &&
         admm <= kRelaxationFactor * coop;
    detail << " sigma " << s << ": ls-coop " << fmt("%.4f", coop) << " < ls-anchor " << fmt("%.4f", anchor)
           << " (full " << fmt("%.4f", coop_full) << " < " << fmt("%.4f", anchor_full) << "), mds-full "
           << fmt("%.4f", mds) << " >= ls-coop-full, pocs/ls-coop " << fmt("%.2f", pocs / coop) << ", admm/ls-coop "
           << fmt("%.2f", admm / coop) << ";";
    strict << " sigma " << s << ": pocs " << fmt("%.1f", pocs / coop_full) << "x, admm " << fmt("%.1f", admm / coop_full)
           << "x;";
  }
  report("benchmark-ordering", ok, detail.str());
  info("relaxation-vs-fully-connected-ls",
       "range-limited POCS and ADMM against fully connected cooperative LS (not a pass criterion):" + strict.str());
}

// ---------------------------------------------------------------------------------------
// Noiseless recovery

// Convex hull of 2-D points, counter-clockwise (monotone chain).
std::vector<Position> convex_hull(std::vector<Position> p) {
  std::sort(p.begin(), p.end(), [](const Position& a, const Position& b) {
    return a(0) < b(0) || (a(0) == b(0) && a(1) < b(1));
  });
  auto cross = [](const Position& o, const Position& a, const Position& b) {
    return (a(0) - o(0)) * (b(1) - o(1)) - (a(1) - o(1)) * (b(0) - o(0));
  };
  std::vector<Position> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  h.resize(k - 1);
  return h;
}

// Distance from p to the hull boundary, negative outside.
double inside_margin(const std::vector<Position>& hull, const Position& p) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Position& a = hull[i];
    const Position& b = hull[(i + 1) % hull.size()];
    const Position e = b - a;
    m = std::min(m, (e(0) * (p(1) - a(1)) - e(1) * (p(0) - a(0))) / e.norm());
  }
  return m;
}

// Admissible: fully connected, 12 perimeter anchors, agents at least 0.02 inside the
// anchors' convex hull. Inside the hull the range-ball relaxation is tight, so every
// solver, convex or not, has the truth as its unique noiseless answer.
scenario::NetworkScenario admissible_instance(std::uint64_t seed, int n_agents) {
  const auto frame = scenario::generate_benchmark_scenario({12, 0, 1.0, 10.0}, RngSeed{seed});
  std::vector<Position> anchors;
  std::vector<scenario::Node> nodes = frame.nodes();
  for (const auto& n : nodes) anchors.push_back(n.position);
  const auto hull = convex_hull(anchors);
  Rng rng(derive_seed(seed, {77}));
  while (static_cast<int>(nodes.size()) < 12 + n_agents) {
    const Position p = pt(rng.uniform(), rng.uniform());
    if (inside_margin(hull, p) < 0.02) continue;
    nodes.push_back({node_id(static_cast<std::uint32_t>(nodes.size())), scenario::Role::Agent, p, true});
  }
  return scenario::NetworkScenario::with_range_edges(2, 10.0, nodes);
}

scenario::RangeSet exact_ranges(const scenario::NetworkScenario& sc) {
  std::vector<scenario::Measurement> m;
  for (const auto& e : sc.edges()) m.push_back({e, (sc.position(e.a) - sc.position(e.b)).norm()});
  return scenario::RangeSet(std::move(m), 0.0);
}

double worst_error(const scenario::NetworkScenario& sc, const coop::PositionEstimateSet& out) {
  double w = 0.0;
  for (auto id : sc.agents()) {
    if (out.status.at(id) != coop::AgentStatus::Resolved) return std::numeric_limits<double>::infinity();
    w = std::max(w, (out.positions.at(id) - sc.position(id)).norm());
  }
  return w;
}

void noiseless_recovery() {
  const int n_instances = 50;
  const std::vector<std::string> names{"trilateration", "foy", "ls", "sequential", "mds",
                                       "pocs",          "admm", "grid-map"};
  std::vector<int> passed(names.size(), 0);
  std::vector<double> worst(names.size(), 0.0);
  int centroid_ok = 0, centroid_runs = 0;
  auto tally = [&](std::size_t k, double err, double tol) {
    worst[k] = std::max(worst[k], err);
    if (err <= tol) ++passed[k];
  };

  for (int inst = 0; inst < n_instances; ++inst) {
    const auto sc = admissible_instance(1000 + static_cast<std::uint64_t>(inst), 20);
    const auto r = exact_ranges(sc);
    std::vector<Position> anchors;
    for (auto id : sc.anchors()) anchors.push_back(sc.position(id));

    Rng start_rng(derive_seed(static_cast<std::uint64_t>(inst), {78}));
    double tri = 0.0, foy = 0.0;
    for (auto id : sc.agents()) {
      std::vector<double> ranges;
      for (const auto& a : anchors) ranges.push_back((a - sc.position(id)).norm());
      tri = std::max(tri, (geomsolve::trilaterate(anchors, ranges).estimate - sc.position(id)).norm());

      geomsolve::TdoaSet t;
      t.reference = anchors[0];
      for (std::size_t k = 1; k < anchors.size(); ++k) {
        t.anchors.push_back(anchors[k]);
        t.differences.push_back(ranges[k] - ranges[0]);
      }
      // Foy is a local method: its admissible start is a coarse fix within 5 cm.
      const double ang = start_rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double rad = kFoyStartRadius * std::sqrt(start_rng.uniform());
      const Position start = sc.position(id) + rad * pt(std::cos(ang), std::sin(ang));
      const auto f = geomsolve::foy_tdoa(t, start);
      foy = std::max(foy, f.converged ? (f.estimate - sc.position(id)).norm() : std::numeric_limits<double>::infinity());
      try {
        const auto c = geomsolve::foy_tdoa(t, pt(0.5, 0.5));
        centroid_ok += c.converged && (c.estimate - sc.position(id)).norm() <= kExactTol;
      } catch (const Error&) {
      }
      ++centroid_runs;
    }
    tally(0, tri, kExactTol);
    tally(1, foy, kExactTol);

    coop::SolverConfig cfg;
    cfg.max_iterations = 50000;
    cfg.step_tolerance = 1e-12;
    tally(2, worst_error(sc, coop::solve_ls_gradient(sc, r, cfg, true)), kExactTol);
    tally(3, worst_error(sc, coop::solve_sequential(sc, r, cfg)), kExactTol);
    tally(4, worst_error(sc, coop::solve_mds_smacof(sc, r, cfg)), kExactTol);
    auto fast = cfg;
    fast.acceleration = coop::Acceleration::Nesterov;
    const auto pocs = coop::solve_pocs(sc, r, fast);
    tally(5, worst_error(sc, pocs), kExactTol);
    auto warm = cfg;
    warm.initializer = coop::WarmStart{pocs.positions};
    coop::AdmmOptions admm;
    admm.primal_tolerance = admm.dual_tolerance = 1e-9;
    tally(6, worst_error(sc, coop::solve_admm(sc, r, warm, admm)), kExactTol);

    // Grid MAP for the first agent alone at 1 mm resolution.
    const NodeId target = sc.agents().front();
    std::vector<scenario::Node> nodes;
    for (auto id : sc.anchors()) nodes.push_back(sc.node(id));
    nodes.push_back({node_id(static_cast<std::uint32_t>(nodes.size())), scenario::Role::Agent, sc.position(target), true});
    const auto single = scenario::NetworkScenario::with_range_edges(2, 10.0, nodes);
    const bayes::GridPrior prior{bayes::Grid(pt(0, 0), pt(1, 1), 1000), {}};
    const auto post = bayes::grid_posterior(single, exact_ranges(single), prior, bayes::RangeLikelihood::additive(1e-3));
    const auto map = bayes::estimate_map(post.begin()->second);
    tally(7, (map - sc.position(target)).norm(), kGridTol);
  }

  bool ok = true;
  std::ostringstream detail;
  detail << n_instances << " admissible instances (12 anchors, 20 agents inside the anchor hull, exact ranges, Foy started within 5 cm);";
  for (std::size_t k = 0; k < names.size(); ++k) {
    ok = ok && passed[k] == n_instances;
    detail << ' ' << names[k] << ' ' << passed[k] << '/' << n_instances << " (worst " << fmt("%.2g", worst[k]) << ')';
  }
  report("noiseless-recovery", ok, detail.str());
  info("foy-from-centroid", "Foy started at the square's centre instead: " + std::to_string(centroid_ok) + "/" +
                                std::to_string(centroid_runs) + " agents recovered (not a pass criterion)");
}

// ---------------------------------------------------------------------------------------
// BP on trees and NBP

void bp_tree_exactness() {
  const bayes::GridPrior prior{bayes::Grid(pt(0, 0), pt(1, 1), 100), {}};
  const double cell = 0.01;
  const auto lik = bayes::RangeLikelihood::multiplicative(0.05);
  double worst_cell = 0.0, worst_nbp = 0.0;
  int bp_ok = 0, nbp_ok = 0;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    Rng rng(derive_seed(inst, {91}));
    std::vector<scenario::Node> nodes;
    for (std::uint32_t k = 0; k < 3; ++k)
      nodes.push_back({node_id(k), scenario::Role::Anchor, pt(rng.uniform(), rng.uniform()), true});
    nodes.push_back({node_id(3), scenario::Role::Agent, pt(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)), true});
    const auto sc = scenario::NetworkScenario(
        2, 2.0, nodes,
        {scenario::make_edge(node_id(0), node_id(3)), scenario::make_edge(node_id(1), node_id(3)),
         scenario::make_edge(node_id(2), node_id(3))});
    const auto r = scenario::synthesize_ranges(sc, 0.05, RngSeed{inst});

    const auto exact = bayes::grid_posterior(sc, r, prior, lik).at(node_id(3));
    const auto bp = bayes::run_bp(sc, r, prior, lik);
    double w = 0.0;
    for (std::size_t k = 0; k < exact.p.size(); ++k) w = std::max(w, std::abs(bp.beliefs.at(node_id(3)).p[k] - exact.p[k]));
    worst_cell = std::max(worst_cell, w);
    bp_ok += w <= kBpCellTol;

    const auto nbp = bayes::run_nbp(sc, r, prior, lik, 2000, {}, RngSeed{inst});
    const double d = (nbp.mmse.at(node_id(3)) - bayes::estimate_mmse(exact)).norm();
    worst_nbp = std::max(worst_nbp, d / cell);
    nbp_ok += d <= kNbpCells * cell;
  }
  report("bp-tree-exactness", bp_ok == 20 && nbp_ok == 20,
         "20 one-agent/three-anchor instances: BP cells " + std::to_string(bp_ok) + "/20 within 1e-9 (worst " +
             fmt("%.2g", worst_cell) + "), NBP 2000 particles " + std::to_string(nbp_ok) +
             "/20 within 3 cells (worst " + fmt("%.2f", worst_nbp) + " cells)");
}

// ---------------------------------------------------------------------------------------
// AoA

// Coarse grid argmax, then a fine search around it.
double music_peak(const aoa::ArrayCovariance& c, const aoa::ArrayGeometry& g) {
  auto best = [](const aoa::AngularSpectrum& s) {
    return s.angles_deg[static_cast<std::size_t>(std::max_element(s.values.begin(), s.values.end()) - s.values.begin())];
  };
  double a = best(aoa::music_spectrum(c, g, aoa::angle_grid(), 1));
  for (double step : {1e-3, 1e-5, 1e-7}) {
    a = best(aoa::music_spectrum(c, g, aoa::angle_grid(a - 200 * step, a + 200 * step, step), 1));
  }
  return a;
}

void aoa_suite() {
  const auto g = aoa::ArrayGeometry::ula(8);
  Rng rng(123);
  double music_worst = 0.0, esprit_worst = 0.0;
  for (int t = 0; t < 30; ++t) {
    const double angle = rng.uniform(-70.0, 70.0);
    const double noise = std::pow(10.0, rng.uniform(-3.0, 1.0));
    const auto c = aoa::synthesize_snapshots(g, {{angle, 1.0}}, noise, 1, RngSeed{0}).exact;
    music_worst = std::max(music_worst, std::abs(music_peak(c, g) - angle));
    esprit_worst = std::max(esprit_worst, std::abs(aoa::esprit(c, g, 1).angles_deg[0] - angle));
  }

  // 3 degree split at broadside, 30 dB per source over unit noise.
  const auto two = aoa::synthesize_snapshots(g, {{-1.5, 1000.0}, {1.5, 1000.0}}, 1.0, 1, RngSeed{0}).exact;
  const auto grid = aoa::angle_grid();
  const auto nb = aoa::find_peaks(aoa::bartlett_spectrum(two, g, grid)).size();
  const auto nc = aoa::find_peaks(aoa::capon_spectrum(two, g, grid)).size();
  const auto nm = aoa::find_peaks(aoa::music_spectrum(two, g, grid, 2)).size();

  const bool ok = music_worst < kAngleTolDeg && esprit_worst < kAngleTolDeg && nb == 1 && nc == 2 && nm == 2;
  report("aoa-suite", ok,
         "30 single sources: MUSIC worst " + fmt("%.2g", music_worst) + " deg, ESPRIT worst " +
             fmt("%.2g", esprit_worst) + " deg; M=8, 3 deg split at 30 dB: peaks Bartlett " + std::to_string(nb) +
             ", Capon " + std::to_string(nc) + ", MUSIC " + std::to_string(nm));
}

// ---------------------------------------------------------------------------------------
// Bounds

void bounds_suite() {
  const double df = 15e3;
  const auto s = bounds::DiscreteSpectrum::flat(1201, df);
  const double t_obs = 1.0 / df;
  const double prior = kSpeedOfLight * kSpeedOfLight * t_obs * t_obs / 12.0;

  const double low = bounds::zzlb_range_variance(s, 1e-8, t_obs).variance / prior;

  bool monotone = true;
  double previous = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 20; ++k) {
    const double snr = std::pow(10.0, -3.0 + 7.0 * k / 19.0);
    const double v = bounds::zzlb_range_variance(s, snr, t_obs).variance;
    monotone = monotone && v <= previous && v >= 0.0 && v <= prior;
    previous = v;
  }

  // High-SNR check uses the root-product Q argument and a prior window of half the
  // autocorrelation period (phi repeats every 1 / spacing).
  const double crlb = bounds::crlb_range_variance(s, 1e4).variance;
  const double half = 0.5 / df;
  const double ratio =
      bounds::zzlb_range_variance(s, 1e4, half, {256, bounds::QArgument::RootProduct}).variance / crlb;
  const double literal =
      bounds::zzlb_range_variance(s, 1e4, half, {256, bounds::QArgument::Literal}).variance / crlb;
  const double floor = bounds::tdoa_error_floor(4e6, 2);

  const bool ok = std::abs(low - 1.0) < kPriorLimitTol && monotone && ratio < kZzlbCrlbMax && floor >= 100.0 &&
                  floor <= 110.0;
  report("bounds", ok,
         "ZZLB/prior at Es/N0=1e-8 " + fmt("%.6f", low) + ", monotone over 20 SNRs " + (monotone ? "yes" : "no") +
             ", ZZLB/CRLB at 1e4 (1201 flat carriers, root-product) " + fmt("%.4f", ratio) +
             ", TDoA floor 4 MHz 2-D " + fmt("%.1f", floor) + " m");
  info("zzlb-literal-grouping", "ZZLB/CRLB at 1e4 with sqrt(SNR)*(1-Re phi) inside Q: " + fmt("%.1f", literal));
}

// ---------------------------------------------------------------------------------------
// Fingerprinting

fingerprint::RadioMap synthetic_map() {
  const std::vector<Position> aps{pt(-1, -1), pt(11, -1), pt(5, 5), pt(-1, 4), pt(11, 4), pt(5, -2), pt(2, 6)};
  std::vector<fingerprint::Fingerprint> entries;
  for (int j = 0; j < 4; ++j) {
    for (int i = 0; i < 11; ++i) {
      fingerprint::Fingerprint f{pt(i, j), {}};
      for (std::size_t a = 0; a < aps.size(); ++a)
        f.readings["ap" + std::to_string(a)] = -30.0 - 25.0 * std::log10((pt(i, j) - aps[a]).norm());
      entries.push_back(f);
    }
  }
  return fingerprint::RadioMap(entries);
}

void fingerprint_suite() {
  const auto map = synthetic_map();
  int exact = 0;
  for (const auto& e : map.entries()) exact += fingerprint::classical_locate(map, e.readings, 1).position == e.location;

  Rng rng(55);
  fingerprint::Readings query = map.entries()[17].readings;
  for (auto& [ap, v] : query) v += rng.normal(0.0, 4.0);
  query.erase("ap3");
  const fingerprint::RbfOptions opts{fingerprint::RankMetric::Spearman, 3, std::nullopt};
  const auto base = fingerprint::rbf_locate(map, query, opts);
  int invariant = 0;
  for (int t = 0; t < 50; ++t) {
    const double a = rng.uniform(0.1, 5.0), b = rng.uniform(-40, 40), c = rng.uniform(0.0, 10.0), d = rng.uniform(0, 2);
    fingerprint::Readings moved;
    for (const auto& [ap, v] : query) moved[ap] = a * v + b + c * std::tanh((v + 60.0) / 8.0) + d * std::exp(v / 15.0);
    const auto m = fingerprint::rbf_locate(map, moved, opts);
    invariant += m.position.size() == base.position.size() &&
                 std::memcmp(m.position.data(), base.position.data(), sizeof(double) * 2) == 0 &&
                 m.neighbors == base.neighbors;
  }
  report("fingerprinting", exact == 44 && invariant == 50,
         "RBF bitwise-identical under " + std::to_string(invariant) + "/50 increasing transforms; classical k=1 " +
             std::to_string(exact) + "/44 exact");
}

// ---------------------------------------------------------------------------------------
// Determinism

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void determinism() {
  const auto j = nlohmann::json::parse(R"({
    "scenario": {"n_anchors": 12, "n_agents": 50, "side": 1.0, "range": 0.3, "seed": 5, "resample_per_trial": true},
    "sigmas": [0.02, 0.1],
    "solvers": [{"name": "ls"}, {"name": "ls", "cooperative": false}, {"name": "sequential"},
                {"name": "mds", "connectivity": "full"}, {"name": "pocs"},
                {"name": "admm", "warm_start": "pocs", "max_iterations": 3000}],
    "n_trials": 6,
    "base_seed": 42
  })");
  auto cfg = harness::parse_experiment_config(j);
  const auto root = std::filesystem::temp_directory_path() / "radloc_acceptance_determinism";
  std::filesystem::remove_all(root);
  cfg.threads = 0;
  harness::write_outputs(root / "a", harness::run_experiment(cfg));
  cfg.threads = 1;
  harness::write_outputs(root / "b", harness::run_experiment(cfg));
  const bool csv = slurp(root / "a" / "metrics.csv") == slurp(root / "b" / "metrics.csv");
  const bool agg = slurp(root / "a" / "aggregate.json") == slurp(root / "b" / "aggregate.json");
  report("determinism", csv && agg && !slurp(root / "a" / "metrics.csv").empty(),
         std::string("two runs (parallel vs single thread): metrics.csv ") + (csv ? "identical" : "differs") +
             ", aggregate.json " + (agg ? "identical" : "differs"));
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void()>>> steps{
      {"benchmark-ordering", benchmark_ordering}, {"noiseless-recovery", noiseless_recovery},
      {"bp-tree-exactness", bp_tree_exactness},   {"aoa-suite", aoa_suite},
      {"bounds", bounds_suite},                   {"fingerprinting", fingerprint_suite},
      {"determinism", determinism}};
  for (const auto& [name, run] : steps) {
    try {
      run();
    } catch (const std::exception& e) {
      report(name, false, std::string("threw: ") + e.what());
    }
  }
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
