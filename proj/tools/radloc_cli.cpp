// radloc: command-line front end for the localization library.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "radloc/aoa.hpp"
#include "radloc/bounds.hpp"
#include "radloc/fingerprint.hpp"
#include "radloc/harness.hpp"
#include "radloc/scenario.hpp"

namespace {

using namespace radloc;

constexpr int kExitConfig = 2;

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) fail(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  return f;
}

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<int> trials,
                 std::optional<std::string> out, std::optional<int> threads) {
  auto config = harness::load_experiment_config(config_path);
  if (seed) config.base_seed = *seed;
  if (trials) {
    if (*trials < 1) fail(ErrorCode::ConfigError, "--trials must be >= 1");
    config.n_trials = *trials;
  }
  if (out) config.output = *out;
  if (threads) config.threads = *threads;
  if (config.output.empty()) config.output = "results";
  const auto table = harness::run_experiment(config);
  harness::write_outputs(config.output, table);
  std::printf("%-16s %8s %12s %12s %12s %9s\n", "solver", "sigma", "mean_rmse", "p50", "p90", "resolved");
  for (const auto& a : table.aggregates) {
    std::printf("%-16s %8.4f %12.6f %12.6f %12.6f %9.3f\n", a.solver.c_str(), a.sigma, a.mean_rmse, a.p50, a.p90,
                a.resolved_fraction);
  }
  std::printf("wrote %s/{metrics.csv,timing.csv,aggregate.json}\n", config.output.string().c_str());
  return 0;
}

aoa::Source parse_source(const std::string& text) {
  aoa::Source s;
  const auto colon = text.find(':');
  try {
    s.angle_deg = std::stod(text.substr(0, colon));
    if (colon != std::string::npos) s.power = std::stod(text.substr(colon + 1));
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidArgument, "source must look like ANGLE[:POWER], got '" + text + "'");
  }
  return s;
}

struct AoaArgs {
  int elements = 8;
  double spacing = 0.5;
  std::vector<std::string> sources;
  double noise = 1.0;
  std::size_t snapshots = 0;
  std::string method = "music";
  int n_sources = 0;
  std::uint64_t seed = 1;
  double step = 0.1;
  std::string out;
};

int cmd_aoa(const AoaArgs& a) {
  const auto geometry = aoa::ArrayGeometry::ula(a.elements, a.spacing);
  if (geometry.grating_lobe_risk()) std::fprintf(stderr, "warning: spacing above half a wavelength admits grating lobes\n");
  std::vector<aoa::Source> sources;
  for (const auto& s : a.sources) sources.push_back(parse_source(s));
  const auto snaps = aoa::synthesize_snapshots(geometry, sources, a.noise, a.snapshots, RngSeed{a.seed});
  const auto cov = a.snapshots == 0 ? snaps.exact : aoa::sample_covariance(snaps.samples);
  const int k = a.n_sources > 0 ? a.n_sources : static_cast<int>(sources.size());

  if (a.method == "esprit") {
    const auto r = aoa::esprit(cov, geometry, k);
    std::printf("angle_deg\n");
    for (double angle : r.angles_deg) std::printf("%.6f\n", angle);
    return 0;
  }
  const auto grid = aoa::angle_grid(-90.0, 90.0, a.step);
  aoa::AngularSpectrum spectrum;
  if (a.method == "bartlett") spectrum = aoa::bartlett_spectrum(cov, geometry, grid);
  else if (a.method == "capon") spectrum = aoa::capon_spectrum(cov, geometry, grid);
  else if (a.method == "music") spectrum = aoa::music_spectrum(cov, geometry, grid, k);
  else fail(ErrorCode::InvalidArgument, "unknown method '" + a.method + "'");
  if (!a.out.empty()) {
    auto f = open_out(a.out);
    aoa::write_spectrum_csv(f, spectrum);
  }
  std::printf("%10s %14s\n", "peak_deg", "value");
  for (auto i : aoa::find_peaks(spectrum)) std::printf("%10.2f %14.6g\n", spectrum.angles_deg[i], spectrum.values[i]);
  return 0;
}

struct BoundsArgs {
  std::string spectrum = "flat";
  int carriers = 1201;
  double spacing = 15e3;
  double t_obs = 0.0;
  double snr_min_db = -20.0;
  double snr_max_db = 40.0;
  double snr_step_db = 2.0;
  std::string mode = "literal";
  int points = 256;
  std::string out;
};

bounds::DiscreteSpectrum load_power_csv(const std::string& path, double spacing) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidArgument, "cannot open spectrum '" + path + "'");
  std::vector<double> power;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    // Last column holds |S_l|^2; a non-numeric first row is a header.
    const auto comma = line.find_last_of(',');
    const std::string cell = comma == std::string::npos ? line : line.substr(comma + 1);
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str()) {
      if (power.empty()) continue;
      fail(ErrorCode::ParseError, "bad spectrum value '" + cell + "'");
    }
    power.push_back(v);
  }
  return bounds::DiscreteSpectrum::from_power(power, spacing);
}

int cmd_bounds(const BoundsArgs& a) {
  const auto spectrum = a.spectrum == "flat"   ? bounds::DiscreteSpectrum::flat(a.carriers, a.spacing)
                        : a.spectrum == "edge" ? bounds::DiscreteSpectrum::edge(a.carriers, a.spacing)
                                               : load_power_csv(a.spectrum, a.spacing);
  bounds::ZzlbOptions opt;
  opt.quadrature_points = a.points;
  if (a.mode == "literal") opt.argument = bounds::QArgument::Literal;
  else if (a.mode == "root-product") opt.argument = bounds::QArgument::RootProduct;
  else fail(ErrorCode::InvalidArgument, "mode must be 'literal' or 'root-product'");
  const double t_obs = a.t_obs > 0.0 ? a.t_obs : 0.5 / spectrum.spacing();
  require(a.snr_step_db > 0.0 && a.snr_max_db >= a.snr_min_db, "SNR sweep needs min <= max and a positive step");

  std::ostringstream csv;
  csv << "snr_db,crlb_std_m,zzlb_std_m\n";
  const int n = static_cast<int>(std::floor((a.snr_max_db - a.snr_min_db) / a.snr_step_db + 1e-9)) + 1;
  for (int i = 0; i < n; ++i) {
    const double db = a.snr_min_db + i * a.snr_step_db;
    const double snr = std::pow(10.0, db / 10.0);
    double crlb = std::numeric_limits<double>::quiet_NaN();
    try {
      crlb = bounds::crlb_range_variance(spectrum, snr).std;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroEquivalentBandwidth) throw;
    }
    const double zz = bounds::zzlb_range_variance(spectrum, snr, t_obs, opt).std;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.6g,%.9g,%.9g\n", db, crlb, zz);
    csv << buf;
  }
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    auto f = open_out(a.out);
    f << csv.str();
  }
  return 0;
}

fingerprint::RadioMap load_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidArgument, "cannot open radio map '" + path + "'");
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    try {
      return fingerprint::radio_map_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, std::string("radio map JSON: ") + e.what());
    }
  }
  return fingerprint::load_radio_map_csv(in);
}

int cmd_fp_build(const std::string& in, const std::string& out) {
  const auto map = load_map(in);
  auto f = open_out(out);
  if (out.size() >= 4 && out.substr(out.size() - 4) == ".csv") fingerprint::write_radio_map_csv(f, map);
  else f << fingerprint::to_json(map).dump(2) << '\n';
  std::printf("%zu fingerprints, %zu APs\n", map.size(), map.ap_universe().size());
  return 0;
}

int cmd_fp_query(const std::string& map_path, const std::vector<std::string>& readings, const std::string& method,
                 const std::string& metric, int k, double missing) {
  const auto map = load_map(map_path);
  fingerprint::Readings query;
  for (const auto& r : readings) {
    const auto eq = r.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidArgument, "reading must look like AP=RSSI, got '" + r + "'");
    query[r.substr(0, eq)] = std::stod(r.substr(eq + 1));
  }
  fingerprint::Match m;
  if (method == "classical") {
    m = fingerprint::classical_locate(map, query, k, missing);
  } else if (method == "rbf") {
    fingerprint::RbfOptions opt;
    opt.k = k;
    if (metric == "spearman") opt.metric = fingerprint::RankMetric::Spearman;
    else if (metric == "canberra") opt.metric = fingerprint::RankMetric::Canberra;
    else if (metric == "hamming") opt.metric = fingerprint::RankMetric::Hamming;
    else fail(ErrorCode::InvalidArgument, "unknown metric '" + metric + "'");
    m = fingerprint::rbf_locate(map, query, opt);
  } else {
    fail(ErrorCode::InvalidArgument, "method must be 'classical' or 'rbf'");
  }
  std::printf("position");
  for (Eigen::Index d = 0; d < m.position.size(); ++d) std::printf(" %.6f", m.position(d));
  std::printf("\n");
  for (std::size_t i = 0; i < m.neighbors.size(); ++i) std::printf("  entry %zu distance %.6g\n", m.neighbors[i], m.distances[i]);
  return 0;
}

int cmd_scenario(const scenario::BenchmarkSpec& spec, std::uint64_t seed, const std::string& out,
                 std::optional<double> sigma, const std::string& ranges_out) {
  const auto sc = scenario::generate_benchmark_scenario(spec, RngSeed{seed});
  {
    auto f = open_out(out);
    f << scenario::to_json(sc).dump(2) << '\n';
  }
  if (sigma) {
    const auto ranges = scenario::synthesize_ranges(sc, *sigma, RngSeed{seed});
    auto f = open_out(ranges_out.empty() ? "ranges.json" : ranges_out);
    f << scenario::to_json(ranges).dump(2) << '\n';
  }
  std::printf("%zu nodes, %zu edges\n", sc.size(), sc.edges().size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radio localization toolkit"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo experiment from a JSON config");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials, threads;
  std::optional<std::string> out_dir;
  sim->add_option("--config", config_path, "Experiment config JSON")->required();
  sim->add_option("--seed", seed, "Override base_seed");
  sim->add_option("--trials", trials, "Override n_trials");
  sim->add_option("--out", out_dir, "Output directory");
  sim->add_option("--threads", threads, "Worker threads (0 = all cores)");

  auto* aoa_cmd = app.add_subcommand("aoa", "Angle-of-arrival spectrum for a synthetic ULA scene");
  AoaArgs aoa_args;
  aoa_cmd->add_option("--elements", aoa_args.elements, "Array size M");
  aoa_cmd->add_option("--spacing", aoa_args.spacing, "Element spacing in wavelengths");
  aoa_cmd->add_option("--source", aoa_args.sources, "ANGLE[:POWER], repeatable")->required();
  aoa_cmd->add_option("--noise", aoa_args.noise, "Noise power");
  aoa_cmd->add_option("--snapshots", aoa_args.snapshots, "Snapshots (0 = exact covariance)");
  aoa_cmd->add_option("--method", aoa_args.method, "bartlett | capon | music | esprit");
  aoa_cmd->add_option("--n-sources", aoa_args.n_sources, "Model order (defaults to the number of sources)");
  aoa_cmd->add_option("--seed", aoa_args.seed, "Snapshot seed");
  aoa_cmd->add_option("--step", aoa_args.step, "Grid step in degrees");
  aoa_cmd->add_option("--out", aoa_args.out, "Spectrum CSV");

  auto* bounds_cmd = app.add_subcommand("bounds", "CRLB and ZZLB ranging bounds over an SNR sweep");
  BoundsArgs b;
  bounds_cmd->add_option("--spectrum", b.spectrum, "flat | edge | CSV of |S_l|^2 (last column)");
  bounds_cmd->add_option("--carriers", b.carriers, "Number of subcarriers (odd)");
  bounds_cmd->add_option("--spacing", b.spacing, "Subcarrier spacing in Hz");
  bounds_cmd->add_option("--t-obs", b.t_obs, "Prior delay interval in s (default half a symbol)");
  bounds_cmd->add_option("--snr-min-db", b.snr_min_db);
  bounds_cmd->add_option("--snr-max-db", b.snr_max_db);
  bounds_cmd->add_option("--snr-step-db", b.snr_step_db);
  bounds_cmd->add_option("--mode", b.mode, "literal | root-product");
  bounds_cmd->add_option("--points", b.points, "Quadrature panels");
  bounds_cmd->add_option("--out", b.out, "CSV output (stdout if omitted)");

  auto* fp = app.add_subcommand("fingerprint", "Radio map tools");
  fp->require_subcommand(1);
  auto* fp_build = fp->add_subcommand("build", "Convert a radio map between CSV and JSON");
  std::string fp_in, fp_out;
  fp_build->add_option("--in", fp_in, "Radio map CSV or JSON")->required();
  fp_build->add_option("--out", fp_out, "Output .json or .csv")->required();
  auto* fp_query = fp->add_subcommand("query", "Locate a reading set");
  std::string fp_map, fp_method = "rbf", fp_metric = "spearman";
  std::vector<std::string> fp_readings;
  int fp_k = 1;
  double fp_missing = -100.0;
  fp_query->add_option("--map", fp_map, "Radio map CSV or JSON")->required();
  fp_query->add_option("--reading", fp_readings, "AP=RSSI, repeatable")->required();
  fp_query->add_option("--method", fp_method, "classical | rbf");
  fp_query->add_option("--metric", fp_metric, "spearman | canberra | hamming");
  fp_query->add_option("--k", fp_k, "Neighbours to average");
  fp_query->add_option("--missing", fp_missing, "RSSI substituted for absent APs (classical)");

  auto* sc_cmd = app.add_subcommand("scenario", "Generate a benchmark scenario");
  scenario::BenchmarkSpec spec;
  std::uint64_t sc_seed = 1;
  std::string sc_out = "scenario.json", sc_ranges_out;
  std::optional<double> sc_sigma;
  sc_cmd->add_option("--anchors", spec.n_anchors);
  sc_cmd->add_option("--agents", spec.n_agents);
  sc_cmd->add_option("--side", spec.side);
  sc_cmd->add_option("--range", spec.range);
  sc_cmd->add_option("--seed", sc_seed);
  sc_cmd->add_option("--out", sc_out);
  sc_cmd->add_option("--sigma", sc_sigma, "Also synthesize ranges with this noise level");
  sc_cmd->add_option("--ranges-out", sc_ranges_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(config_path, seed, trials, out_dir, threads);
    if (*aoa_cmd) return cmd_aoa(aoa_args);
    if (*bounds_cmd) return cmd_bounds(b);
    if (*fp_build) return cmd_fp_build(fp_in, fp_out);
    if (*fp_query) return cmd_fp_query(fp_map, fp_readings, fp_method, fp_metric, fp_k, fp_missing);
    if (*sc_cmd) return cmd_scenario(spec, sc_seed, sc_out, sc_sigma, sc_ranges_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == ErrorCode::ConfigError ? kExitConfig : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
