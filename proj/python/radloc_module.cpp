#include <fstream>
#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "radloc/aoa.hpp"
#include "radloc/bounds.hpp"
#include "radloc/coop.hpp"
#include "radloc/fingerprint.hpp"
#include "radloc/geomsolve.hpp"
#include "radloc/harness.hpp"
#include "radloc/scenario.hpp"

namespace py = pybind11;
using namespace radloc;

namespace {

using PositionMap = std::map<std::uint32_t, Eigen::VectorXd>;

PositionMap to_py(const std::map<NodeId, Position>& m) {
  PositionMap out;
  for (const auto& [id, p] : m) out[index_of(id)] = p;
  return out;
}

std::map<NodeId, Position> from_py(const PositionMap& m) {
  std::map<NodeId, Position> out;
  for (const auto& [id, p] : m) out[node_id(id)] = p;
  return out;
}

py::dict report_dict(const geomsolve::SolverReport& r) {
  py::dict d;
  d["estimate"] = r.estimate;
  d["iterations"] = r.iterations;
  d["converged"] = r.converged;
  d["residual_norm"] = r.residual_norm;
  d["covariance"] = r.covariance ? py::cast(*r.covariance) : py::none();
  return d;
}

py::dict estimate_dict(const coop::PositionEstimateSet& e) {
  std::map<std::uint32_t, bool> resolved;
  for (const auto& [id, s] : e.status) resolved[index_of(id)] = s == coop::AgentStatus::Resolved;
  py::dict d;
  d["positions"] = to_py(e.positions);
  d["resolved"] = resolved;
  d["objective"] = e.objective_value;
  d["iterations"] = e.iterations;
  d["converged"] = e.converged;
  return d;
}

coop::PositionEstimateSet solve(const scenario::NetworkScenario& sc, const scenario::RangeSet& ranges,
                                const std::string& method, bool cooperative, int max_iterations, double step_tolerance,
                                const std::string& acceleration, double penalty, const std::optional<PositionMap>& init) {
  coop::SolverConfig cfg;
  cfg.max_iterations = max_iterations;
  cfg.step_tolerance = step_tolerance;
  if (acceleration == "nesterov") cfg.acceleration = coop::Acceleration::Nesterov;
  else if (acceleration != "none") fail(ErrorCode::InvalidArgument, "acceleration must be 'none' or 'nesterov'");
  if (init) cfg.initializer = coop::WarmStart{from_py(*init)};

  if (method != "ls" && method != "sequential" && method != "mds" && method != "pocs" && method != "admm") {
    fail(ErrorCode::InvalidArgument, "unknown method '" + method + "'");
  }
  coop::PositionEstimateSet out;
  py::gil_scoped_release release;
  if (method == "ls") out = coop::solve_ls_gradient(sc, ranges, cfg, cooperative);
  else if (method == "sequential") out = coop::solve_sequential(sc, ranges, cfg);
  else if (method == "mds") out = coop::solve_mds_smacof(sc, ranges, cfg);
  else if (method == "pocs") out = coop::solve_pocs(sc, ranges, cfg);
  else out = coop::solve_admm(sc, ranges, cfg, {penalty});
  return out;
}

aoa::ArrayCovariance scene_covariance(int n_elements, const std::vector<std::pair<double, double>>& sources,
                                      double noise_power, std::size_t snapshots, std::uint64_t seed) {
  std::vector<aoa::Source> src;
  for (const auto& [angle, power] : sources) src.push_back({angle, power});
  const auto s = aoa::synthesize_snapshots(aoa::ArrayGeometry::ula(n_elements), src, noise_power,
                                           std::max<std::size_t>(snapshots, 1), RngSeed{seed});
  return snapshots == 0 ? s.exact : aoa::sample_covariance(s.samples);
}

fingerprint::RadioMap make_map(const std::vector<std::pair<Eigen::VectorXd, fingerprint::Readings>>& entries) {
  std::vector<fingerprint::Fingerprint> fps;
  for (const auto& [loc, readings] : entries) fps.push_back({loc, readings});
  return fingerprint::RadioMap(std::move(fps));
}

py::dict match_dict(const fingerprint::Match& m) {
  py::dict d;
  d["position"] = m.position;
  d["neighbors"] = m.neighbors;
  d["distances"] = m.distances;
  return d;
}

}  // namespace

PYBIND11_MODULE(_radloc, m) {
  m.doc() = "Radio localization solvers, bounds and Monte Carlo harness";

  static py::exception<Error> error(m, "RadlocError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  py::class_<scenario::NetworkScenario>(m, "Scenario")
      .def_static(
          "benchmark",
          [](int n_anchors, int n_agents, double side, double range, std::uint64_t seed, bool require_connected) {
            return scenario::generate_benchmark_scenario({n_anchors, n_agents, side, range, require_connected},
                                                         RngSeed{seed});
          },
          py::arg("n_anchors") = 12, py::arg("n_agents") = 50, py::arg("side") = 1.0, py::arg("range") = 0.3,
          py::arg("seed") = 0, py::arg("require_connected") = false)
      .def_static("from_json", [](const std::string& s) { return scenario::scenario_from_json(nlohmann::json::parse(s)); })
      .def("to_json", [](const scenario::NetworkScenario& sc) { return scenario::to_json(sc).dump(); })
      .def_property_readonly("dim", &scenario::NetworkScenario::dim)
      .def_property_readonly("connectivity_range", &scenario::NetworkScenario::connectivity_range)
      .def_property_readonly("anchors",
                             [](const scenario::NetworkScenario& sc) {
                               std::vector<std::uint32_t> ids;
                               for (auto id : sc.anchors()) ids.push_back(index_of(id));
                               return ids;
                             })
      .def_property_readonly("agents",
                             [](const scenario::NetworkScenario& sc) {
                               std::vector<std::uint32_t> ids;
                               for (auto id : sc.agents()) ids.push_back(index_of(id));
                               return ids;
                             })
      .def_property_readonly("positions",
                             [](const scenario::NetworkScenario& sc) {
                               Eigen::MatrixXd p(static_cast<Eigen::Index>(sc.size()), sc.dim());
                               for (const auto& n : sc.nodes()) p.row(index_of(n.id)) = n.position.transpose();
                               return p;
                             })
      .def_property_readonly("edges",
                             [](const scenario::NetworkScenario& sc) {
                               std::vector<std::pair<std::uint32_t, std::uint32_t>> e;
                               for (const auto& x : sc.edges()) e.emplace_back(index_of(x.a), index_of(x.b));
                               return e;
                             })
      .def("fully_connected", &scenario::NetworkScenario::fully_connected)
      .def("__len__", &scenario::NetworkScenario::size);

  py::class_<scenario::RangeSet>(m, "RangeSet")
      .def_static("from_json", [](const std::string& s) { return scenario::ranges_from_json(nlohmann::json::parse(s)); })
      .def("to_json", [](const scenario::RangeSet& r) { return scenario::to_json(r).dump(); })
      .def_property_readonly("sigma", &scenario::RangeSet::noise_sigma)
      .def_property_readonly("seed", &scenario::RangeSet::seed)
      .def_property_readonly("measurements",
                             [](const scenario::RangeSet& r) {
                               std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> out;
                               for (const auto& x : r.measurements())
                                 out.emplace_back(index_of(x.edge.a), index_of(x.edge.b), x.range);
                               return out;
                             })
      .def("__len__", &scenario::RangeSet::size);

  m.def(
      "synthesize_ranges",
      [](const scenario::NetworkScenario& sc, double sigma, std::uint64_t seed) {
        return scenario::synthesize_ranges(sc, sigma, RngSeed{seed});
      },
      py::arg("scenario"), py::arg("sigma"), py::arg("seed"));

  m.def(
      "solve",
      [](const scenario::NetworkScenario& sc, const scenario::RangeSet& r, const std::string& method, bool cooperative,
         int max_iterations, double step_tolerance, const std::string& acceleration, double penalty,
         const std::optional<PositionMap>& init) {
        return estimate_dict(
            solve(sc, r, method, cooperative, max_iterations, step_tolerance, acceleration, penalty, init));
      },
      py::arg("scenario"), py::arg("ranges"), py::arg("method") = "ls",
        py::arg("cooperative") = true, py::arg("max_iterations") = 10000, py::arg("step_tolerance") = 1e-9,
        py::arg("acceleration") = "none", py::arg("penalty") = 10.0, py::arg("init") = py::none(),
        "Cooperative solver: method is ls, sequential, mds, pocs or admm.");

  m.def(
      "stress",
      [](const scenario::NetworkScenario& sc, const scenario::RangeSet& r, const PositionMap& p) {
        return coop::stress(sc, r, from_py(p));
      },
      py::arg("scenario"), py::arg("ranges"), py::arg("positions"));

  m.def(
      "trilaterate",
      [](const std::vector<Eigen::VectorXd>& anchors, const std::vector<double>& ranges) {
        return report_dict(geomsolve::trilaterate(anchors, ranges));
      },
      py::arg("anchors"), py::arg("ranges"));

  m.def(
      "foy_tdoa",
      [](const Eigen::VectorXd& reference, const std::vector<Eigen::VectorXd>& anchors,
         const std::vector<double>& differences, const Eigen::VectorXd& init) {
        return report_dict(geomsolve::foy_tdoa({reference, anchors, differences}, init));
      },
      py::arg("reference"), py::arg("anchors"), py::arg("differences"), py::arg("init"),
      "Differences are ||x - a_i|| - ||x - reference|| in meters.");

  m.def(
      "crlb_range_std",
      [](int n_carriers, double spacing_hz, double es_over_n0) {
        return bounds::crlb_range_variance(bounds::DiscreteSpectrum::flat(n_carriers, spacing_hz), es_over_n0).std;
      },
      py::arg("n_carriers"), py::arg("spacing_hz"), py::arg("es_over_n0"));

  m.def(
      "zzlb_range_std",
      [](int n_carriers, double spacing_hz, double es_over_n0, double t_obs_s, const std::string& argument) {
        bounds::ZzlbOptions o;
        if (argument == "root-product") o.argument = bounds::QArgument::RootProduct;
        else if (argument != "literal") fail(ErrorCode::InvalidArgument, "argument must be 'literal' or 'root-product'");
        return bounds::zzlb_range_variance(bounds::DiscreteSpectrum::flat(n_carriers, spacing_hz), es_over_n0, t_obs_s, o)
            .std;
      },
      py::arg("n_carriers"), py::arg("spacing_hz"), py::arg("es_over_n0"), py::arg("t_obs_s"),
      py::arg("argument") = "literal");

  m.def("tdoa_error_floor", &bounds::tdoa_error_floor, py::arg("bandwidth_hz"), py::arg("dims"));

  m.def(
      "aoa_spectrum",
      [](const std::string& method, int n_elements, const std::vector<std::pair<double, double>>& sources,
         double noise_power, int n_sources, std::size_t snapshots, std::uint64_t seed, double lo, double hi,
         double step) {
        const auto cov = scene_covariance(n_elements, sources, noise_power, snapshots, seed);
        const auto g = aoa::ArrayGeometry::ula(n_elements);
        const auto grid = aoa::angle_grid(lo, hi, step);
        aoa::AngularSpectrum s;
        if (method == "bartlett") s = aoa::bartlett_spectrum(cov, g, grid);
        else if (method == "capon") s = aoa::capon_spectrum(cov, g, grid);
        else if (method == "music") s = aoa::music_spectrum(cov, g, grid, n_sources);
        else fail(ErrorCode::InvalidArgument, "method must be bartlett, capon or music");
        std::vector<double> peaks;
        for (auto k : aoa::find_peaks(s)) peaks.push_back(s.angles_deg[k]);
        return py::make_tuple(s.angles_deg, s.values, peaks);
      },
      py::arg("method"), py::arg("n_elements"), py::arg("sources"), py::arg("noise_power") = 1.0,
      py::arg("n_sources") = 1, py::arg("snapshots") = 0, py::arg("seed") = 0, py::arg("lo") = -90.0,
      py::arg("hi") = 90.0, py::arg("step") = 0.1,
      "ULA with half-wavelength spacing. snapshots = 0 uses the exact covariance. Returns (angles, values, peaks).");

  m.def(
      "esprit",
      [](int n_elements, const std::vector<std::pair<double, double>>& sources, double noise_power, int n_sources,
         std::size_t snapshots, std::uint64_t seed) {
        const auto cov = scene_covariance(n_elements, sources, noise_power, snapshots, seed);
        return aoa::esprit(cov, aoa::ArrayGeometry::ula(n_elements), n_sources).angles_deg;
      },
      py::arg("n_elements"), py::arg("sources"), py::arg("noise_power") = 1.0, py::arg("n_sources") = 1,
      py::arg("snapshots") = 0, py::arg("seed") = 0);

  py::class_<fingerprint::RadioMap>(m, "RadioMap")
      .def(py::init(&make_map), py::arg("entries"), "entries: [(location, {ap_id: rssi_dbm})]")
      .def_static("load",
                  [](const std::filesystem::path& path) {
                    std::ifstream in(path);
                    if (!in) fail(ErrorCode::ParseError, "cannot open " + path.string());
                    if (path.extension() == ".json") return fingerprint::radio_map_from_json(nlohmann::json::parse(in));
                    return fingerprint::load_radio_map_csv(in);
                  })
      .def_property_readonly("aps", &fingerprint::RadioMap::ap_universe)
      .def("__len__", &fingerprint::RadioMap::size);

  m.def(
      "classical_locate",
      [](const fingerprint::RadioMap& map, const fingerprint::Readings& q, int k) {
        return match_dict(fingerprint::classical_locate(map, q, k));
      },
      py::arg("map"), py::arg("query"), py::arg("k") = 1);

  m.def(
      "rbf_locate",
      [](const fingerprint::RadioMap& map, const fingerprint::Readings& q, int k, const std::string& metric) {
        fingerprint::RbfOptions o;
        o.k = k;
        if (metric == "canberra") o.metric = fingerprint::RankMetric::Canberra;
        else if (metric == "hamming") o.metric = fingerprint::RankMetric::Hamming;
        else if (metric != "spearman") fail(ErrorCode::InvalidArgument, "metric must be spearman, canberra or hamming");
        return match_dict(fingerprint::rbf_locate(map, q, o));
      },
      py::arg("map"), py::arg("query"), py::arg("k") = 1, py::arg("metric") = "spearman");

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::filesystem::path& base_dir) {
        const auto cfg = harness::parse_experiment_config(nlohmann::json::parse(config_json), base_dir);
        harness::MetricTable t;
        {
          py::gil_scoped_release release;
          t = harness::run_experiment(cfg);
        }
        std::ostringstream csv;
        harness::write_metrics_csv(csv, t);
        return py::make_tuple(harness::aggregate_json(t).dump(), csv.str());
      },
      py::arg("config_json"), py::arg("base_dir") = std::filesystem::path{},
      "Returns (aggregate JSON text, metrics CSV text).");
}
