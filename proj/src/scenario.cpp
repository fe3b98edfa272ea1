#include "radloc/scenario.hpp"

#include <algorithm>
#include <cmath>

namespace radloc::scenario {

Edge make_edge(NodeId i, NodeId j) {
  if (i == j) fail(ErrorCode::InvalidArgument, "self-loop edge");
  return i < j ? Edge{i, j} : Edge{j, i};
}

double distance(const Position& a, const Position& b) { return (a - b).norm(); }

NetworkScenario::NetworkScenario(int dim, double connectivity_range, std::vector<Node> nodes,
                                 std::vector<Edge> edges)
    : dim_(dim), range_(connectivity_range), nodes_(std::move(nodes)), edges_(std::move(edges)) {
  require(dim_ == 2 || dim_ == 3, "scenario dimension must be 2 or 3");
  require(range_ > 0.0, "connectivity range must be positive");
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    const auto& n = nodes_[k];
    if (index_of(n.id) != k) fail(ErrorCode::InvalidArgument, "node ids must be dense and ordered (id == index)");
    if (n.position.size() != dim_) fail(ErrorCode::InvalidArgument, "node position dimension mismatch");
    if (!n.position.allFinite()) fail(ErrorCode::InvalidArgument, "non-finite node position");
  }
  for (auto& e : edges_) {
    e = make_edge(e.a, e.b);
    if (index_of(e.b) >= nodes_.size()) fail(ErrorCode::InvalidArgument, "edge endpoint out of range");
  }
  std::sort(edges_.begin(), edges_.end());
  if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end()) {
    fail(ErrorCode::InvalidArgument, "duplicate edge");
  }
}

NetworkScenario NetworkScenario::with_range_edges(int dim, double connectivity_range, std::vector<Node> nodes) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      if (distance(nodes[i].position, nodes[j].position) <= connectivity_range) {
        edges.push_back({node_id(static_cast<std::uint32_t>(i)), node_id(static_cast<std::uint32_t>(j))});
      }
    }
  }
  return NetworkScenario(dim, connectivity_range, std::move(nodes), std::move(edges));
}

std::vector<NodeId> NetworkScenario::anchors() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes_) {
    if (n.role == Role::Anchor) out.push_back(n.id);
  }
  return out;
}

std::vector<NodeId> NetworkScenario::agents() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes_) {
    if (n.role == Role::Agent) out.push_back(n.id);
  }
  return out;
}

bool NetworkScenario::has_edge(NodeId i, NodeId j) const {
  if (i == j) return false;
  return std::binary_search(edges_.begin(), edges_.end(), make_edge(i, j));
}

std::vector<std::vector<NodeId>> NetworkScenario::adjacency() const {
  std::vector<std::vector<NodeId>> adj(nodes_.size());
  for (const auto& e : edges_) {
    adj[index_of(e.a)].push_back(e.b);
    adj[index_of(e.b)].push_back(e.a);
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());
  return adj;
}

NetworkScenario NetworkScenario::fully_connected() const {
  std::vector<Edge> edges;
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    for (std::uint32_t j = i + 1; j < nodes_.size(); ++j) edges.push_back({node_id(i), node_id(j)});
  }
  return with_edges(std::move(edges));
}

NetworkScenario NetworkScenario::with_edges(std::vector<Edge> edges) const {
  NetworkScenario out(dim_, range_, nodes_, std::move(edges));
  out.seed = seed;
  return out;
}

RangeSet::RangeSet(std::vector<Measurement> measurements, double noise_sigma, std::uint64_t seed,
                   std::size_t clamp_count)
    : measurements_(std::move(measurements)), sigma_(noise_sigma), seed_(seed), clamp_count_(clamp_count) {
  require(sigma_ >= 0.0, "noise sigma must be non-negative");
  for (auto& m : measurements_) {
    m.edge = make_edge(m.edge.a, m.edge.b);
    if (!(m.range > 0.0) || !std::isfinite(m.range)) fail(ErrorCode::InvalidArgument, "ranges must be positive and finite");
  }
  std::sort(measurements_.begin(), measurements_.end(),
            [](const Measurement& x, const Measurement& y) { return x.edge < y.edge; });
  auto dup = std::adjacent_find(measurements_.begin(), measurements_.end(),
                                [](const Measurement& x, const Measurement& y) { return x.edge == y.edge; });
  if (dup != measurements_.end()) fail(ErrorCode::InvalidArgument, "duplicate measurement for one edge");
}

std::optional<double> RangeSet::find(NodeId i, NodeId j) const {
  if (i == j) return std::nullopt;
  const Edge e = make_edge(i, j);
  auto it = std::lower_bound(measurements_.begin(), measurements_.end(), e,
                             [](const Measurement& m, const Edge& key) { return m.edge < key; });
  if (it == measurements_.end() || it->edge != e) return std::nullopt;
  return it->range;
}

RangeSet RangeSet::restricted_to(const NetworkScenario& scenario) const {
  std::vector<Measurement> kept;
  for (const auto& m : measurements_) {
    if (index_of(m.edge.b) < scenario.size() && scenario.has_edge(m.edge.a, m.edge.b)) kept.push_back(m);
  }
  return RangeSet(std::move(kept), sigma_, seed_, clamp_count_);
}

void RangeSet::check_against(const NetworkScenario& scenario) const {
  for (const auto& m : measurements_) {
    if (index_of(m.edge.b) >= scenario.size() || !scenario.has_edge(m.edge.a, m.edge.b)) {
      fail(ErrorCode::InvalidArgument, "measurement on an edge that is not in the scenario");
    }
  }
}

NetworkScenario generate_benchmark_scenario(const BenchmarkSpec& spec, RngSeed seed) {
  require(spec.n_anchors >= 3, "at least 3 anchors are needed for 2-D alignment");
  require(spec.n_agents >= 0, "agent count must be non-negative");
  require(spec.side > 0.0, "side must be positive");
  require(spec.range > 0.0, "range must be positive");

  Rng rng(derive_seed(seed.value, {1}));
  std::vector<Node> nodes;
  nodes.reserve(static_cast<std::size_t>(spec.n_anchors + spec.n_agents));
  const double perimeter = 4.0 * spec.side;
  for (int k = 0; k < spec.n_anchors; ++k) {
    const double s = rng.uniform(0.0, perimeter);
    const int side_index = std::min(3, static_cast<int>(s / spec.side));
    const double t = s - side_index * spec.side;
    Position p(2);
    switch (side_index) {
      case 0: p << t, 0.0; break;
      case 1: p << spec.side, t; break;
      case 2: p << spec.side - t, spec.side; break;
      default: p << 0.0, spec.side - t; break;
    }
    nodes.push_back({node_id(static_cast<std::uint32_t>(nodes.size())), Role::Anchor, p, true});
  }
  for (int k = 0; k < spec.n_agents; ++k) {
    Position p(2);
    p(0) = rng.uniform(0.0, spec.side);
    p(1) = rng.uniform(0.0, spec.side);
    nodes.push_back({node_id(static_cast<std::uint32_t>(nodes.size())), Role::Agent, p, true});
  }

  auto scenario = NetworkScenario::with_range_edges(2, spec.range, std::move(nodes));
  scenario.seed = seed.value;
  if (spec.require_connected) {
    const auto adj = scenario.adjacency();
    for (auto id : scenario.agents()) {
      if (adj[index_of(id)].empty()) {
        fail(ErrorCode::DisconnectedAgent, "agent " + std::to_string(index_of(id)) + " has no edges");
      }
    }
  }
  return scenario;
}

RangeSet synthesize_ranges(const NetworkScenario& scenario, double sigma, RngSeed seed) {
  require(sigma >= 0.0, "sigma must be non-negative");
  require(!scenario.edges().empty(), "scenario has no edges to measure");
  Rng rng(derive_seed(seed.value, {2}));
  std::vector<Measurement> out;
  out.reserve(scenario.edges().size());
  std::size_t clamps = 0;
  for (const auto& e : scenario.edges()) {
    const double d = distance(scenario.position(e.a), scenario.position(e.b));
    double r = d * (1.0 + sigma * rng.normal());
    if (!(r > kRangeFloor)) {
      r = kRangeFloor;
      ++clamps;
    }
    out.push_back({e, r});
  }
  return RangeSet(std::move(out), sigma, seed.value, clamps);
}

std::map<Edge, double> true_distance_map(const NetworkScenario& scenario) {
  std::map<Edge, double> out;
  for (const auto& e : scenario.edges()) out[e] = distance(scenario.position(e.a), scenario.position(e.b));
  return out;
}

namespace {

nlohmann::json coords_json(const Position& p) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index k = 0; k < p.size(); ++k) arr.push_back(p(k));
  return arr;
}

Position coords_from(const nlohmann::json& j) {
  Position p(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) p(static_cast<Eigen::Index>(k)) = j.at(k).get<double>();
  return p;
}

}  // namespace

nlohmann::json to_json(const NetworkScenario& scenario) {
  nlohmann::json j;
  j["dim"] = scenario.dim();
  j["connectivity_range"] = scenario.connectivity_range();
  if (scenario.seed) j["seed"] = *scenario.seed;
  auto nodes = nlohmann::json::array();
  for (const auto& n : scenario.nodes()) {
    nlohmann::json jn;
    jn["id"] = index_of(n.id);
    jn["role"] = n.role == Role::Anchor ? "anchor" : "agent";
    jn["coords"] = coords_json(n.position);
    if (!n.truth_known) jn["truth_known"] = false;
    nodes.push_back(std::move(jn));
  }
  j["nodes"] = std::move(nodes);
  auto edges = nlohmann::json::array();
  for (const auto& e : scenario.edges()) edges.push_back({index_of(e.a), index_of(e.b)});
  j["edges"] = std::move(edges);
  return j;
}

NetworkScenario scenario_from_json(const nlohmann::json& j) {
  try {
    const int dim = j.at("dim").get<int>();
    const double range = j.at("connectivity_range").get<double>();
    std::vector<Node> nodes;
    for (const auto& jn : j.at("nodes")) {
      Node n;
      n.id = node_id(jn.at("id").get<std::uint32_t>());
      const auto role = jn.at("role").get<std::string>();
      if (role != "anchor" && role != "agent") fail(ErrorCode::ParseError, "unknown node role '" + role + "'");
      n.role = role == "anchor" ? Role::Anchor : Role::Agent;
      n.position = coords_from(jn.at("coords"));
      n.truth_known = jn.value("truth_known", true);
      nodes.push_back(std::move(n));
    }
    std::sort(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.id < b.id; });
    std::optional<NetworkScenario> out;
    if (j.contains("edges")) {
      std::vector<Edge> edges;
      for (const auto& je : j.at("edges")) {
        edges.push_back(make_edge(node_id(je.at(0).get<std::uint32_t>()), node_id(je.at(1).get<std::uint32_t>())));
      }
      out.emplace(dim, range, std::move(nodes), std::move(edges));
    } else {
      out.emplace(NetworkScenario::with_range_edges(dim, range, std::move(nodes)));
    }
    if (j.contains("seed")) out->seed = j.at("seed").get<std::uint64_t>();
    return std::move(*out);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("scenario JSON: ") + e.what());
  }
}

nlohmann::json to_json(const RangeSet& ranges) {
  nlohmann::json j;
  j["sigma"] = ranges.noise_sigma();
  j["seed"] = ranges.seed();
  j["clamp_count"] = ranges.clamp_count();
  auto arr = nlohmann::json::array();
  for (const auto& m : ranges.measurements()) {
    arr.push_back({{"i", index_of(m.edge.a)}, {"j", index_of(m.edge.b)}, {"r", m.range}});
  }
  j["ranges"] = std::move(arr);
  return j;
}

RangeSet ranges_from_json(const nlohmann::json& j) {
  try {
    std::vector<Measurement> ms;
    for (const auto& jm : j.at("ranges")) {
      ms.push_back({make_edge(node_id(jm.at("i").get<std::uint32_t>()), node_id(jm.at("j").get<std::uint32_t>())),
                    jm.at("r").get<double>()});
    }
    return RangeSet(std::move(ms), j.value("sigma", 0.0), j.value("seed", std::uint64_t{0}),
                    j.value("clamp_count", std::size_t{0}));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("range JSON: ") + e.what());
  }
}

}  // namespace radloc::scenario
