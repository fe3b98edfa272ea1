#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "radloc/core.hpp"
#include "radloc/rng.hpp"

namespace radloc::scenario {

enum class Role { Anchor, Agent };

struct Node {
  NodeId id{};
  Role role = Role::Agent;
  Position position;
  /// False for agents whose true location is unknown (they are estimated but not scored).
  bool truth_known = true;
};

/// Undirected edge, always stored with `a < b`.
struct Edge {
  NodeId a{};
  NodeId b{};

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

Edge make_edge(NodeId i, NodeId j);

/// Anchors and agents with ground truth plus the connectivity graph G = (V, E).
class NetworkScenario {
 public:
  NetworkScenario() = default;
  /// Validates ids (dense, unique), dimensions, finiteness and edge endpoints.
  NetworkScenario(int dim, double connectivity_range, std::vector<Node> nodes, std::vector<Edge> edges);

  /// Builds the edge list from the range threshold: (i, j) present iff ||x_i - x_j|| <= range.
  static NetworkScenario with_range_edges(int dim, double connectivity_range, std::vector<Node> nodes);

  int dim() const noexcept { return dim_; }
  double connectivity_range() const noexcept { return range_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const Node& node(NodeId id) const { return nodes_.at(index_of(id)); }
  const Position& position(NodeId id) const { return node(id).position; }
  bool is_anchor(NodeId id) const { return node(id).role == Role::Anchor; }

  std::vector<NodeId> anchors() const;
  std::vector<NodeId> agents() const;

  const std::vector<Edge>& edges() const noexcept { return edges_; }
  bool has_edge(NodeId i, NodeId j) const;
  /// Neighbor lists indexed by node index, ascending ids.
  std::vector<std::vector<NodeId>> adjacency() const;

  /// Same nodes, every pair connected (the "fully connected" benchmark variant).
  NetworkScenario fully_connected() const;
  NetworkScenario with_edges(std::vector<Edge> edges) const;

  std::optional<std::uint64_t> seed;

 private:
  int dim_ = 2;
  double range_ = 1.0;
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
};

struct Measurement {
  Edge edge;
  double range = 0.0;
};

/// Noisy per-edge ranges r_ij. At most one entry per undirected edge, sorted by edge.
class RangeSet {
 public:
  RangeSet() = default;
  RangeSet(std::vector<Measurement> measurements, double noise_sigma, std::uint64_t seed = 0,
           std::size_t clamp_count = 0);

  const std::vector<Measurement>& measurements() const noexcept { return measurements_; }
  std::size_t size() const noexcept { return measurements_.size(); }
  bool empty() const noexcept { return measurements_.empty(); }
  double noise_sigma() const noexcept { return sigma_; }
  std::uint64_t seed() const noexcept { return seed_; }
  /// Number of draws raised to the positive floor.
  std::size_t clamp_count() const noexcept { return clamp_count_; }

  std::optional<double> find(NodeId i, NodeId j) const;
  /// Keeps only measurements whose edge is present in `scenario`.
  RangeSet restricted_to(const NetworkScenario& scenario) const;
  /// Throws InvalidArgument if a measurement refers to an edge absent from `scenario`.
  void check_against(const NetworkScenario& scenario) const;

 private:
  std::vector<Measurement> measurements_;
  double sigma_ = 0.0;
  std::uint64_t seed_ = 0;
  std::size_t clamp_count_ = 0;
};

/// Smallest range a synthesised measurement may take.
inline constexpr double kRangeFloor = 1e-6;

struct BenchmarkSpec {
  int n_anchors = 12;
  int n_agents = 50;
  double side = 1.0;
  double range = 0.3;
  /// Throw DisconnectedAgent when some agent ends up with no edge.
  bool require_connected = false;
};

/// Agents uniform in the square [0, side]^2; anchors uniform by arclength along its
/// perimeter. Anchors take ids 0..n_anchors-1, agents follow.
NetworkScenario generate_benchmark_scenario(const BenchmarkSpec& spec, RngSeed seed);

/// r_ij = d_ij * (1 + N(0, sigma)), floored at kRangeFloor.
RangeSet synthesize_ranges(const NetworkScenario& scenario, double sigma, RngSeed seed);

std::map<Edge, double> true_distance_map(const NetworkScenario& scenario);

double distance(const Position& a, const Position& b);

nlohmann::json to_json(const NetworkScenario& scenario);
NetworkScenario scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RangeSet& ranges);
RangeSet ranges_from_json(const nlohmann::json& j);

}  // namespace radloc::scenario
