#pragma once

#include <map>
#include <variant>
#include <vector>

#include "radloc/core.hpp"
#include "radloc/rng.hpp"
#include "radloc/scenario.hpp"

namespace radloc::coop {

using scenario::NetworkScenario;
using scenario::RangeSet;

enum class AgentStatus { Resolved, Unresolved };

struct AnchorCentroidInit {};
/// Agents uniform in the bounding box of the anchors.
struct RandomInit {
  RngSeed seed;
};
struct WarmStart {
  std::map<NodeId, Position> positions;
};
using Initializer = std::variant<AnchorCentroidInit, RandomInit, WarmStart>;

enum class Acceleration { None, Nesterov };

struct SolverConfig {
  int max_iterations = 10000;
  double step_tolerance = 1e-9;
  double objective_tolerance = 1e-12;
  Initializer initializer = AnchorCentroidInit{};
  Acceleration acceleration = Acceleration::None;

  void validate() const;
};

struct PositionEstimateSet {
  std::map<NodeId, Position> positions;
  std::map<NodeId, AgentStatus> status;
  /// Stress over measured edges whose endpoints are anchors or resolved agents.
  double objective_value = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Per-iteration objective of the solver's own iteration (stress for LS/SMACOF,
  /// relaxed projection objective for POCS, local objective for ADMM).
  std::vector<double> objective_history;
  /// Sequential solver: round in which each resolved agent was placed (1-based).
  std::map<NodeId, int> resolved_round;
  /// ADMM diagnostics.
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double max_consensus_gap = 0.0;

  std::size_t resolved_count() const;
};

/// F(X) = sum over measured edges of (r_ij - ||x_i - x_j||)^2. Anchors missing from
/// `positions` are taken at their true location; a missing agent throws MissingPosition.
double stress(const NetworkScenario& scenario, const RangeSet& ranges, const std::map<NodeId, Position>& positions);

/// Gradient descent on F over agent positions with anchors fixed. With
/// `cooperative == false` only anchor-agent edges enter F.
PositionEstimateSet solve_ls_gradient(const NetworkScenario& scenario, const RangeSet& ranges,
                                      const SolverConfig& config, bool cooperative);

/// Rounds of trilateration against anchors and previously placed agents (virtual anchors).
PositionEstimateSet solve_sequential(const NetworkScenario& scenario, const RangeSet& ranges,
                                     const SolverConfig& config);

/// Weighted SMACOF over all nodes (weight 1 on measured edges), then similarity
/// alignment onto the anchors. Throws DisconnectedGraph.
PositionEstimateSet solve_mds_smacof(const NetworkScenario& scenario, const RangeSet& ranges,
                                     const SolverConfig& config);

/// Synchronous averaged projections onto the range balls ||x_i - x_j|| <= r_ij.
PositionEstimateSet solve_pocs(const NetworkScenario& scenario, const RangeSet& ranges, const SolverConfig& config);

struct AdmmOptions {
  /// Below about 5 the range-residual splitting oscillates instead of converging.
  double penalty = 10.0;
  double primal_tolerance = 1e-6;
  double dual_tolerance = 1e-6;
};

/// Edge-consensus ADMM: each edge holds local copies of its endpoints, nodes hold the
/// consensus positions, scaled duals enforce agreement.
PositionEstimateSet solve_admm(const NetworkScenario& scenario, const RangeSet& ranges, const SolverConfig& config,
                               const AdmmOptions& options = {});

}  // namespace radloc::coop
