#pragma once

#include <cmath>
#include <vector>

#include "radloc/scenario.hpp"

namespace testing {

inline radloc::Position pt(double x, double y) {
  radloc::Position p(2);
  p << x, y;
  return p;
}

inline radloc::scenario::Node anchor(std::uint32_t id, double x, double y) {
  return {radloc::node_id(id), radloc::scenario::Role::Anchor, pt(x, y), true};
}

inline radloc::scenario::Node agent(std::uint32_t id, double x, double y) {
  return {radloc::node_id(id), radloc::scenario::Role::Agent, pt(x, y), true};
}

/// Noise-free range for every edge of the scenario.
inline radloc::scenario::RangeSet exact_ranges(const radloc::scenario::NetworkScenario& sc) {
  std::vector<radloc::scenario::Measurement> m;
  for (const auto& e : sc.edges()) m.push_back({e, (sc.position(e.a) - sc.position(e.b)).norm()});
  return radloc::scenario::RangeSet(std::move(m), 0.0);
}

inline std::map<radloc::NodeId, radloc::Position> truth_of_agents(const radloc::scenario::NetworkScenario& sc) {
  std::map<radloc::NodeId, radloc::Position> t;
  for (auto id : sc.agents()) t[id] = sc.position(id);
  return t;
}

inline double max_error(const std::map<radloc::NodeId, radloc::Position>& est,
                        const std::map<radloc::NodeId, radloc::Position>& truth) {
  double worst = 0.0;
  for (const auto& [id, p] : truth) worst = std::max(worst, (est.at(id) - p).norm());
  return worst;
}

}  // namespace testing
