#include "radloc/coop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "radloc/geomsolve.hpp"

namespace radloc::coop {

namespace {

struct IndexedRange {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  double r = 0.0;
};

std::vector<IndexedRange> indexed(const RangeSet& ranges) {
  std::vector<IndexedRange> out;
  out.reserve(ranges.size());
  for (const auto& m : ranges.measurements()) out.push_back({index_of(m.edge.a), index_of(m.edge.b), m.range});
  return out;
}

Position anchor_centroid(const NetworkScenario& s) {
  const auto anchors = s.anchors();
  Position c = Position::Zero(s.dim());
  if (anchors.empty()) return c;
  for (auto id : anchors) c += s.position(id);
  return c / static_cast<double>(anchors.size());
}

// Node positions as columns; anchors at truth, agents per the initializer.
Eigen::MatrixXd initial_layout(const NetworkScenario& s, const SolverConfig& config) {
  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::MatrixXd x(s.dim(), n);
  const Position centroid = anchor_centroid(s);
  Position lo = centroid, hi = centroid;
  for (auto id : s.anchors()) {
    lo = lo.cwiseMin(s.position(id));
    hi = hi.cwiseMax(s.position(id));
  }
  std::optional<Rng> rng;
  if (const auto* r = std::get_if<RandomInit>(&config.initializer)) rng.emplace(derive_seed(r->seed.value, {3}));
  const auto* warm = std::get_if<WarmStart>(&config.initializer);

  for (const auto& node : s.nodes()) {
    const auto k = static_cast<Eigen::Index>(index_of(node.id));
    if (node.role == scenario::Role::Anchor) {
      x.col(k) = node.position;
      continue;
    }
    if (warm) {
      auto it = warm->positions.find(node.id);
      if (it != warm->positions.end()) {
        require(it->second.size() == s.dim() && it->second.allFinite(), "warm-start position has wrong dimension");
        x.col(k) = it->second;
        continue;
      }
    }
    if (rng) {
      for (int d = 0; d < s.dim(); ++d) x(d, k) = rng->uniform(lo(d), hi(d));
    } else {
      x.col(k) = centroid;
    }
  }
  return x;
}

double layout_stress(const Eigen::MatrixXd& x, const std::vector<IndexedRange>& edges) {
  double f = 0.0;
  for (const auto& e : edges) {
    const double res = e.r - (x.col(e.i) - x.col(e.j)).norm();
    f += res * res;
  }
  return f;
}

PositionEstimateSet package(const NetworkScenario& s, const RangeSet& ranges, const Eigen::MatrixXd& x,
                            const std::vector<bool>& resolved) {
  PositionEstimateSet out;
  std::map<NodeId, Position> for_stress;
  for (auto id : s.agents()) {
    const auto k = index_of(id);
    out.positions[id] = x.col(k);
    out.status[id] = resolved[k] ? AgentStatus::Resolved : AgentStatus::Unresolved;
    if (resolved[k]) for_stress[id] = x.col(k);
  }
  // Stress restricted to anchors and resolved agents.
  std::vector<scenario::Measurement> kept;
  for (const auto& m : ranges.measurements()) {
    const bool a_ok = s.is_anchor(m.edge.a) || resolved[index_of(m.edge.a)];
    const bool b_ok = s.is_anchor(m.edge.b) || resolved[index_of(m.edge.b)];
    if (a_ok && b_ok) kept.push_back(m);
  }
  out.objective_value = stress(s, RangeSet(std::move(kept), ranges.noise_sigma()), for_stress);
  return out;
}

void check_inputs(const NetworkScenario& s, const RangeSet& ranges, const SolverConfig& config) {
  config.validate();
  ranges.check_against(s);
}

double max_column_step(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).colwise().norm().maxCoeff();
}

}  // namespace

void SolverConfig::validate() const {
  require(max_iterations >= 1, "max_iterations must be at least 1");
  require(step_tolerance > 0.0, "step_tolerance must be positive");
  require(objective_tolerance > 0.0, "objective_tolerance must be positive");
}

std::size_t PositionEstimateSet::resolved_count() const {
  return static_cast<std::size_t>(
      std::count_if(status.begin(), status.end(), [](const auto& kv) { return kv.second == AgentStatus::Resolved; }));
}

double stress(const NetworkScenario& scenario, const RangeSet& ranges, const std::map<NodeId, Position>& positions) {
  auto lookup = [&](NodeId id) -> const Position& {
    auto it = positions.find(id);
    if (it != positions.end()) return it->second;
    if (scenario.is_anchor(id)) return scenario.position(id);
    fail(ErrorCode::MissingPosition, "no position for agent " + std::to_string(index_of(id)));
  };
  double f = 0.0;
  for (const auto& m : ranges.measurements()) {
    const double res = m.range - (lookup(m.edge.a) - lookup(m.edge.b)).norm();
    f += res * res;
  }
  return f;
}

PositionEstimateSet solve_ls_gradient(const NetworkScenario& scenario, const RangeSet& ranges,
                                      const SolverConfig& config, bool cooperative) {
  check_inputs(scenario, ranges, config);
  const auto n = scenario.size();
  std::vector<bool> anchor(n);
  for (std::size_t k = 0; k < n; ++k) anchor[k] = scenario.nodes()[k].role == scenario::Role::Anchor;

  std::vector<IndexedRange> edges;
  for (const auto& e : indexed(ranges)) {
    const int anchors_on_edge = int(anchor[e.i]) + int(anchor[e.j]);
    if (anchors_on_edge == 2) continue;
    if (!cooperative && anchors_on_edge == 0) continue;
    edges.push_back(e);
  }

  // Diagonal preconditioner from the Gershgorin bound of the SMACOF Hessian.
  std::vector<double> bound(n, 0.0);
  std::vector<bool> resolved(n, false);
  for (const auto& e : edges) {
    const double w = (anchor[e.i] || anchor[e.j]) ? 1.0 : 2.0;
    if (!anchor[e.i]) bound[e.i] += w;
    if (!anchor[e.j]) bound[e.j] += w;
  }
  for (std::size_t k = 0; k < n; ++k) resolved[k] = !anchor[k] && bound[k] > 0.0;

  Eigen::MatrixXd x = initial_layout(scenario, config);
  const auto dim = x.rows();
  Eigen::MatrixXd grad(dim, static_cast<Eigen::Index>(n));

  auto gradient = [&](const Eigen::MatrixXd& at) {
    grad.setZero();
    for (const auto& e : edges) {
      const Eigen::VectorXd diff = at.col(e.i) - at.col(e.j);
      const double d = diff.norm();
      if (d < 1e-15) continue;
      const Eigen::VectorXd g = 2.0 * (d - e.r) / d * diff;
      if (!anchor[e.i]) grad.col(e.i) += g;
      if (!anchor[e.j]) grad.col(e.j) -= g;
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (resolved[k]) grad.col(static_cast<Eigen::Index>(k)) /= 2.0 * bound[k];
      else grad.col(static_cast<Eigen::Index>(k)).setZero();
    }
  };

  PositionEstimateSet result;
  double f = layout_stress(x, edges);
  result.objective_history.push_back(f);
  Eigen::MatrixXd x_prev = x;
  double t = 1.0;
  int momentum_k = 0;
  int it = 0;
  bool converged = false;
  for (; it < config.max_iterations; ++it) {
    if (f == 0.0) {
      converged = true;
      break;
    }
    Eigen::MatrixXd y = x;
    double fy = f;
    if (config.acceleration == Acceleration::Nesterov && momentum_k > 0) {
      const double beta = (momentum_k - 1.0) / (momentum_k + 2.0);
      y = x + beta * (x - x_prev);
      fy = layout_stress(y, edges);
    }
    gradient(y);
    // grad already carries the preconditioner; its squared norm scaled back is g^T P g.
    double descent = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (resolved[k]) descent += 2.0 * bound[k] * grad.col(static_cast<Eigen::Index>(k)).squaredNorm();
    }
    if (descent == 0.0) {
      converged = true;
      break;
    }
    t = std::min(2.0 * t, 2.0);
    Eigen::MatrixXd candidate;
    double fc = 0.0;
    for (int backtrack = 0; backtrack < 60; ++backtrack) {
      candidate = y - t * grad;
      fc = layout_stress(candidate, edges);
      if (fc <= fy - 1e-4 * t * descent) break;
      t *= 0.5;
    }
    if (config.acceleration == Acceleration::Nesterov && fc > f) {
      // Restart momentum when the accelerated step fails to improve on x.
      momentum_k = 0;
      continue;
    }
    const double step = max_column_step(candidate, x);
    const double decrease = f - fc;
    x_prev = x;
    x = std::move(candidate);
    const double f_old = f;
    f = fc;
    ++momentum_k;
    result.objective_history.push_back(f);
    if (step < config.step_tolerance || decrease <= config.objective_tolerance * f_old) {
      converged = true;
      ++it;
      break;
    }
  }

  auto out = package(scenario, ranges, x, resolved);
  out.objective_history = std::move(result.objective_history);
  out.iterations = it;
  out.converged = converged;
  return out;
}

PositionEstimateSet solve_sequential(const NetworkScenario& scenario, const RangeSet& ranges,
                                     const SolverConfig& config) {
  check_inputs(scenario, ranges, config);
  const auto n = scenario.size();
  const int dim = scenario.dim();
  const Position centroid = anchor_centroid(scenario);

  std::vector<std::vector<std::pair<std::uint32_t, double>>> links(n);
  for (const auto& e : indexed(ranges)) {
    links[e.i].push_back({e.j, e.r});
    links[e.j].push_back({e.i, e.r});
  }

  std::vector<bool> reference(n, false);
  std::vector<bool> resolved(n, false);
  Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(n));
  for (const auto& node : scenario.nodes()) {
    const auto k = index_of(node.id);
    if (node.role == scenario::Role::Anchor) {
      reference[k] = true;
      x.col(k) = node.position;
    } else {
      x.col(k) = centroid;
    }
  }

  std::map<NodeId, int> rounds;
  const auto agents = scenario.agents();
  int round = 0;
  bool progress = true;
  while (progress && round < config.max_iterations) {
    progress = false;
    ++round;
    std::vector<std::pair<std::uint32_t, Position>> placed;
    for (auto id : agents) {
      const auto k = index_of(id);
      if (resolved[k]) continue;
      std::vector<Position> refs;
      std::vector<double> rs;
      for (const auto& [other, r] : links[k]) {
        if (reference[other]) {
          refs.push_back(x.col(other));
          rs.push_back(r);
        }
      }
      if (refs.size() < static_cast<std::size_t>(dim) + 1) continue;
      try {
        auto report = geomsolve::trilaterate(refs, rs);
        if (!report.estimate.allFinite()) continue;
        placed.emplace_back(k, std::move(report.estimate));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::SingularGeometry) throw;
      }
    }
    // Promotion happens between rounds so the sweep order cannot leak into a round.
    for (auto& [k, p] : placed) {
      x.col(k) = p;
      resolved[k] = true;
      reference[k] = true;
      rounds[node_id(k)] = round;
      progress = true;
    }
  }

  auto out = package(scenario, ranges, x, resolved);
  out.resolved_round = std::move(rounds);
  out.iterations = round;
  out.converged = true;
  return out;
}

namespace {

bool connected(std::size_t n, const std::vector<IndexedRange>& edges) {
  if (n == 0) return true;
  std::vector<std::vector<std::uint32_t>> adj(n);
  for (const auto& e : edges) {
    adj[e.i].push_back(e.j);
    adj[e.j].push_back(e.i);
  }
  std::vector<bool> seen(n, false);
  std::queue<std::uint32_t> q;
  q.push(0);
  seen[0] = true;
  std::size_t count = 1;
  while (!q.empty()) {
    const auto v = q.front();
    q.pop();
    for (auto w : adj[v]) {
      if (!seen[w]) {
        seen[w] = true;
        ++count;
        q.push(w);
      }
    }
  }
  return count == n;
}

// Classical (Torgerson) MDS on shortest-path completed distances.
Eigen::MatrixXd classical_mds(std::size_t n, int dim, const std::vector<IndexedRange>& edges) {
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd dist = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), inf);
  for (std::size_t k = 0; k < n; ++k) dist(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = 0.0;
  for (const auto& e : edges) {
    dist(e.i, e.j) = std::min(dist(e.i, e.j), e.r);
    dist(e.j, e.i) = dist(e.i, e.j);
  }
  const auto m = static_cast<Eigen::Index>(n);
  for (Eigen::Index k = 0; k < m; ++k) {
    for (Eigen::Index i = 0; i < m; ++i) {
      if (dist(i, k) == inf) continue;
      for (Eigen::Index j = 0; j < m; ++j) {
        const double via = dist(i, k) + dist(k, j);
        if (via < dist(i, j)) dist(i, j) = via;
      }
    }
  }
  const Eigen::MatrixXd sq = dist.cwiseProduct(dist);
  const Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(m, m) - Eigen::MatrixXd::Constant(m, m, 1.0 / static_cast<double>(n));
  const Eigen::MatrixXd gram = -0.5 * centering * sq * centering;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  Eigen::MatrixXd x(dim, m);
  for (int d = 0; d < dim; ++d) {
    const Eigen::Index col = m - 1 - d;
    const double lambda = std::max(eig.eigenvalues()(col), 0.0);
    x.row(d) = std::sqrt(lambda) * eig.eigenvectors().col(col).transpose();
  }
  return x;
}

}  // namespace

PositionEstimateSet solve_mds_smacof(const NetworkScenario& scenario, const RangeSet& ranges,
                                     const SolverConfig& config) {
  check_inputs(scenario, ranges, config);
  const auto n = scenario.size();
  const int dim = scenario.dim();
  const auto anchors = scenario.anchors();
  if (anchors.size() < static_cast<std::size_t>(dim) + 1) {
    fail(ErrorCode::DegenerateAnchors, "alignment needs at least dim + 1 anchors");
  }
  const auto edges = indexed(ranges);
  if (!connected(n, edges)) fail(ErrorCode::DisconnectedGraph, "measurement graph is not connected");

  const auto m = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd laplacian = Eigen::MatrixXd::Zero(m, m);
  for (const auto& e : edges) {
    laplacian(e.i, e.i) += 1.0;
    laplacian(e.j, e.j) += 1.0;
    laplacian(e.i, e.j) -= 1.0;
    laplacian(e.j, e.i) -= 1.0;
  }
  // V^+ = (V + 11^T)^-1 - 11^T / n^2 for a connected graph.
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Constant(m, m, 1.0);
  const Eigen::MatrixXd v_pinv =
      (laplacian + ones).ldlt().solve(Eigen::MatrixXd::Identity(m, m)) - ones / static_cast<double>(n * n);

  Eigen::MatrixXd x = std::holds_alternative<WarmStart>(config.initializer) ? initial_layout(scenario, config)
                                                                             : classical_mds(n, dim, edges);

  PositionEstimateSet hist;
  double f = layout_stress(x, edges);
  hist.objective_history.push_back(f);
  Eigen::MatrixXd bx(dim, m);
  int it = 0;
  bool converged = f == 0.0;
  for (; it < config.max_iterations && !converged; ++it) {
    bx.setZero();
    for (const auto& e : edges) {
      const Eigen::VectorXd diff = x.col(e.i) - x.col(e.j);
      const double d = diff.norm();
      if (d < 1e-15) continue;
      const Eigen::VectorXd term = (e.r / d) * diff;
      bx.col(e.i) += term;
      bx.col(e.j) -= term;
    }
    Eigen::MatrixXd next = bx * v_pinv;  // V^+ is symmetric.
    const double fn = layout_stress(next, edges);
    if (fn > f + 1e-12 * std::max(1.0, f)) {
      throw std::logic_error("SMACOF stress increased; majorization invariant violated");
    }
    const double step = max_column_step(next, x);
    const double decrease = f - fn;
    const double f_old = f;
    x = std::move(next);
    f = fn;
    hist.objective_history.push_back(f);
    if (step < config.step_tolerance || decrease <= config.objective_tolerance * f_old) {
      converged = true;
      ++it;
      break;
    }
  }

  std::vector<Position> relative;
  relative.reserve(n);
  for (Eigen::Index k = 0; k < m; ++k) relative.push_back(x.col(k));
  std::vector<std::size_t> anchor_idx;
  std::vector<Position> anchor_truth;
  for (auto id : anchors) {
    anchor_idx.push_back(index_of(id));
    anchor_truth.push_back(scenario.position(id));
  }
  const auto alignment = geomsolve::procrustes_align(relative, anchor_idx, anchor_truth);

  Eigen::MatrixXd aligned(dim, m);
  std::vector<bool> resolved(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const bool is_anchor = scenario.nodes()[k].role == scenario::Role::Anchor;
    aligned.col(static_cast<Eigen::Index>(k)) = is_anchor ? scenario.nodes()[k].position : alignment.aligned[k];
    resolved[k] = !is_anchor;
  }
  auto out = package(scenario, ranges, aligned, resolved);
  out.objective_history = std::move(hist.objective_history);
  out.iterations = it;
  out.converged = converged;
  return out;
}

PositionEstimateSet solve_pocs(const NetworkScenario& scenario, const RangeSet& ranges, const SolverConfig& config) {
  check_inputs(scenario, ranges, config);
  const auto n = scenario.size();
  std::vector<bool> anchor(n);
  for (std::size_t k = 0; k < n; ++k) anchor[k] = scenario.nodes()[k].role == scenario::Role::Anchor;

  std::vector<IndexedRange> edges;
  std::vector<double> bound(n, 0.0);
  for (const auto& e : indexed(ranges)) {
    if (anchor[e.i] && anchor[e.j]) continue;
    edges.push_back(e);
    const double w = (anchor[e.i] || anchor[e.j]) ? 1.0 : 2.0;
    if (!anchor[e.i]) bound[e.i] += w;
    if (!anchor[e.j]) bound[e.j] += w;
  }
  std::vector<bool> resolved(n, false);
  for (std::size_t k = 0; k < n; ++k) resolved[k] = !anchor[k] && bound[k] > 0.0;

  Eigen::MatrixXd x = initial_layout(scenario, config);
  const auto dim = x.rows();
  Eigen::MatrixXd pull(dim, static_cast<Eigen::Index>(n));

  // pull_i = sum over edges of (P_ball(x_i) - x_i); relaxed objective = 1/2 sum of squared gaps.
  auto sweep = [&](const Eigen::MatrixXd& at) {
    pull.setZero();
    double objective = 0.0;
    for (const auto& e : edges) {
      const Eigen::VectorXd diff = at.col(e.i) - at.col(e.j);
      const double d = diff.norm();
      if (d <= e.r) continue;
      const double gap = d - e.r;
      objective += 0.5 * gap * gap;
      const Eigen::VectorXd move = (gap / d) * diff;
      if (!anchor[e.i]) pull.col(e.i) -= move;
      if (!anchor[e.j]) pull.col(e.j) += move;
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (resolved[k]) pull.col(static_cast<Eigen::Index>(k)) /= bound[k];
      else pull.col(static_cast<Eigen::Index>(k)).setZero();
    }
    return objective;
  };

  PositionEstimateSet hist;
  Eigen::MatrixXd x_prev = x;
  int it = 0;
  bool converged = false;
  for (; it < config.max_iterations; ++it) {
    Eigen::MatrixXd y = x;
    if (config.acceleration == Acceleration::Nesterov && it > 0) {
      y = x + ((it - 1.0) / (it + 2.0)) * (x - x_prev);
    }
    const double objective = sweep(y);
    if (hist.objective_history.empty()) hist.objective_history.push_back(sweep(x));
    Eigen::MatrixXd next = y + pull;
    const double step = max_column_step(next, x);
    x_prev = std::move(x);
    x = std::move(next);
    hist.objective_history.push_back(objective);
    if (step < config.step_tolerance) {
      converged = true;
      ++it;
      break;
    }
  }

  auto out = package(scenario, ranges, x, resolved);
  out.objective_history = std::move(hist.objective_history);
  out.iterations = it;
  out.converged = converged;
  return out;
}

PositionEstimateSet solve_admm(const NetworkScenario& scenario, const RangeSet& ranges, const SolverConfig& config,
                               const AdmmOptions& options) {
  check_inputs(scenario, ranges, config);
  require(options.penalty > 0.0, "ADMM penalty must be positive");
  require(options.primal_tolerance > 0.0 && options.dual_tolerance > 0.0, "ADMM tolerances must be positive");
  const auto n = scenario.size();
  std::vector<bool> anchor(n);
  for (std::size_t k = 0; k < n; ++k) anchor[k] = scenario.nodes()[k].role == scenario::Role::Anchor;

  std::vector<IndexedRange> edges;
  std::vector<int> degree(n, 0);
  for (const auto& e : indexed(ranges)) {
    if (anchor[e.i] && anchor[e.j]) continue;
    edges.push_back(e);
    ++degree[e.i];
    ++degree[e.j];
  }
  std::vector<bool> resolved(n, false);
  for (std::size_t k = 0; k < n; ++k) resolved[k] = !anchor[k] && degree[k] > 0;

  Eigen::MatrixXd z = initial_layout(scenario, config);
  const auto dim = z.rows();
  const double c = options.penalty;

  // Local copies and scaled duals per edge endpoint; anchor endpoints stay pinned.
  struct EdgeState {
    Eigen::VectorXd yi, yj, ui, uj;
  };
  std::vector<EdgeState> state(edges.size());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    state[k] = {z.col(edges[k].i), z.col(edges[k].j), Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim)};
  }

  auto toward = [](const Eigen::VectorXd& from, const Eigen::VectorXd& to, double length, const Eigen::VectorXd& fallback) {
    const Eigen::VectorXd diff = to - from;
    const double d = diff.norm();
    if (d > 1e-15) return Eigen::VectorXd(diff / d * length);
    return Eigen::VectorXd(fallback * length);
  };

  PositionEstimateSet hist;
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(dim);
  unit(0) = 1.0;
  Eigen::MatrixXd accum(dim, static_cast<Eigen::Index>(n));
  double primal = 0.0, dual = 0.0;
  int it = 0;
  bool converged = false;
  for (; it < config.max_iterations; ++it) {
    // Local step: minimise (r - ||yi - yj||)^2 + c/2 ||yi - vi||^2 + c/2 ||yj - vj||^2.
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto& e = edges[k];
      auto& st = state[k];
      if (anchor[e.j] || anchor[e.i]) {
        const bool i_free = !anchor[e.i];
        const Eigen::VectorXd a = i_free ? z.col(e.j) : z.col(e.i);
        const Eigen::VectorXd v = i_free ? Eigen::VectorXd(z.col(e.i) - st.ui) : Eigen::VectorXd(z.col(e.j) - st.uj);
        const double t = (e.r + 0.5 * c * (v - a).norm()) / (1.0 + 0.5 * c);
        const Eigen::VectorXd y = a + toward(a, v, t, unit);
        if (i_free) {
          st.yi = y;
          st.yj = a;
        } else {
          st.yj = y;
          st.yi = a;
        }
      } else {
        const Eigen::VectorXd vi = z.col(e.i) - st.ui;
        const Eigen::VectorXd vj = z.col(e.j) - st.uj;
        const Eigen::VectorXd mid = 0.5 * (vi + vj);
        const double t = (e.r + 0.25 * c * (vi - vj).norm()) / (1.0 + 0.25 * c);
        const Eigen::VectorXd half = 0.5 * toward(vj, vi, t, unit);
        st.yi = mid + half;
        st.yj = mid - half;
      }
    }
    // Consensus step.
    accum.setZero();
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto& e = edges[k];
      if (!anchor[e.i]) accum.col(e.i) += state[k].yi + state[k].ui;
      if (!anchor[e.j]) accum.col(e.j) += state[k].yj + state[k].uj;
    }
    const Eigen::MatrixXd z_old = z;
    for (std::size_t k = 0; k < n; ++k) {
      if (resolved[k]) z.col(static_cast<Eigen::Index>(k)) = accum.col(static_cast<Eigen::Index>(k)) / degree[k];
    }
    // Dual step and residuals.
    double primal_sq = 0.0, dual_sq = 0.0, gap = 0.0;
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto& e = edges[k];
      auto& st = state[k];
      if (!anchor[e.i]) {
        const Eigen::VectorXd r = st.yi - z.col(e.i);
        st.ui += r;
        primal_sq += r.squaredNorm();
        gap = std::max(gap, r.norm());
        dual_sq += (z.col(e.i) - z_old.col(e.i)).squaredNorm();
      }
      if (!anchor[e.j]) {
        const Eigen::VectorXd r = st.yj - z.col(e.j);
        st.uj += r;
        primal_sq += r.squaredNorm();
        gap = std::max(gap, r.norm());
        dual_sq += (z.col(e.j) - z_old.col(e.j)).squaredNorm();
      }
    }
    primal = std::sqrt(primal_sq);
    dual = c * std::sqrt(dual_sq);
    hist.max_consensus_gap = gap;
    hist.objective_history.push_back(layout_stress(z, edges));
    if (primal < options.primal_tolerance && dual < options.dual_tolerance) {
      converged = true;
      ++it;
      break;
    }
  }

  auto out = package(scenario, ranges, z, resolved);
  out.objective_history = std::move(hist.objective_history);
  out.iterations = it;
  out.converged = converged;
  out.primal_residual = primal;
  out.dual_residual = dual;
  out.max_consensus_gap = hist.max_consensus_gap;
  return out;
}

}  // namespace radloc::coop
