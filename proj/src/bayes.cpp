#include "radloc/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace radloc::bayes {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kTiny = std::numeric_limits<double>::min();

void normalize_or_throw(std::vector<double>& v, const char* what) {
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  if (!(total >= 1e-300)) fail(ErrorCode::NumericalUnderflow, std::string(what) + " normalizer underflowed");
  for (double& x : v) x /= total;
}

// exp(l - max l), normalized to sum 1.
std::vector<double> softmax(const std::vector<double>& logs) {
  const double top = *std::max_element(logs.begin(), logs.end());
  std::vector<double> out(logs.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logs.size(); ++k) total += out[k] = std::exp(logs[k] - top);
  for (double& x : out) x /= total;
  return out;
}

struct FixedLink {
  Position at;
  double r;
};

struct FreeLink {
  std::size_t other;  // position in the free-node list
  double r;
};

// Splits the nodes into delta-prior (fixed) and uniform-prior (free) sets and collects links.
struct Factorization {
  std::vector<NodeId> free_nodes;
  std::map<NodeId, Position> fixed;
  std::vector<std::vector<FixedLink>> fixed_links;
  std::vector<std::vector<FreeLink>> free_links;
  std::size_t free_edge_count = 0;
};

Factorization factorize(const NetworkScenario& scenario, const RangeSet& ranges, const GridPrior& prior) {
  ranges.check_against(scenario);
  require(prior.grid.size() > 0, "grid prior has no cells");
  require(prior.grid.dim() == scenario.dim(), "grid dimension differs from scenario dimension");
  Factorization f;
  std::vector<long> slot(scenario.size(), -1);
  for (const auto& node : scenario.nodes()) {
    const NodePrior p = prior.prior_for(scenario, node.id);
    if (const auto* d = std::get_if<DeltaPrior>(&p)) {
      f.fixed[node.id] = d->at;
    } else {
      slot[index_of(node.id)] = static_cast<long>(f.free_nodes.size());
      f.free_nodes.push_back(node.id);
    }
  }
  f.fixed_links.resize(f.free_nodes.size());
  f.free_links.resize(f.free_nodes.size());
  for (const auto& m : ranges.measurements()) {
    const long a = slot[index_of(m.edge.a)];
    const long b = slot[index_of(m.edge.b)];
    if (a >= 0 && b >= 0) {
      f.free_links[a].push_back({static_cast<std::size_t>(b), m.range});
      f.free_links[b].push_back({static_cast<std::size_t>(a), m.range});
      ++f.free_edge_count;
    } else if (a >= 0) {
      f.fixed_links[a].push_back({f.fixed.at(m.edge.b), m.range});
    } else if (b >= 0) {
      f.fixed_links[b].push_back({f.fixed.at(m.edge.a), m.range});
    }
  }
  return f;
}

// Sum over fixed neighbors of log psi, per cell.
std::vector<double> unary_log(const Grid& grid, const std::vector<FixedLink>& links, const RangeLikelihood& lik) {
  std::vector<double> u(grid.size(), 0.0);
  const auto& c = grid.centers();
  for (const auto& link : links) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
      u[k] += lik.log_density(link.r, (c.col(static_cast<Eigen::Index>(k)) - link.at).norm());
    }
  }
  return u;
}

GridBelief one_hot(const Grid& grid, const Position& at) {
  GridBelief b{grid, std::vector<double>(grid.size(), 0.0)};
  b.p[grid.nearest(at)] = 1.0;
  return b;
}

bool has_cycle(std::size_t n, const std::vector<std::vector<FreeLink>>& links) {
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t a = 0; a < n; ++a) {
    for (const auto& l : links[a]) {
      if (l.other < a) continue;
      const auto ra = find(a), rb = find(l.other);
      if (ra == rb) return true;
      parent[ra] = rb;
    }
  }
  return false;
}

}  // namespace

Grid::Grid(Position lower, Position upper, std::vector<int> cells_per_axis)
    : lower_(std::move(lower)), upper_(std::move(upper)), cells_(std::move(cells_per_axis)) {
  require(lower_.size() == 2 || lower_.size() == 3, "grid must be 2-D or 3-D");
  require(upper_.size() == lower_.size(), "grid bounds differ in dimension");
  require(cells_.size() == static_cast<std::size_t>(lower_.size()), "cells_per_axis must match the dimension");
  require(lower_.allFinite() && upper_.allFinite(), "grid bounds must be finite");
  require((upper_.array() > lower_.array()).all(), "grid upper bound must exceed lower bound");
  size_ = 1;
  for (int n : cells_) {
    require(n >= 1, "each axis needs at least one cell");
    size_ *= static_cast<std::size_t>(n);
  }
  centers_.resize(lower_.size(), static_cast<Eigen::Index>(size_));
  for (std::size_t k = 0; k < size_; ++k) {
    std::size_t rest = k;
    for (int d = 0; d < dim(); ++d) {
      const auto i = rest % static_cast<std::size_t>(cells_[d]);
      rest /= static_cast<std::size_t>(cells_[d]);
      centers_(d, static_cast<Eigen::Index>(k)) =
          lower_(d) + (static_cast<double>(i) + 0.5) * (upper_(d) - lower_(d)) / cells_[d];
    }
  }
}

Grid::Grid(Position lower, Position upper, int cells_per_axis)
    : Grid(lower, upper, std::vector<int>(static_cast<std::size_t>(lower.size()), cells_per_axis)) {}

Position Grid::cell_width() const {
  Position w(dim());
  for (int d = 0; d < dim(); ++d) w(d) = (upper_(d) - lower_(d)) / cells_[d];
  return w;
}

double Grid::cell_volume() const { return cell_width().prod(); }

Position Grid::center(std::size_t index) const {
  require(index < size_, "cell index out of range");
  return centers_.col(static_cast<Eigen::Index>(index));
}

std::size_t Grid::nearest(const Position& p) const {
  require(p.size() == dim(), "point dimension differs from grid");
  std::size_t index = 0, stride = 1;
  for (int d = 0; d < dim(); ++d) {
    const double t = (p(d) - lower_(d)) / (upper_(d) - lower_(d)) * cells_[d];
    const long i = std::clamp(static_cast<long>(std::floor(t)), 0L, static_cast<long>(cells_[d] - 1));
    index += static_cast<std::size_t>(i) * stride;
    stride *= static_cast<std::size_t>(cells_[d]);
  }
  return index;
}

bool Grid::contains(const Position& p) const {
  return p.size() == dim() && (p.array() >= lower_.array()).all() && (p.array() <= upper_.array()).all();
}

NodePrior GridPrior::prior_for(const NetworkScenario& scenario, NodeId id) const {
  if (scenario.is_anchor(id)) return DeltaPrior{scenario.position(id)};
  auto it = nodes.find(id);
  return it == nodes.end() ? NodePrior{UniformPrior{}} : it->second;
}

void RangeLikelihood::validate() const {
  if (model != Model::Flat) require(sigma > 0.0 && std::isfinite(sigma), "likelihood sigma must be positive");
}

double RangeLikelihood::log_density(double r, double d) const {
  switch (model) {
    case Model::Flat:
      return 0.0;
    case Model::AdditiveGaussian: {
      const double z = (r - d) / sigma;
      return -0.5 * z * z - std::log(sigma) - kLogSqrt2Pi;
    }
    case Model::MultiplicativeGaussian:
    default: {
      const double s = sigma * std::max(d, 1e-12);
      const double z = (r - d) / s;
      return -0.5 * z * z - std::log(s) - kLogSqrt2Pi;
    }
  }
}

double RangeLikelihood::density(double r, double d) const { return std::max(std::exp(log_density(r, d)), kTiny); }

double RangeLikelihood::distance_spread(double r) const {
  switch (model) {
    case Model::AdditiveGaussian:
      return sigma;
    case Model::MultiplicativeGaussian:
      return sigma * std::max(r, 1e-12);
    case Model::Flat:
    default:
      return std::numeric_limits<double>::infinity();
  }
}

double GridBelief::total() const { return std::accumulate(p.begin(), p.end(), 0.0); }

Posterior grid_posterior(const NetworkScenario& scenario, const RangeSet& ranges, const GridPrior& prior,
                         const RangeLikelihood& likelihood) {
  likelihood.validate();
  const auto f = factorize(scenario, ranges, prior);
  const Grid& grid = prior.grid;
  const std::size_t cells = grid.size();
  const std::size_t n_free = f.free_nodes.size();
  if (n_free > 2) fail(ErrorCode::GridTooLarge, "exhaustive posterior supports at most two uniform agents");
  if (static_cast<double>(cells) > 1e7 || (n_free == 2 && static_cast<double>(cells) * cells > 1e7)) {
    fail(ErrorCode::GridTooLarge, "joint grid exceeds 1e7 cells");
  }

  Posterior out;
  for (const auto& [id, at] : f.fixed) {
    if (!scenario.is_anchor(id)) out[id] = one_hot(grid, at);
  }
  std::vector<std::vector<double>> unary(n_free);
  for (std::size_t a = 0; a < n_free; ++a) unary[a] = unary_log(grid, f.fixed_links[a], likelihood);

  if (n_free == 2 && !f.free_links[0].empty()) {
    std::vector<double> joint(cells * cells);
    const auto& c = grid.centers();
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < cells; ++p) {
      for (std::size_t q = 0; q < cells; ++q) {
        double l = unary[0][p] + unary[1][q];
        const double d = (c.col(static_cast<Eigen::Index>(p)) - c.col(static_cast<Eigen::Index>(q))).norm();
        for (const auto& link : f.free_links[0]) l += likelihood.log_density(link.r, d);
        joint[p * cells + q] = l;
        top = std::max(top, l);
      }
    }
    std::vector<double> m0(cells, 0.0), m1(cells, 0.0);
    double total = 0.0;
    for (std::size_t p = 0; p < cells; ++p) {
      for (std::size_t q = 0; q < cells; ++q) {
        const double w = std::exp(joint[p * cells + q] - top);
        m0[p] += w;
        m1[q] += w;
        total += w;
      }
    }
    for (double& x : m0) x /= total;
    for (double& x : m1) x /= total;
    out[f.free_nodes[0]] = {grid, std::move(m0)};
    out[f.free_nodes[1]] = {grid, std::move(m1)};
    return out;
  }
  for (std::size_t a = 0; a < n_free; ++a) out[f.free_nodes[a]] = {grid, softmax(unary[a])};
  return out;
}

Position estimate_mmse(const GridBelief& belief) {
  require(belief.p.size() == belief.grid.size(), "belief size differs from grid");
  Position mean = Position::Zero(belief.grid.dim());
  for (std::size_t k = 0; k < belief.p.size(); ++k) {
    if (belief.p[k] != 0.0) mean += belief.p[k] * belief.grid.centers().col(static_cast<Eigen::Index>(k));
  }
  return mean;
}

Position estimate_map(const GridBelief& belief) {
  require(!belief.p.empty() && belief.p.size() == belief.grid.size(), "belief size differs from grid");
  // max_element returns the first maximum, which is the documented tie-break.
  const auto best = std::max_element(belief.p.begin(), belief.p.end());
  return belief.grid.center(static_cast<std::size_t>(best - belief.p.begin()));
}

std::map<NodeId, Position> estimate_mmse(const Posterior& posterior) {
  std::map<NodeId, Position> out;
  for (const auto& [id, b] : posterior) out[id] = estimate_mmse(b);
  return out;
}

std::map<NodeId, Position> estimate_map(const Posterior& posterior) {
  std::map<NodeId, Position> out;
  for (const auto& [id, b] : posterior) out[id] = estimate_map(b);
  return out;
}

BpResult run_bp(const NetworkScenario& scenario, const RangeSet& ranges, const GridPrior& prior,
                const RangeLikelihood& likelihood, const BpConfig& config) {
  likelihood.validate();
  require(config.max_iterations >= 1, "BP needs at least one iteration");
  const auto f = factorize(scenario, ranges, prior);
  const Grid& grid = prior.grid;
  const std::size_t cells = grid.size();
  const std::size_t n_free = f.free_nodes.size();
  const auto& c = grid.centers();

  // Messages from delta nodes never change.
  std::vector<std::vector<std::vector<double>>> fixed_msgs(n_free);
  for (std::size_t a = 0; a < n_free; ++a) {
    for (const auto& link : f.fixed_links[a]) {
      fixed_msgs[a].push_back(unary_log(grid, {link}, likelihood));
      fixed_msgs[a].back() = softmax(fixed_msgs[a].back());
    }
  }
  // msgs[a][k]: message into free node a from its k-th free neighbor, initialised to 1.
  const std::vector<double> flat(cells, 1.0 / static_cast<double>(cells));
  std::vector<std::vector<std::vector<double>>> msgs(n_free);
  for (std::size_t a = 0; a < n_free; ++a) msgs[a].assign(f.free_links[a].size(), flat);
  // Position of a within b's neighbor list, to find the reverse message.
  std::vector<std::vector<std::size_t>> reverse(n_free);
  for (std::size_t a = 0; a < n_free; ++a) {
    for (const auto& link : f.free_links[a]) {
      const auto& back = f.free_links[link.other];
      std::size_t pos = 0;
      while (back[pos].other != a) ++pos;
      reverse[a].push_back(pos);
    }
  }

  BpResult result;
  result.damped = has_cycle(n_free, f.free_links);
  std::vector<std::vector<double>> beliefs(n_free, flat);

  auto compute_belief = [&](std::size_t a) {
    std::vector<double> b(cells, 1.0);
    for (const auto& m : fixed_msgs[a])
      for (std::size_t k = 0; k < cells; ++k) b[k] *= m[k];
    for (const auto& m : msgs[a])
      for (std::size_t k = 0; k < cells; ++k) b[k] *= m[k];
    normalize_or_throw(b, "belief");
    return b;
  };

  int it = 0;
  bool converged = false;
  while (it < config.max_iterations) {
    ++it;
    // New message a -> b uses a's previous belief divided by the previous message b -> a.
    auto next = msgs;
    for (std::size_t a = 0; a < n_free; ++a) {
      for (std::size_t k = 0; k < f.free_links[a].size(); ++k) {
        const auto& link = f.free_links[a][k];
        const std::size_t b = link.other;
        const auto& back = msgs[a][k];
        std::vector<double> cavity(cells);
        for (std::size_t q = 0; q < cells; ++q) cavity[q] = beliefs[a][q] / back[q];
        std::vector<double> m(cells, 0.0);
        for (std::size_t p = 0; p < cells; ++p) {
          double s = 0.0;
          for (std::size_t q = 0; q < cells; ++q) {
            if (cavity[q] == 0.0) continue;
            const double d = (c.col(static_cast<Eigen::Index>(p)) - c.col(static_cast<Eigen::Index>(q))).norm();
            s += likelihood.density(link.r, d) * cavity[q];
          }
          m[p] = s;
        }
        normalize_or_throw(m, "message");
        for (double& x : m) x = std::max(x, 1e-300);
        next[b][reverse[a][k]] = std::move(m);
      }
    }
    msgs = std::move(next);

    double change = 0.0;
    for (std::size_t a = 0; a < n_free; ++a) {
      auto b = compute_belief(a);
      if (result.damped) {
        for (std::size_t k = 0; k < cells; ++k) b[k] = 0.5 * b[k] + 0.5 * beliefs[a][k];
      }
      for (std::size_t k = 0; k < cells; ++k) change = std::max(change, std::abs(b[k] - beliefs[a][k]));
      beliefs[a] = std::move(b);
    }
    if (change <= config.tolerance) {
      converged = true;
      break;
    }
  }

  for (std::size_t a = 0; a < n_free; ++a) {
    GridBelief b{grid, std::move(beliefs[a])};
    result.mmse[f.free_nodes[a]] = estimate_mmse(b);
    result.map[f.free_nodes[a]] = estimate_map(b);
    result.beliefs[f.free_nodes[a]] = std::move(b);
  }
  for (const auto& [id, at] : f.fixed) {
    result.beliefs[id] = one_hot(grid, at);
    result.mmse[id] = at;
    result.map[id] = at;
  }
  result.iterations = it;
  result.converged = converged;
  return result;
}

void ParticleBelief::validate() const {
  require(!particles.empty(), "particle belief needs at least one particle");
  require(particles.size() == weights.size(), "particle and weight counts differ");
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0 && std::isfinite(w), "particle weights must be non-negative");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-12, "particle weights must sum to 1");
}

Position ParticleBelief::mean() const {
  require(!particles.empty(), "particle belief is empty");
  Position m = Position::Zero(particles.front().size());
  for (std::size_t k = 0; k < particles.size(); ++k) m += weights[k] * particles[k];
  return m;
}

double ParticleBelief::effective_sample_size() const {
  double s = 0.0;
  for (double w : weights) s += w * w;
  return s > 0.0 ? 1.0 / s : 0.0;
}

ParticleBelief systematic_resample(const ParticleBelief& belief, Rng& rng) {
  belief.validate();
  const std::size_t n = belief.particles.size();
  ParticleBelief out;
  out.particles.reserve(n);
  out.weights.assign(n, 1.0 / static_cast<double>(n));
  const double u0 = rng.uniform() / static_cast<double>(n);
  double cumulative = belief.weights[0];
  std::size_t k = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const double u = u0 + static_cast<double>(s) / static_cast<double>(n);
    while (u > cumulative && k + 1 < n) cumulative += belief.weights[++k];
    out.particles.push_back(belief.particles[k]);
  }
  return out;
}

namespace {

// One component of the NBP proposal mixture.
struct Component {
  enum class Kind { Box, Ring, Kernel } kind = Kind::Box;
  Position center;
  double radius = 0.0;
  double spread = 0.0;
  std::vector<Position> kernels;  // Kernel: centers; Ring/Box unused
  Position bandwidth;
};

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double sphere_area_factor(int dim, double rho) { return dim == 2 ? 2.0 * kPi * rho : 4.0 * kPi * rho * rho; }

Position sample(const Component& comp, const Grid& grid, Rng& rng) {
  const int dim = grid.dim();
  Position x(dim);
  switch (comp.kind) {
    case Component::Kind::Box:
      for (int d = 0; d < dim; ++d) x(d) = rng.uniform(grid.lower()(d), grid.upper()(d));
      return x;
    case Component::Kind::Ring: {
      double rho = -1.0;
      for (int tries = 0; tries < 1000 && rho <= 0.0; ++tries) rho = rng.normal(comp.radius, comp.spread);
      if (rho <= 0.0) rho = std::abs(comp.radius) + 1e-12;
      Position dir(dim);
      do {
        for (int d = 0; d < dim; ++d) dir(d) = rng.normal();
      } while (dir.norm() < 1e-12);
      return comp.center + rho * dir.normalized();
    }
    case Component::Kind::Kernel:
    default: {
      const auto& k = comp.kernels[rng.index(comp.kernels.size())];
      for (int d = 0; d < dim; ++d) x(d) = rng.normal(k(d), comp.bandwidth(d));
      return x;
    }
  }
}

double density(const Component& comp, const Grid& grid, const Position& x) {
  const int dim = grid.dim();
  switch (comp.kind) {
    case Component::Kind::Box:
      return grid.contains(x) ? 1.0 / (grid.upper() - grid.lower()).prod() : 0.0;
    case Component::Kind::Ring: {
      const double rho = (x - comp.center).norm();
      if (rho <= 0.0) return 0.0;
      const double z = (rho - comp.radius) / comp.spread;
      const double radial =
          std::exp(-0.5 * z * z - kLogSqrt2Pi) / comp.spread / normal_cdf(comp.radius / comp.spread);
      return radial / sphere_area_factor(dim, rho);
    }
    case Component::Kind::Kernel:
    default: {
      double norm = 1.0;
      for (int d = 0; d < dim; ++d) norm *= comp.bandwidth(d) * std::sqrt(2.0 * kPi);
      double s = 0.0;
      for (const auto& k : comp.kernels) {
        double e = 0.0;
        for (int d = 0; d < dim; ++d) {
          const double z = (x(d) - k(d)) / comp.bandwidth(d);
          e += z * z;
        }
        s += std::exp(-0.5 * e);
      }
      return s / (norm * static_cast<double>(comp.kernels.size()));
    }
  }
}

// Evenly strided subset of an equally weighted particle set.
std::vector<Position> stride_subset(const ParticleBelief& b, std::size_t m) {
  const std::size_t n = b.particles.size();
  m = std::min(m, n);
  std::vector<Position> out;
  out.reserve(m);
  for (std::size_t k = 0; k < m; ++k) out.push_back(b.particles[k * n / m]);
  return out;
}

// Points where two measured circles around fixed neighbours cross (2-D only).
std::vector<Position> circle_crossings(const std::vector<Position>& centers, const std::vector<double>& radii) {
  std::vector<Position> out;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    for (std::size_t j = i + 1; j < centers.size(); ++j) {
      const Eigen::Vector2d c = centers[j] - centers[i];
      const double d = c.norm();
      if (d <= 0.0) continue;
      // Clamp so that near-miss circles still contribute their closest approach.
      const double a = std::clamp((radii[i] * radii[i] - radii[j] * radii[j] + d * d) / (2.0 * d), -radii[i], radii[i]);
      const double h = std::sqrt(std::max(0.0, radii[i] * radii[i] - a * a));
      const Eigen::Vector2d u = c / d, perp(-u(1), u(0));
      const Eigen::Vector2d base = centers[i] + a * u;
      out.push_back(base + h * perp);
      if (h > 0.0) out.push_back(base - h * perp);
    }
  }
  return out;
}

Position silverman_bandwidth(const std::vector<Position>& pts) {
  const int dim = static_cast<int>(pts.front().size());
  const double m = static_cast<double>(pts.size());
  Position mean = Position::Zero(dim), var = Position::Zero(dim);
  for (const auto& p : pts) mean += p;
  mean /= m;
  for (const auto& p : pts) var += (p - mean).cwiseAbs2();
  var /= std::max(m - 1.0, 1.0);
  const double factor = std::pow(4.0 / ((dim + 2.0) * m), 1.0 / (dim + 4.0));
  Position h(dim);
  for (int d = 0; d < dim; ++d) h(d) = std::max(std::sqrt(var(d)) * factor, 1e-9);
  return h;
}

}  // namespace

NbpResult run_nbp(const NetworkScenario& scenario, const RangeSet& ranges, const GridPrior& prior,
                  const RangeLikelihood& likelihood, int n_particles, const NbpConfig& config, RngSeed seed) {
  likelihood.validate();
  require(n_particles >= 50, "NBP needs at least 50 particles");
  require(config.iterations >= 1 && config.message_particles >= 1, "NBP iterations and message size must be >= 1");
  const auto f = factorize(scenario, ranges, prior);
  const Grid& grid = prior.grid;
  const int dim = grid.dim();
  const std::size_t n = static_cast<std::size_t>(n_particles);
  const std::size_t n_free = f.free_nodes.size();
  const bool informative = likelihood.model != RangeLikelihood::Model::Flat;
  Rng rng(derive_seed(seed.value, {4}));

  std::vector<ParticleBelief> beliefs(n_free);
  const Component box{};
  for (auto& b : beliefs) {
    for (std::size_t k = 0; k < n; ++k) b.particles.push_back(sample(box, grid, rng));
    b.weights.assign(n, 1.0 / static_cast<double>(n));
  }

  NbpResult result;
  std::vector<Position> estimates(n_free);
  for (int it = 1; it <= config.iterations; ++it) {
    std::vector<std::vector<Position>> subsets(n_free);
    for (std::size_t a = 0; a < n_free; ++a) subsets[a] = stride_subset(beliefs[a], config.message_particles);

    std::vector<ParticleBelief> next(n_free);
    for (std::size_t a = 0; a < n_free; ++a) {
      std::vector<Component> mixture{box};
      if (informative) {
        std::vector<Position> centers;
        std::vector<double> radii;
        double widest = 0.0;
        for (const auto& link : f.fixed_links[a]) {
          mixture.push_back({Component::Kind::Ring, link.at, link.r, likelihood.distance_spread(link.r), {}, {}});
          centers.push_back(link.at);
          radii.push_back(link.r);
          widest = std::max(widest, likelihood.distance_spread(link.r));
        }
        // With sharp ranges a single ring rarely lands near the joint mode; seed the
        // proposal at the ring crossings as well.
        if (dim == 2 && centers.size() >= 2) {
          auto crossings = circle_crossings(centers, radii);
          mixture.push_back({Component::Kind::Kernel, {}, 0.0, 0.0, std::move(crossings), Position::Constant(2, widest)});
        }
        if (it > 1) {
          for (const auto& link : f.free_links[a]) {
            const Position center = beliefs[link.other].mean();
            double var = 0.0;
            for (const auto& p : subsets[link.other]) var += (p - center).squaredNorm();
            var /= static_cast<double>(subsets[link.other].size() * dim);
            const double s = likelihood.distance_spread(link.r);
            mixture.push_back({Component::Kind::Ring, center, link.r, std::sqrt(s * s + var), {}, {}});
          }
        }
      }
      if (it > 1) {
        mixture.push_back({Component::Kind::Kernel, {}, 0.0, 0.0, subsets[a], silverman_bandwidth(subsets[a])});
      }

      ParticleBelief& out = next[a];
      std::vector<double> logw(n);
      for (std::size_t s = 0; s < n; ++s) {
        Position x = sample(mixture[rng.index(mixture.size())], grid, rng);
        double q = 0.0;
        for (const auto& comp : mixture) q += density(comp, grid, x);
        q /= static_cast<double>(mixture.size());
        double l = -std::numeric_limits<double>::infinity();
        if (grid.contains(x) && q > 0.0) {
          l = -std::log(q);
          for (const auto& link : f.fixed_links[a]) l += likelihood.log_density(link.r, (x - link.at).norm());
          if (it > 1) {
            for (const auto& link : f.free_links[a]) {
              double msg = 0.0;
              for (const auto& p : subsets[link.other]) msg += likelihood.density(link.r, (x - p).norm());
              l += std::log(msg / static_cast<double>(subsets[link.other].size()));
            }
          }
        }
        out.particles.push_back(std::move(x));
        logw[s] = l;
      }
      const double top = *std::max_element(logw.begin(), logw.end());
      if (!std::isfinite(top)) fail(ErrorCode::ParticleCollapse, "every particle has zero weight");
      out.weights.resize(n);
      double total = 0.0;
      for (std::size_t s = 0; s < n; ++s) total += out.weights[s] = std::exp(logw[s] - top);
      for (double& w : out.weights) w /= total;
      if (out.effective_sample_size() < 2.0) fail(ErrorCode::ParticleCollapse, "effective sample size below 2");
      estimates[a] = out.mean();
    }
    for (std::size_t a = 0; a < n_free; ++a) beliefs[a] = systematic_resample(next[a], rng);
    result.iterations = it;
  }

  for (std::size_t a = 0; a < n_free; ++a) {
    result.mmse[f.free_nodes[a]] = estimates[a];
    result.beliefs[f.free_nodes[a]] = std::move(beliefs[a]);
  }
  return result;
}

Eigen::VectorXd linear_gaussian_mmse(const Eigen::MatrixXd& a, const Eigen::VectorXd& r, double sigma) {
  require(a.rows() == r.size(), "A and r differ in length");
  require(sigma >= 0.0, "sigma must be non-negative");
  const Eigen::MatrixXd lhs =
      a.transpose() * a + sigma * sigma * Eigen::MatrixXd::Identity(a.cols(), a.cols());
  return lhs.ldlt().solve(a.transpose() * r);
}

void write_belief_csv(std::ostream& out, const GridBelief& belief) {
  static const char* axes[] = {"x", "y", "z"};
  for (int d = 0; d < belief.grid.dim(); ++d) out << axes[d] << ',';
  out << "probability\n";
  out.precision(17);
  for (std::size_t k = 0; k < belief.p.size(); ++k) {
    for (int d = 0; d < belief.grid.dim(); ++d) out << belief.grid.centers()(d, static_cast<Eigen::Index>(k)) << ',';
    out << belief.p[k] << '\n';
  }
}

}  // namespace radloc::bayes
