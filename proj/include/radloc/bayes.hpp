#pragma once

#include <iosfwd>
#include <map>
#include <variant>
#include <vector>

#include "radloc/core.hpp"
#include "radloc/rng.hpp"
#include "radloc/scenario.hpp"

namespace radloc::bayes {

using scenario::NetworkScenario;
using scenario::RangeSet;

/// Axis-aligned box split into equal cells. Cell index = i0 + n0 * (i1 + n1 * i2).
class Grid {
 public:
  Grid() = default;
  Grid(Position lower, Position upper, std::vector<int> cells_per_axis);
  /// Same number of cells on every axis.
  Grid(Position lower, Position upper, int cells_per_axis);

  int dim() const noexcept { return static_cast<int>(lower_.size()); }
  std::size_t size() const noexcept { return size_; }
  const Position& lower() const noexcept { return lower_; }
  const Position& upper() const noexcept { return upper_; }
  const std::vector<int>& cells_per_axis() const noexcept { return cells_; }
  Position cell_width() const;
  double cell_volume() const;

  Position center(std::size_t index) const;
  /// Cell containing `p`, clamped to the box.
  std::size_t nearest(const Position& p) const;
  bool contains(const Position& p) const;
  /// dim x size() matrix of cell centers.
  const Eigen::MatrixXd& centers() const noexcept { return centers_; }

 private:
  Position lower_, upper_;
  std::vector<int> cells_;
  std::size_t size_ = 0;
  Eigen::MatrixXd centers_;
};

struct UniformPrior {};
struct DeltaPrior {
  Position at;
};
using NodePrior = std::variant<UniformPrior, DeltaPrior>;

/// Per-node priors on a grid. Agents default to uniform over the box; anchors are
/// always a delta at their true position whatever `nodes` says.
struct GridPrior {
  Grid grid;
  std::map<NodeId, NodePrior> nodes;

  NodePrior prior_for(const NetworkScenario& scenario, NodeId id) const;
};

/// p(r | x_i, x_j) as a function of the distance d = ||x_i - x_j||.
struct RangeLikelihood {
  enum class Model { MultiplicativeGaussian, AdditiveGaussian, Flat };
  Model model = Model::MultiplicativeGaussian;
  double sigma = 0.05;

  static RangeLikelihood multiplicative(double sigma) { return {Model::MultiplicativeGaussian, sigma}; }
  static RangeLikelihood additive(double sigma) { return {Model::AdditiveGaussian, sigma}; }
  /// Constant likelihood: carries no information.
  static RangeLikelihood flat() { return {Model::Flat, 1.0}; }

  void validate() const;
  double log_density(double r, double d) const;
  /// exp(log_density), floored at the smallest positive normal double.
  double density(double r, double d) const;
  /// Spread of the true distance given a measurement r (for proposals).
  double distance_spread(double r) const;
};

/// Normalized probability over the cells of a grid.
struct GridBelief {
  Grid grid;
  std::vector<double> p;

  double total() const;
};

using Posterior = std::map<NodeId, GridBelief>;

/// Exhaustive joint posterior for at most two uniform-prior agents, marginalized per
/// agent. Throws GridTooLarge beyond two such agents or 1e7 joint cells.
Posterior grid_posterior(const NetworkScenario& scenario, const RangeSet& ranges, const GridPrior& prior,
                         const RangeLikelihood& likelihood);

/// Posterior mean of the cell centers.
Position estimate_mmse(const GridBelief& belief);
/// Center of the most probable cell; the lowest cell index wins ties.
Position estimate_map(const GridBelief& belief);
std::map<NodeId, Position> estimate_mmse(const Posterior& posterior);
std::map<NodeId, Position> estimate_map(const Posterior& posterior);

struct BpConfig {
  int max_iterations = 50;
  /// Stop once no belief cell moves by more than this between iterations.
  double tolerance = 1e-10;
};

struct BpResult {
  /// Beliefs for every node; delta-prior nodes are one-hot at their nearest cell.
  Posterior beliefs;
  std::map<NodeId, Position> mmse;
  std::map<NodeId, Position> map;
  int iterations = 0;
  bool converged = false;
  /// True when the agent subgraph has a cycle and beliefs were damped.
  bool damped = false;
};

/// Synchronous sum-product on the grid. Throws NumericalUnderflow when a belief
/// normalizer drops below 1e-300.
BpResult run_bp(const NetworkScenario& scenario, const RangeSet& ranges, const GridPrior& prior,
                const RangeLikelihood& likelihood, const BpConfig& config = {});

struct ParticleBelief {
  std::vector<Position> particles;
  std::vector<double> weights;

  /// Throws InvalidArgument unless weights are non-negative and sum to 1 within 1e-12.
  void validate() const;
  Position mean() const;
  double effective_sample_size() const;
};

/// Systematic resampling; output weights are exactly 1/n.
ParticleBelief systematic_resample(const ParticleBelief& belief, Rng& rng);

struct NbpConfig {
  int iterations = 4;
  /// Agent-to-agent messages are evaluated on at most this many neighbor particles.
  int message_particles = 256;
};

struct NbpResult {
  std::map<NodeId, ParticleBelief> beliefs;
  std::map<NodeId, Position> mmse;
  int iterations = 0;
};

/// Nonparametric BP: importance sampling from a mixture of the prior and rings around
/// neighbors, weighting by prior times incoming messages, then resampling.
/// Throws ParticleCollapse when the effective sample size drops below 2.
NbpResult run_nbp(const NetworkScenario& scenario, const RangeSet& ranges, const GridPrior& prior,
                  const RangeLikelihood& likelihood, int n_particles, const NbpConfig& config, RngSeed seed);

/// (A^T A + sigma^2 I)^-1 A^T r: the MMSE estimate for r = A x + noise with a
/// unit-variance zero-mean Gaussian prior on x and noise variance sigma^2.
Eigen::VectorXd linear_gaussian_mmse(const Eigen::MatrixXd& a, const Eigen::VectorXd& r, double sigma);

/// CSV with one row per cell: coordinates then probability.
void write_belief_csv(std::ostream& out, const GridBelief& belief);

}  // namespace radloc::bayes
