#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "radloc/core.hpp"

namespace radloc::geomsolve {

struct SolverReport {
  Position estimate;
  int iterations = 0;
  bool converged = false;
  double residual_norm = 0.0;
  std::optional<Eigen::MatrixXd> covariance;
};

nlohmann::json to_json(const SolverReport& report);

/// Levenberg-damped Gauss-Newton settings shared by the range solvers.
struct GaussNewtonOptions {
  int max_iterations = 100;
  /// Converged when an accepted step is shorter than this (meters) ...
  double step_tolerance = 1e-12;
  /// ... or the relative cost decrease of an accepted step falls below this.
  double cost_tolerance = 1e-15;
  double initial_damping = 1e-3;
};

enum class CovarianceScale {
  /// (H^T W H)^-1 times the weighted residual variance (falls back to Unit with no redundancy).
  ResidualVariance,
  /// (H^T W H)^-1 as is; right when the weights are inverse measurement variances.
  Unit,
};

/// Minimises sum (r_i - ||x - a_i||)^2. Default start: anchor centroid weighted by 1/r_i.
/// Throws SingularGeometry for anchors that do not span the space (e.g. collinear in 2-D).
SolverReport trilaterate(std::span<const Position> anchors, std::span<const double> ranges,
                         const std::optional<Position>& init = std::nullopt,
                         const GaussNewtonOptions& options = {});

/// Weighted version of trilaterate; also fills the covariance estimate.
SolverReport iterative_wls(std::span<const Position> anchors, std::span<const double> ranges,
                           std::span<const double> weights, const std::optional<Position>& init = std::nullopt,
                           const GaussNewtonOptions& options = {},
                           CovarianceScale scale = CovarianceScale::ResidualVariance);

/// Range differences d_i = ||x - a_i|| - ||x - a_ref|| (meters, c0 * TDoA).
struct TdoaSet {
  Position reference;
  std::vector<Position> anchors;
  std::vector<double> differences;
};

struct FoyOptions {
  int max_iterations = 50;
  double step_tolerance = 1e-9;
};

/// Taylor-series iterative least squares on range differences. A run that does not
/// settle is reported with converged = false rather than thrown.
SolverReport foy_tdoa(const TdoaSet& tdoa, const Position& init, const FoyOptions& options = {});

/// sqrt(trace((H^T W H)^-1)) with H the unit line-of-sight rows at `at`.
double wgdop(std::span<const Position> anchors, std::span<const double> weights, const Position& at);

struct AnchorGroup {
  std::vector<Position> anchors;
  std::vector<double> ranges;
  std::vector<double> weights;
};

struct GroupFusion {
  SolverReport report;
  /// Indices of groups whose solve failed and were left out, with the reason.
  std::vector<std::pair<std::size_t, std::string>> dropped;
};

/// Per-group WLS followed by information-form fusion of the group estimates. This is
/// Gaussian belief propagation on a tree whose factors are the groups.
GroupFusion group_fuse(std::span<const AnchorGroup> groups, const std::optional<Position>& init = std::nullopt,
                       const GaussNewtonOptions& options = {}, CovarianceScale scale = CovarianceScale::Unit);

struct AlignmentTransform {
  Eigen::MatrixXd rotation;
  Eigen::VectorXd translation;
  double scale = 1.0;
  bool reflection = false;

  Position apply(const Position& p) const { return scale * rotation * p + translation; }
};

struct Alignment {
  AlignmentTransform transform;
  std::vector<Position> aligned;
};

/// Least-squares similarity fit (Umeyama) of `relative[anchor_indices]` onto `anchor_truth`,
/// applied to every relative point. Throws DegenerateAnchors for collinear (2-D) or
/// coplanar (3-D) anchor sets.
Alignment procrustes_align(std::span<const Position> relative, std::span<const std::size_t> anchor_indices,
                           std::span<const Position> anchor_truth, bool allow_reflection = true,
                           bool allow_scaling = true);

/// Centered moving average per coordinate; windows are truncated at the ends.
std::vector<Position> smooth_track(std::span<const Position> points, int window);

}  // namespace radloc::geomsolve
