#include "radloc/geomsolve.hpp"

#include <algorithm>
#include <cmath>

namespace radloc::geomsolve {

namespace {

void check_range_inputs(std::span<const Position> anchors, std::span<const double> ranges) {
  require(!anchors.empty(), "no anchors");
  require(anchors.size() == ranges.size(), "anchor and range counts differ");
  const auto dim = anchors.front().size();
  require(dim == 2 || dim == 3, "positions must be 2-D or 3-D");
  for (const auto& a : anchors) require(a.size() == dim && a.allFinite(), "anchor positions must be finite and share one dimension");
  for (double r : ranges) require(r > 0.0 && std::isfinite(r), "ranges must be positive and finite");
  if (anchors.size() < static_cast<std::size_t>(dim) + 1) {
    fail(ErrorCode::SingularGeometry, "need at least dim + 1 anchors");
  }
  std::vector<Position> pts(anchors.begin(), anchors.end());
  if (affine_rank(pts) < dim) fail(ErrorCode::SingularGeometry, "anchors do not span the space (collinear/coplanar)");
}

Position weighted_anchor_centroid(std::span<const Position> anchors, std::span<const double> ranges) {
  Position c = Position::Zero(anchors.front().size());
  double total = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const double w = 1.0 / std::max(ranges[i], 1e-12);
    c += w * anchors[i];
    total += w;
  }
  return c / total;
}

struct RangeCost {
  std::span<const Position> anchors;
  std::span<const double> ranges;
  std::span<const double> weights;

  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }

  double cost(const Position& x) const {
    double c = 0.0;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const double e = ranges[i] - (x - anchors[i]).norm();
      c += weight(i) * e * e;
    }
    return c;
  }

  // Normal equations of the linearised model: info = J^T W J, gradient = J^T W e.
  void linearise(const Position& x, Eigen::MatrixXd& info, Eigen::VectorXd& rhs) const {
    const auto dim = x.size();
    info = Eigen::MatrixXd::Zero(dim, dim);
    rhs = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const Position diff = x - anchors[i];
      const double d = diff.norm();
      if (d < 1e-15) continue;
      const Eigen::VectorXd u = diff / d;
      const double w = weight(i);
      info.noalias() += w * u * u.transpose();
      rhs.noalias() += w * (ranges[i] - d) * u;
    }
  }
};

SolverReport gauss_newton(const RangeCost& problem, Position x, const GaussNewtonOptions& options) {
  SolverReport report;
  double cost = problem.cost(x);
  double damping = options.initial_damping;
  Eigen::MatrixXd info;
  Eigen::VectorXd rhs;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    problem.linearise(x, info, rhs);
    if (cost == 0.0 || rhs.norm() == 0.0) {
      report.converged = true;
      break;
    }
    Eigen::MatrixXd damped = info;
    damped.diagonal() += damping * info.diagonal().cwiseMax(1e-12);
    const Eigen::VectorXd step = damped.ldlt().solve(rhs);
    if (!step.allFinite()) break;
    const Position candidate = x + step;
    const double candidate_cost = problem.cost(candidate);
    const bool tiny_step = step.norm() < options.step_tolerance * (1.0 + x.norm());
    if (candidate_cost < cost) {
      const double decrease = cost - candidate_cost;
      const double previous = cost;
      x = candidate;
      cost = candidate_cost;
      damping = std::max(damping / 10.0, 1e-15);
      if (tiny_step || decrease <= options.cost_tolerance * previous) {
        report.converged = true;
        ++it;
        break;
      }
    } else {
      damping *= 10.0;
      if (tiny_step || damping > 1e12) {
        // No descent possible from here: x is a stationary point to working precision.
        report.converged = true;
        ++it;
        break;
      }
    }
  }
  report.estimate = std::move(x);
  report.iterations = it;
  report.residual_norm = std::sqrt(cost);
  return report;
}

Eigen::MatrixXd invert_spd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const auto& ev = eig.eigenvalues();
  if (ev.minCoeff() <= 1e-12 * std::max(ev.maxCoeff(), 1e-300)) {
    fail(ErrorCode::SingularGeometry, "information matrix is rank deficient");
  }
  return eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

nlohmann::json to_json(const SolverReport& report) {
  nlohmann::json j;
  j["estimate"] = std::vector<double>(report.estimate.data(), report.estimate.data() + report.estimate.size());
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  j["residual"] = report.residual_norm;
  if (report.covariance) {
    std::vector<double> rows;
    const auto& c = *report.covariance;
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
      for (Eigen::Index k = 0; k < c.cols(); ++k) rows.push_back(c(r, k));
    }
    j["covariance"] = rows;
  } else {
    j["covariance"] = nullptr;
  }
  return j;
}

SolverReport trilaterate(std::span<const Position> anchors, std::span<const double> ranges,
                         const std::optional<Position>& init, const GaussNewtonOptions& options) {
  check_range_inputs(anchors, ranges);
  Position x0 = init ? *init : weighted_anchor_centroid(anchors, ranges);
  require(x0.size() == anchors.front().size() && x0.allFinite(), "initial position must be finite with the anchor dimension");
  return gauss_newton(RangeCost{anchors, ranges, {}}, std::move(x0), options);
}

SolverReport iterative_wls(std::span<const Position> anchors, std::span<const double> ranges,
                           std::span<const double> weights, const std::optional<Position>& init,
                           const GaussNewtonOptions& options, CovarianceScale scale) {
  check_range_inputs(anchors, ranges);
  require(weights.size() == ranges.size(), "weight and range counts differ");
  for (double w : weights) require(w > 0.0 && std::isfinite(w), "weights must be positive and finite");
  Position x0 = init ? *init : weighted_anchor_centroid(anchors, ranges);
  require(x0.size() == anchors.front().size() && x0.allFinite(), "initial position must be finite with the anchor dimension");

  const RangeCost problem{anchors, ranges, weights};
  SolverReport report = gauss_newton(problem, std::move(x0), options);

  Eigen::MatrixXd info;
  Eigen::VectorXd rhs;
  problem.linearise(report.estimate, info, rhs);
  Eigen::MatrixXd cov = invert_spd(info);
  const auto dim = static_cast<std::size_t>(report.estimate.size());
  if (scale == CovarianceScale::ResidualVariance && anchors.size() > dim) {
    cov *= report.residual_norm * report.residual_norm / static_cast<double>(anchors.size() - dim);
  }
  report.covariance = std::move(cov);
  return report;
}

SolverReport foy_tdoa(const TdoaSet& tdoa, const Position& init, const FoyOptions& options) {
  const auto dim = tdoa.reference.size();
  require(dim == 2 || dim == 3, "positions must be 2-D or 3-D");
  require(tdoa.anchors.size() == tdoa.differences.size(), "anchor and difference counts differ");
  require(tdoa.anchors.size() >= static_cast<std::size_t>(dim), "need at least dim range differences");
  require(init.size() == dim && init.allFinite(), "initial position must be finite with the anchor dimension");
  for (const auto& a : tdoa.anchors) require(a.size() == dim && a.allFinite(), "anchor positions must be finite");
  for (double d : tdoa.differences) require(std::isfinite(d), "range differences must be finite");

  std::vector<Position> all(tdoa.anchors.begin(), tdoa.anchors.end());
  all.push_back(tdoa.reference);
  if (affine_rank(all) < dim) fail(ErrorCode::SingularGeometry, "anchors do not span the space");

  const auto m = static_cast<Eigen::Index>(tdoa.anchors.size());
  Eigen::MatrixXd g(m, dim);
  Eigen::VectorXd resid(m);
  auto linearise = [&](const Position& x) {
    const Position to_ref = x - tdoa.reference;
    const double d_ref = std::max(to_ref.norm(), 1e-15);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Position to_a = x - tdoa.anchors[static_cast<std::size_t>(i)];
      const double d_a = std::max(to_a.norm(), 1e-15);
      g.row(i) = (to_a / d_a - to_ref / d_ref).transpose();
      resid(i) = tdoa.differences[static_cast<std::size_t>(i)] - (d_a - d_ref);
    }
  };

  SolverReport report;
  Position x = init;
  int it = 0;
  while (it < options.max_iterations) {
    ++it;
    linearise(x);
    const Eigen::MatrixXd normal = g.transpose() * g;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
    if (eig.eigenvalues().minCoeff() <= 1e-12 * std::max(eig.eigenvalues().maxCoeff(), 1e-300)) {
      fail(ErrorCode::SingularGeometry, "hyperbolic geometry is degenerate at the current iterate");
    }
    const Eigen::VectorXd step = normal.ldlt().solve(g.transpose() * resid);
    if (!step.allFinite()) break;
    x += step;
    if (step.norm() < options.step_tolerance) {
      report.converged = true;
      break;
    }
  }
  linearise(x);
  report.estimate = x;
  report.iterations = it;
  report.residual_norm = resid.norm();
  if (!x.allFinite()) report.converged = false;
  return report;
}

double wgdop(std::span<const Position> anchors, std::span<const double> weights, const Position& at) {
  require(!anchors.empty() && anchors.size() == weights.size(), "anchor and weight counts differ");
  const auto dim = at.size();
  for (double w : weights) require(w > 0.0 && std::isfinite(w), "weights must be positive and finite");
  std::vector<Position> pts(anchors.begin(), anchors.end());
  if (anchors.size() > static_cast<std::size_t>(dim) && affine_rank(pts) < dim) {
    fail(ErrorCode::SingularGeometry, "anchors are collinear/coplanar");
  }
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Position diff = at - anchors[i];
    const double d = diff.norm();
    if (d < 1e-15) fail(ErrorCode::SingularGeometry, "evaluation point coincides with an anchor");
    const Eigen::VectorXd u = diff / d;
    info.noalias() += weights[i] * u * u.transpose();
  }
  return std::sqrt(invert_spd(info).trace());
}

GroupFusion group_fuse(std::span<const AnchorGroup> groups, const std::optional<Position>& init,
                       const GaussNewtonOptions& options, CovarianceScale scale) {
  require(!groups.empty(), "no groups");
  GroupFusion out;
  std::vector<SolverReport> solved;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    try {
      solved.push_back(iterative_wls(groups[g].anchors, groups[g].ranges, groups[g].weights, init, options, scale));
    } catch (const Error& e) {
      out.dropped.emplace_back(g, e.what());
    }
  }
  if (solved.empty()) fail(ErrorCode::AllGroupsFailed, "every anchor group failed to solve");
  if (solved.size() == 1) {
    out.report = std::move(solved.front());
    return out;
  }

  const auto dim = solved.front().estimate.size();
  Eigen::MatrixXd info_sum = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd info_vec = Eigen::VectorXd::Zero(dim);
  SolverReport fused;
  fused.converged = true;
  double resid_sq = 0.0;
  for (const auto& r : solved) {
    const Eigen::MatrixXd info = invert_spd(*r.covariance);
    info_sum += info;
    info_vec += info * r.estimate;
    fused.iterations = std::max(fused.iterations, r.iterations);
    fused.converged = fused.converged && r.converged;
    resid_sq += r.residual_norm * r.residual_norm;
  }
  Eigen::MatrixXd cov = invert_spd(info_sum);
  fused.estimate = cov * info_vec;
  fused.covariance = std::move(cov);
  fused.residual_norm = std::sqrt(resid_sq);
  out.report = std::move(fused);
  return out;
}

Alignment procrustes_align(std::span<const Position> relative, std::span<const std::size_t> anchor_indices,
                           std::span<const Position> anchor_truth, bool allow_reflection, bool allow_scaling) {
  require(anchor_indices.size() == anchor_truth.size(), "anchor index and truth counts differ");
  require(!anchor_truth.empty(), "no anchors");
  const auto dim = anchor_truth.front().size();
  if (anchor_truth.size() < static_cast<std::size_t>(dim) + 1) {
    fail(ErrorCode::DegenerateAnchors, "need at least dim + 1 anchors");
  }
  std::vector<Position> truth(anchor_truth.begin(), anchor_truth.end());
  std::vector<Position> rel;
  for (auto idx : anchor_indices) {
    require(idx < relative.size(), "anchor index out of range");
    require(relative[idx].size() == dim, "dimension mismatch");
    rel.push_back(relative[idx]);
  }
  if (affine_rank(truth, 1e-6) < dim || affine_rank(rel, 1e-6) < dim) {
    fail(ErrorCode::DegenerateAnchors, "anchors are (nearly) collinear or coplanar");
  }

  const auto k = static_cast<double>(truth.size());
  Position mu_t = Position::Zero(dim), mu_r = Position::Zero(dim);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    mu_t += truth[i];
    mu_r += rel[i];
  }
  mu_t /= k;
  mu_r /= k;
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(dim, dim);
  double var_r = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const Position ct = truth[i] - mu_t;
    const Position cr = rel[i] - mu_r;
    cross.noalias() += ct * cr.transpose();
    var_r += cr.squaredNorm();
  }
  cross /= k;
  var_r /= k;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(dim, dim);
  if (!allow_reflection && svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
    s(dim - 1, dim - 1) = -1.0;
  }
  AlignmentTransform t;
  t.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  t.reflection = t.rotation.determinant() < 0.0;
  t.scale = allow_scaling ? (svd.singularValues().asDiagonal() * s).trace() / var_r : 1.0;
  t.translation = mu_t - t.scale * t.rotation * mu_r;

  Alignment out;
  out.aligned.reserve(relative.size());
  for (const auto& p : relative) out.aligned.push_back(t.apply(p));
  out.transform = std::move(t);
  return out;
}

std::vector<Position> smooth_track(std::span<const Position> points, int window) {
  require(window >= 1 && window % 2 == 1, "window must be a positive odd count");
  const auto n = static_cast<std::ptrdiff_t>(points.size());
  const std::ptrdiff_t half = window / 2;
  std::vector<Position> out;
  out.reserve(points.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto lo = std::max<std::ptrdiff_t>(0, i - half);
    const auto hi = std::min<std::ptrdiff_t>(n - 1, i + half);
    Position acc = Position::Zero(points[static_cast<std::size_t>(i)].size());
    for (auto k = lo; k <= hi; ++k) acc += points[static_cast<std::size_t>(k)];
    out.push_back(acc / static_cast<double>(hi - lo + 1));
  }
  return out;
}

}  // namespace radloc::geomsolve
