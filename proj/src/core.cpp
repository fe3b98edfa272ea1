#include "radloc/core.hpp"

#include <cmath>

namespace radloc {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DisconnectedAgent: return "DisconnectedAgent";
    case ErrorCode::SingularGeometry: return "SingularGeometry";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DegenerateAnchors: return "DegenerateAnchors";
    case ErrorCode::AllGroupsFailed: return "AllGroupsFailed";
    case ErrorCode::MissingPosition: return "MissingPosition";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::GridTooLarge: return "GridTooLarge";
    case ErrorCode::NumericalUnderflow: return "NumericalUnderflow";
    case ErrorCode::ParticleCollapse: return "ParticleCollapse";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::TooManySources: return "TooManySources";
    case ErrorCode::PhaseOutOfRange: return "PhaseOutOfRange";
    case ErrorCode::ParallelBearings: return "ParallelBearings";
    case ErrorCode::EmptyMap: return "EmptyMap";
    case ErrorCode::NoSharedAps: return "NoSharedAps";
    case ErrorCode::ZeroEnergy: return "ZeroEnergy";
    case ErrorCode::ZeroEquivalentBandwidth: return "ZeroEquivalentBandwidth";
    case ErrorCode::EmptyResolvedSet: return "EmptyResolvedSet";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

int affine_rank(const std::vector<Position>& points, double relative_tolerance) {
  if (points.size() < 2) return 0;
  const auto dim = points.front().size();
  Eigen::MatrixXd centered(static_cast<Eigen::Index>(points.size()), dim);
  Position mean = Position::Zero(dim);
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    centered.row(static_cast<Eigen::Index>(i)) = (points[i] - mean).transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > relative_tolerance * s(0)) ++rank;
  }
  return rank;
}

bool all_finite(const Position& p) noexcept { return p.allFinite(); }

}  // namespace radloc
