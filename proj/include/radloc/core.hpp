#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace radloc {

/// A point in 2-D or 3-D Euclidean space, in meters.
using Position = Eigen::VectorXd;

/// Node identifier. Ids are dense: node `k` of a scenario has id `k`.
enum class NodeId : std::uint32_t {};

constexpr std::uint32_t index_of(NodeId id) noexcept { return static_cast<std::uint32_t>(id); }
constexpr NodeId node_id(std::uint32_t index) noexcept { return static_cast<NodeId>(index); }

enum class ErrorCode {
  InvalidArgument,
  DisconnectedAgent,
  SingularGeometry,
  NoConvergence,
  DegenerateAnchors,
  AllGroupsFailed,
  MissingPosition,
  DisconnectedGraph,
  GridTooLarge,
  NumericalUnderflow,
  ParticleCollapse,
  SingularCovariance,
  TooManySources,
  PhaseOutOfRange,
  ParallelBearings,
  EmptyMap,
  NoSharedAps,
  ZeroEnergy,
  ZeroEquivalentBandwidth,
  EmptyResolvedSet,
  ConfigError,
  ParseError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// The single exception type thrown by the library; `code()` tells callers what failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, const char* message) {
  if (!condition) fail(ErrorCode::InvalidArgument, message);
}

/// Number of affinely independent directions spanned by `points` (0 for a single point).
int affine_rank(const std::vector<Position>& points, double relative_tolerance = 1e-9);

bool all_finite(const Position& p) noexcept;

/// Speed of light in vacuum, m/s.
inline constexpr double kSpeedOfLight = 299'792'458.0;

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace radloc
