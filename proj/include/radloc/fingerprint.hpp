#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "radloc/core.hpp"
#include "radloc/rng.hpp"

namespace radloc::fingerprint {

using Readings = std::map<std::string, double>;

struct Fingerprint {
  Position location;
  /// AP id -> RSSI in dBm.
  Readings readings;
};

/// Immutable collection of surveyed fingerprints.
class RadioMap {
 public:
  RadioMap() = default;
  explicit RadioMap(std::vector<Fingerprint> entries);

  const std::vector<Fingerprint>& entries() const noexcept { return entries_; }
  const std::set<std::string>& ap_universe() const noexcept { return universe_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

 private:
  std::vector<Fingerprint> entries_;
  std::set<std::string> universe_;
};

/// Rows `x,y[,z],ap_id,rssi_dbm`, optional header. Rows sharing coordinates form one
/// fingerprint, in first-seen order.
RadioMap load_radio_map_csv(std::istream& in);
void write_radio_map_csv(std::ostream& out, const RadioMap& map);
/// {"fingerprints": [{"location": [x, y], "readings": {"ap": rssi}}]}, either at the top
/// level or under a scenario document's "radio_map" key.
RadioMap radio_map_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RadioMap& map);

struct Match {
  Position position;
  /// Indices of the chosen entries, best first.
  std::vector<std::size_t> neighbors;
  std::vector<double> distances;
};

/// Euclidean RSSI distance over the union of APs, absent readings replaced by
/// `missing_dbm`; mean location of the k nearest entries. Ties keep insertion order.
/// Throws EmptyMap.
Match classical_locate(const RadioMap& map, const Readings& query, int k = 1, double missing_dbm = -100.0);

/// AP id -> rank, 1 = strongest. Equal RSSI ranks by AP id ascending.
std::map<std::string, int> rank_transform(const Readings& readings);

enum class RankMetric { Spearman, Canberra, Hamming };

/// Distance between two rank vectors of equal length.
double rank_distance(const std::vector<double>& a, const std::vector<double>& b, RankMetric metric);

struct RbfOptions {
  RankMetric metric = RankMetric::Spearman;
  int k = 1;
  /// When set, entries at equal distance are ordered randomly from this seed instead
  /// of by insertion order.
  std::optional<RngSeed> random_ties;
};

/// Rank vectors of an entry and the query over the union of their APs. An AP missing
/// on one side takes rank (that side's AP count + 1).
std::pair<std::vector<double>, std::vector<double>> matched_ranks(const Readings& entry, const Readings& query);

/// Rank-based fingerprint matching. Entries sharing no AP with the query are skipped;
/// throws NoSharedAps if none remain, EmptyMap on an empty map.
Match rbf_locate(const RadioMap& map, const Readings& query, const RbfOptions& options = {});

}  // namespace radloc::fingerprint
