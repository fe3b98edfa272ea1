#include "radloc/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace radloc::fingerprint {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

void validate_fingerprint(const Fingerprint& f) {
  require(f.location.size() == 2 || f.location.size() == 3, "fingerprint location must be 2-D or 3-D");
  require(f.location.allFinite(), "fingerprint location must be finite");
  require(!f.readings.empty(), "fingerprint needs at least one reading");
  for (const auto& [ap, rssi] : f.readings) {
    require(!ap.empty(), "AP id must be non-empty");
    require(std::isfinite(rssi), "RSSI must be finite");
  }
}

Position mean_location(const RadioMap& map, const std::vector<std::size_t>& chosen) {
  Position p = Position::Zero(map.entries()[chosen.front()].location.size());
  for (auto i : chosen) p += map.entries()[i].location;
  return p / static_cast<double>(chosen.size());
}

Match take_best(const RadioMap& map, std::vector<std::pair<double, std::size_t>> scored, int k,
                const std::vector<std::uint64_t>* tie_keys) {
  std::stable_sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    if (tie_keys) return (*tie_keys)[a.second] < (*tie_keys)[b.second];
    return a.second < b.second;
  });
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
  Match m;
  for (std::size_t i = 0; i < take; ++i) {
    m.neighbors.push_back(scored[i].second);
    m.distances.push_back(scored[i].first);
  }
  m.position = mean_location(map, m.neighbors);
  return m;
}

}  // namespace

RadioMap::RadioMap(std::vector<Fingerprint> entries) : entries_(std::move(entries)) {
  for (const auto& f : entries_) {
    validate_fingerprint(f);
    require(f.location.size() == entries_.front().location.size(), "fingerprint locations differ in dimension");
    for (const auto& kv : f.readings) universe_.insert(kv.first);
  }
}

RadioMap load_radio_map_csv(std::istream& in) {
  std::vector<Fingerprint> entries;
  std::map<std::vector<double>, std::size_t> by_location;
  std::string line;
  std::size_t line_no = 0;
  int columns = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv(line);
    auto where = [&] { return "radio map line " + std::to_string(line_no) + ": "; };
    if (fields.size() != 4 && fields.size() != 5) fail(ErrorCode::ParseError, where() + "expected 4 or 5 columns");
    if (entries.empty() && columns == 0 && !parse_number(fields[0])) {
      columns = static_cast<int>(fields.size());  // header row
      continue;
    }
    if (columns == 0) columns = static_cast<int>(fields.size());
    if (static_cast<int>(fields.size()) != columns) fail(ErrorCode::ParseError, where() + "column count changed");
    const std::size_t dim = fields.size() - 2;
    std::vector<double> coords;
    for (std::size_t d = 0; d < dim; ++d) {
      const auto v = parse_number(fields[d]);
      if (!v) fail(ErrorCode::ParseError, where() + "bad coordinate '" + fields[d] + "'");
      coords.push_back(*v);
    }
    const std::string& ap = fields[dim];
    const auto rssi = parse_number(fields[dim + 1]);
    if (ap.empty()) fail(ErrorCode::ParseError, where() + "empty AP id");
    if (!rssi) fail(ErrorCode::ParseError, where() + "bad RSSI '" + fields[dim + 1] + "'");
    auto [it, inserted] = by_location.try_emplace(coords, entries.size());
    if (inserted) {
      Fingerprint f;
      f.location = Eigen::Map<const Eigen::VectorXd>(coords.data(), static_cast<Eigen::Index>(coords.size()));
      entries.push_back(std::move(f));
    }
    auto& readings = entries[it->second].readings;
    if (!readings.emplace(ap, *rssi).second) fail(ErrorCode::ParseError, where() + "duplicate AP '" + ap + "' at location");
  }
  return RadioMap(std::move(entries));
}

void write_radio_map_csv(std::ostream& out, const RadioMap& map) {
  const bool three = !map.empty() && map.entries().front().location.size() == 3;
  out << (three ? "x,y,z,ap_id,rssi_dbm\n" : "x,y,ap_id,rssi_dbm\n");
  out.precision(17);
  for (const auto& f : map.entries()) {
    for (const auto& [ap, rssi] : f.readings) {
      for (Eigen::Index d = 0; d < f.location.size(); ++d) out << f.location(d) << ',';
      out << ap << ',' << rssi << '\n';
    }
  }
}

RadioMap radio_map_from_json(const nlohmann::json& j) {
  try {
    const auto& doc = j.contains("radio_map") ? j.at("radio_map") : j;
    std::vector<Fingerprint> entries;
    for (const auto& e : doc.at("fingerprints")) {
      Fingerprint f;
      const auto coords = e.at("location").get<std::vector<double>>();
      f.location = Eigen::Map<const Eigen::VectorXd>(coords.data(), static_cast<Eigen::Index>(coords.size()));
      for (const auto& [ap, rssi] : e.at("readings").items()) f.readings[ap] = rssi.get<double>();
      entries.push_back(std::move(f));
    }
    return RadioMap(std::move(entries));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("radio map JSON: ") + e.what());
  }
}

nlohmann::json to_json(const RadioMap& map) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& f : map.entries()) {
    list.push_back({{"location", std::vector<double>(f.location.data(), f.location.data() + f.location.size())},
                    {"readings", f.readings}});
  }
  return {{"fingerprints", list}};
}

Match classical_locate(const RadioMap& map, const Readings& query, int k, double missing_dbm) {
  require(k >= 1, "k must be at least 1");
  require(!query.empty(), "query has no readings");
  require(std::isfinite(missing_dbm), "missing value must be finite");
  if (map.empty()) fail(ErrorCode::EmptyMap, "radio map is empty");
  std::set<std::string> aps = map.ap_universe();
  for (const auto& kv : query) aps.insert(kv.first);
  auto value = [&](const Readings& r, const std::string& ap) {
    auto it = r.find(ap);
    return it == r.end() ? missing_dbm : it->second;
  };
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < map.size(); ++i) {
    double s = 0.0;
    for (const auto& ap : aps) {
      const double d = value(map.entries()[i].readings, ap) - value(query, ap);
      s += d * d;
    }
    scored.emplace_back(std::sqrt(s), i);
  }
  return take_best(map, std::move(scored), k, nullptr);
}

std::map<std::string, int> rank_transform(const Readings& readings) {
  require(!readings.empty(), "cannot rank an empty reading set");
  std::vector<std::pair<std::string, double>> sorted(readings.begin(), readings.end());
  // Readings iterate in AP id order, so a stable sort on strength breaks ties by id.
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::map<std::string, int> ranks;
  for (std::size_t i = 0; i < sorted.size(); ++i) ranks[sorted[i].first] = static_cast<int>(i) + 1;
  return ranks;
}

double rank_distance(const std::vector<double>& a, const std::vector<double>& b, RankMetric metric) {
  require(a.size() == b.size(), "rank vectors differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    switch (metric) {
      case RankMetric::Spearman:
        s += (a[i] - b[i]) * (a[i] - b[i]);
        break;
      case RankMetric::Canberra: {
        const double den = std::abs(a[i]) + std::abs(b[i]);
        if (den > 0.0) s += std::abs(a[i] - b[i]) / den;
        break;
      }
      case RankMetric::Hamming:
        s += a[i] != b[i] ? 1.0 : 0.0;
        break;
    }
  }
  return s;
}

std::pair<std::vector<double>, std::vector<double>> matched_ranks(const Readings& entry, const Readings& query) {
  const auto re = rank_transform(entry);
  const auto rq = rank_transform(query);
  std::set<std::string> aps;
  for (const auto& kv : entry) aps.insert(kv.first);
  for (const auto& kv : query) aps.insert(kv.first);
  std::vector<double> e, q;
  for (const auto& ap : aps) {
    auto ie = re.find(ap);
    auto iq = rq.find(ap);
    e.push_back(ie == re.end() ? static_cast<double>(re.size() + 1) : ie->second);
    q.push_back(iq == rq.end() ? static_cast<double>(rq.size() + 1) : iq->second);
  }
  return {e, q};
}

Match rbf_locate(const RadioMap& map, const Readings& query, const RbfOptions& options) {
  require(options.k >= 1, "k must be at least 1");
  require(!query.empty(), "query has no readings");
  if (map.empty()) fail(ErrorCode::EmptyMap, "radio map is empty");
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto& readings = map.entries()[i].readings;
    const bool shares = std::any_of(query.begin(), query.end(), [&](const auto& kv) { return readings.count(kv.first) > 0; });
    if (!shares) continue;
    const auto [e, q] = matched_ranks(readings, query);
    scored.emplace_back(rank_distance(e, q, options.metric), i);
  }
  if (scored.empty()) fail(ErrorCode::NoSharedAps, "no radio map entry shares an AP with the query");
  if (options.random_ties) {
    Rng rng(derive_seed(options.random_ties->value, {6}));
    std::vector<std::uint64_t> keys(map.size());
    for (auto& k : keys) k = rng.next_u64();
    return take_best(map, std::move(scored), options.k, &keys);
  }
  return take_best(map, std::move(scored), options.k, nullptr);
}

}  // namespace radloc::fingerprint
