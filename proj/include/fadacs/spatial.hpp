#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fadacs/common.hpp"

namespace fadacs::spatial {

struct slot_geometry {
  std::string slot_key;
  geo_point position;
  std::optional<std::vector<geo_point>> polygon;  // >= 3 vertices when present
  std::string rule;
  std::optional<std::string> sector;  // used by the sector-first clustering path
};

struct parking_lot {
  int lot_id = 0;
  std::vector<std::string> slot_keys;  // sorted, non-empty
  std::string rule;                    // normalized, shared by all members
  geo_point centroid;
};

// Great-circle distance, Earth radius 6,371,000 m.
double haversine_m(const geo_point& a, const geo_point& b);

// trim + uppercase + collapse internal whitespace
std::string normalize_rule(const std::string& rule);

// Edge between two slots iff their polygons share a vertex within 1e-9 degrees
// or their boundaries intersect. Slots without polygons are isolated.
struct adjacency {
  std::vector<std::string> keys;               // sorted slot keys
  std::vector<std::vector<std::size_t>> edges; // adjacency lists over key indices

  bool connected(const std::string& a, const std::string& b) const;
};

adjacency connection_graph(const std::vector<slot_geometry>& slots);

// mean + 1.5 * population std of centroid distances over the region's
// connection-graph edges; throws error("InsufficientEdges") below 2 edges.
double connection_threshold_m(const std::vector<slot_geometry>& slots,
                              const std::set<std::string>& region);

// Melbourne path: link slots iff polygons connect OR (same rule AND distance
// <= threshold); lots are the link components split by rule.
std::vector<parking_lot> cluster_slots(const std::vector<slot_geometry>& slots,
                                       double threshold_m);

// Rye path: group by (sector, rule), then merge same-rule groups whose
// nearest-member distance is within the supplied threshold.
std::vector<parking_lot> cluster_by_sector(const std::vector<slot_geometry>& slots,
                                           double threshold_m);

// Rule-override table (slot_key -> replacement rule), applied before clustering.
void apply_rule_overrides(std::vector<slot_geometry>& slots,
                          const std::vector<std::pair<std::string, std::string>>& overrides);

void write_lots_csv(const std::string& path, const std::vector<parking_lot>& lots);
std::string lots_to_json(const std::vector<parking_lot>& lots);
std::vector<parking_lot> read_lots_csv(const std::string& path);

// slots.csv: slot_key,lon,lat,rule[,sector][,polygon]
std::vector<slot_geometry> read_slots_csv(const std::string& path);
void write_slots_csv(const std::string& path, const std::vector<slot_geometry>& slots);

}  // namespace fadacs::spatial
