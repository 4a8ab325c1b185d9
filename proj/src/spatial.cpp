#include "fadacs/spatial.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "fadacs/csv.hpp"
#include "json.hpp"

namespace fadacs::spatial {

namespace {
constexpr double kEarthRadiusM = 6371000.0;
constexpr double kDegToRad = 0.017453292519943295;

struct union_find {
  std::vector<std::size_t> parent;
  explicit union_find(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

bool segments_intersect(const geo_point& p1, const geo_point& p2, const geo_point& q1,
                        const geo_point& q2) {
  auto orient = [](const geo_point& a, const geo_point& b, const geo_point& c) {
    double v = (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon);
    if (v > 1e-18) return 1;
    if (v < -1e-18) return -1;
    return 0;
  };
  auto on_segment = [](const geo_point& a, const geo_point& b, const geo_point& c) {
    return std::min(a.lon, b.lon) - 1e-15 <= c.lon && c.lon <= std::max(a.lon, b.lon) + 1e-15 &&
           std::min(a.lat, b.lat) - 1e-15 <= c.lat && c.lat <= std::max(a.lat, b.lat) + 1e-15;
  };
  int o1 = orient(p1, p2, q1);
  int o2 = orient(p1, p2, q2);
  int o3 = orient(q1, q2, p1);
  int o4 = orient(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

bool polygons_touch(const std::vector<geo_point>& a, const std::vector<geo_point>& b) {
  for (const auto& va : a)
    for (const auto& vb : b)
      if (std::abs(va.lon - vb.lon) <= 1e-9 && std::abs(va.lat - vb.lat) <= 1e-9) return true;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (segments_intersect(a[i], a[(i + 1) % a.size()], b[j], b[(j + 1) % b.size()]))
        return true;
  return false;
}

struct bbox {
  double min_lon, max_lon, min_lat, max_lat;
};

bbox polygon_bbox(const std::vector<geo_point>& poly) {
  bbox b{poly[0].lon, poly[0].lon, poly[0].lat, poly[0].lat};
  for (const auto& p : poly) {
    b.min_lon = std::min(b.min_lon, p.lon);
    b.max_lon = std::max(b.max_lon, p.lon);
    b.min_lat = std::min(b.min_lat, p.lat);
    b.max_lat = std::max(b.max_lat, p.lat);
  }
  return b;
}

bool bbox_near(const bbox& a, const bbox& b) {
  return a.min_lon <= b.max_lon + 1e-9 && b.min_lon <= a.max_lon + 1e-9 &&
         a.min_lat <= b.max_lat + 1e-9 && b.min_lat <= a.max_lat + 1e-9;
}

std::vector<std::size_t> sorted_order(const std::vector<slot_geometry>& slots) {
  std::vector<std::size_t> order(slots.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return slots[a].slot_key < slots[b].slot_key;
  });
  return order;
}

// Builds lots from a component labelling, splitting every component by
// normalized rule so the lot invariant holds even for mixed components.
std::vector<parking_lot> lots_from_components(const std::vector<slot_geometry>& slots,
                                              const std::vector<std::size_t>& order,
                                              union_find& uf) {
  std::map<std::pair<std::size_t, std::string>, std::vector<std::size_t>> groups;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    std::size_t i = order[pos];
    groups[{uf.find(pos), normalize_rule(slots[i].rule)}].push_back(i);
  }
  std::vector<parking_lot> lots;
  lots.reserve(groups.size());
  for (auto& [key, members] : groups) {
    parking_lot lot;
    lot.rule = key.second;
    double sum_lon = 0, sum_lat = 0;
    std::vector<std::string> keys;
    keys.reserve(members.size());
    for (std::size_t i : members) keys.push_back(slots[i].slot_key);
    std::sort(keys.begin(), keys.end());
    // accumulate in sorted key order so the centroid is input-order independent
    std::map<std::string, const slot_geometry*> by_key;
    for (std::size_t i : members) by_key[slots[i].slot_key] = &slots[i];
    for (const auto& k : keys) {
      sum_lon += by_key[k]->position.lon;
      sum_lat += by_key[k]->position.lat;
    }
    lot.slot_keys = std::move(keys);
    lot.centroid = {sum_lon / static_cast<double>(members.size()),
                    sum_lat / static_cast<double>(members.size())};
    lots.push_back(std::move(lot));
  }
  std::sort(lots.begin(), lots.end(), [](const parking_lot& a, const parking_lot& b) {
    return a.slot_keys.front() < b.slot_keys.front();
  });
  for (std::size_t i = 0; i < lots.size(); ++i) lots[i].lot_id = static_cast<int>(i);
  return lots;
}

}  // namespace

double haversine_m(const geo_point& a, const geo_point& b) {
  if (!std::isfinite(a.lon) || !std::isfinite(a.lat) || !std::isfinite(b.lon) ||
      !std::isfinite(b.lat) || std::abs(a.lat) > 90.0 || std::abs(b.lat) > 90.0)
    throw error("InvalidCoordinate", "haversine_m needs finite lon/lat with |lat| <= 90");
  double lat1 = a.lat * kDegToRad;
  double lat2 = b.lat * kDegToRad;
  double dlat = (b.lat - a.lat) * kDegToRad;
  double dlon = (b.lon - a.lon) * kDegToRad;
  double s1 = std::sin(dlat / 2);
  double s2 = std::sin(dlon / 2);
  double h = s1 * s1 + std::cos(lat1) * std::cos(lat2) * s2 * s2;
  h = std::min(1.0, std::max(0.0, h));
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

std::string normalize_rule(const std::string& rule) {
  std::string out;
  bool in_space = true;
  for (char c : rule) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_space) out += ' ';
      in_space = true;
    } else {
      out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

bool adjacency::connected(const std::string& a, const std::string& b) const {
  auto ia = std::lower_bound(keys.begin(), keys.end(), a);
  auto ib = std::lower_bound(keys.begin(), keys.end(), b);
  if (ia == keys.end() || *ia != a || ib == keys.end() || *ib != b) return false;
  std::size_t pa = static_cast<std::size_t>(ia - keys.begin());
  std::size_t pb = static_cast<std::size_t>(ib - keys.begin());
  return std::find(edges[pa].begin(), edges[pa].end(), pb) != edges[pa].end();
}

adjacency connection_graph(const std::vector<slot_geometry>& slots) {
  auto order = sorted_order(slots);
  adjacency g;
  g.keys.reserve(slots.size());
  for (std::size_t i : order) g.keys.push_back(slots[i].slot_key);
  g.edges.assign(slots.size(), {});

  std::vector<std::optional<bbox>> boxes(order.size());
  for (std::size_t p = 0; p < order.size(); ++p)
    if (slots[order[p]].polygon) boxes[p] = polygon_bbox(*slots[order[p]].polygon);

  for (std::size_t p = 0; p < order.size(); ++p) {
    if (!boxes[p]) continue;
    for (std::size_t q = p + 1; q < order.size(); ++q) {
      if (!boxes[q] || !bbox_near(*boxes[p], *boxes[q])) continue;
      if (polygons_touch(*slots[order[p]].polygon, *slots[order[q]].polygon)) {
        g.edges[p].push_back(q);
        g.edges[q].push_back(p);
      }
    }
  }
  return g;
}

double connection_threshold_m(const std::vector<slot_geometry>& slots,
                              const std::set<std::string>& region) {
  adjacency g = connection_graph(slots);
  std::map<std::string, const slot_geometry*> by_key;
  for (const auto& s : slots) by_key[s.slot_key] = &s;

  std::vector<double> dists;
  for (std::size_t p = 0; p < g.keys.size(); ++p) {
    if (!region.empty() && !region.count(g.keys[p])) continue;
    for (std::size_t q : g.edges[p]) {
      if (q <= p) continue;
      if (!region.empty() && !region.count(g.keys[q])) continue;
      dists.push_back(haversine_m(by_key[g.keys[p]]->position, by_key[g.keys[q]]->position));
    }
  }
  if (dists.size() < 2)
    throw error("InsufficientEdges",
                "need >= 2 connection edges, got " + std::to_string(dists.size()));
  double mean = std::accumulate(dists.begin(), dists.end(), 0.0) / static_cast<double>(dists.size());
  double var = 0;
  for (double d : dists) var += (d - mean) * (d - mean);
  var /= static_cast<double>(dists.size());  // population variance
  return mean + 1.5 * std::sqrt(var);
}

std::vector<parking_lot> cluster_slots(const std::vector<slot_geometry>& slots,
                                       double threshold_m) {
  auto order = sorted_order(slots);
  union_find uf(order.size());

  adjacency g = connection_graph(slots);  // keys follow the same sorted order
  for (std::size_t p = 0; p < g.edges.size(); ++p)
    for (std::size_t q : g.edges[p])
      if (q > p) uf.unite(p, q);

  for (std::size_t p = 0; p < order.size(); ++p) {
    const auto& a = slots[order[p]];
    for (std::size_t q = p + 1; q < order.size(); ++q) {
      const auto& b = slots[order[q]];
      if (normalize_rule(a.rule) != normalize_rule(b.rule)) continue;
      if (haversine_m(a.position, b.position) <= threshold_m) uf.unite(p, q);
    }
  }
  return lots_from_components(slots, order, uf);
}

std::vector<parking_lot> cluster_by_sector(const std::vector<slot_geometry>& slots,
                                           double threshold_m) {
  auto order = sorted_order(slots);
  // initial groups: (sector, rule)
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> groups;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto& s = slots[order[pos]];
    groups[{s.sector.value_or(""), normalize_rule(s.rule)}].push_back(pos);
  }
  std::vector<std::vector<std::size_t>> glist;
  std::vector<std::string> grule;
  for (auto& [key, members] : groups) {
    glist.push_back(members);
    grule.push_back(key.second);
  }
  union_find uf_groups(glist.size());
  for (std::size_t a = 0; a < glist.size(); ++a) {
    for (std::size_t b = a + 1; b < glist.size(); ++b) {
      if (grule[a] != grule[b]) continue;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t pa : glist[a])
        for (std::size_t pb : glist[b])
          best = std::min(best, haversine_m(slots[order[pa]].position, slots[order[pb]].position));
      if (best <= threshold_m) uf_groups.unite(a, b);
    }
  }
  union_find uf(order.size());
  std::vector<std::size_t> group_rep(glist.size());
  for (std::size_t gidx = 0; gidx < glist.size(); ++gidx) {
    std::size_t rep_group = uf_groups.find(gidx);
    for (std::size_t pos : glist[gidx]) uf.unite(pos, glist[rep_group][0]);
  }
  return lots_from_components(slots, order, uf);
}

void apply_rule_overrides(std::vector<slot_geometry>& slots,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::map<std::string, std::string> table(overrides.begin(), overrides.end());
  for (auto& s : slots) {
    auto it = table.find(s.slot_key);
    if (it != table.end()) s.rule = it->second;
  }
}

void write_lots_csv(const std::string& path, const std::vector<parking_lot>& lots) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(lots.size());
  for (const auto& lot : lots) {
    std::string joined;
    for (std::size_t i = 0; i < lot.slot_keys.size(); ++i) {
      if (i) joined += ';';
      joined += lot.slot_keys[i];
    }
    rows.push_back({std::to_string(lot.lot_id), lot.rule, std::to_string(lot.slot_keys.size()),
                    csv::format_double(lot.centroid.lon), csv::format_double(lot.centroid.lat),
                    joined});
  }
  csv::write_file(path, {"lot_id", "rule", "n_slots", "centroid_lon", "centroid_lat", "slot_keys"},
                  rows);
}

std::string lots_to_json(const std::vector<parking_lot>& lots) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& lot : lots) {
    arr.push_back({{"lot_id", lot.lot_id},
                   {"rule", lot.rule},
                   {"n_slots", lot.slot_keys.size()},
                   {"centroid_lon", lot.centroid.lon},
                   {"centroid_lat", lot.centroid.lat},
                   {"slot_keys", lot.slot_keys}});
  }
  return arr.dump(2);
}

std::vector<parking_lot> read_lots_csv(const std::string& path) {
  csv::table t = csv::read_file(path);
  std::size_t c_id = t.require_column("lot_id");
  std::size_t c_rule = t.require_column("rule");
  std::size_t c_lon = t.require_column("centroid_lon");
  std::size_t c_lat = t.require_column("centroid_lat");
  std::size_t c_keys = t.require_column("slot_keys");
  std::vector<parking_lot> out;
  for (const auto& row : t.rows) {
    parking_lot lot;
    lot.lot_id = static_cast<int>(csv::parse_int(row[c_id]).value_or(0));
    lot.rule = csv::trim(row[c_rule]);
    lot.centroid = {csv::parse_double(row[c_lon]).value_or(0),
                    csv::parse_double(row[c_lat]).value_or(0)};
    std::stringstream ss(row[c_keys]);
    std::string key;
    while (std::getline(ss, key, ';'))
      if (!key.empty()) lot.slot_keys.push_back(key);
    if (lot.slot_keys.empty()) throw error("InvalidLot", "lot with no slots in " + path);
    out.push_back(std::move(lot));
  }
  return out;
}

std::vector<slot_geometry> read_slots_csv(const std::string& path) {
  csv::table t = csv::read_file(path);
  std::size_t c_key = t.require_column("slot_key");
  std::size_t c_lon = t.require_column("lon");
  std::size_t c_lat = t.require_column("lat");
  std::size_t c_rule = t.require_column("rule");
  auto c_sector = t.column("sector");
  auto c_poly = t.column("polygon");
  std::vector<slot_geometry> out;
  for (const auto& row : t.rows) {
    slot_geometry s;
    s.slot_key = csv::trim(row[c_key]);
    s.position = {csv::parse_double(row[c_lon]).value_or(0),
                  csv::parse_double(row[c_lat]).value_or(0)};
    s.rule = csv::trim(row[c_rule]);
    if (c_sector && *c_sector < row.size()) {
      std::string sec = csv::trim(row[*c_sector]);
      if (!sec.empty()) s.sector = sec;
    }
    if (c_poly && *c_poly < row.size()) {
      std::vector<geo_point> poly;
      std::stringstream ss(row[*c_poly]);
      std::string pair;
      while (std::getline(ss, pair, ';')) {
        std::size_t sp = pair.find(' ');
        if (sp == std::string::npos) continue;
        auto lon = csv::parse_double(pair.substr(0, sp));
        auto lat = csv::parse_double(pair.substr(sp + 1));
        if (lon && lat) poly.push_back({*lon, *lat});
      }
      if (poly.size() >= 3) s.polygon = std::move(poly);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_slots_csv(const std::string& path, const std::vector<slot_geometry>& slots) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(slots.size());
  for (const auto& s : slots) {
    std::string poly;
    if (s.polygon) {
      for (std::size_t i = 0; i < s.polygon->size(); ++i) {
        if (i) poly += ';';
        poly += csv::format_double((*s.polygon)[i].lon) + " " +
                csv::format_double((*s.polygon)[i].lat);
      }
    }
    rows.push_back({s.slot_key, csv::format_double(s.position.lon),
                    csv::format_double(s.position.lat), s.rule, s.sector.value_or(""), poly});
  }
  csv::write_file(path, {"slot_key", "lon", "lat", "rule", "sector", "polygon"}, rows);
}

}  // namespace fadacs::spatial
