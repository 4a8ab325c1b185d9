#include "fadacs/ingest.hpp"

#include <algorithm>
#include <cmath>

#include "fadacs/timeutil.hpp"

namespace fadacs::ingest {

const char* to_string(reject_reason r) {
  switch (r) {
    case reject_reason::non_positive_duration: return "NonPositiveDuration";
    case reject_reason::both_midnight: return "BothMidnight";
    case reject_reason::crosses_midnight: return "CrossesMidnight";
    case reject_reason::overlap: return "Overlap";
  }
  return "?";
}

bool poi::open_at(second_t t) const {
  if (!opening_hours) return false;
  int dow = timeutil::day_of_week(t);
  int mod = timeutil::minute_of_day(t);
  for (const auto& iv : (*opening_hours)[static_cast<std::size_t>(dow)])
    if (mod >= iv.open_min && mod < iv.close_min) return true;
  return false;
}

namespace {

struct column_set {
  std::optional<std::size_t> device_id, device_name, arrival, departure, duration, restriction,
      street_marker, street_name, lon, lat;
};

column_set resolve_columns(const csv::table& t, event_schema schema) {
  column_set c;
  if (schema == event_schema::melbourne_v1) {
    c.device_id = t.require_column("DeviceId");
    c.arrival = t.require_column("ArrivalTime");
    c.departure = t.require_column("DepartureTime");
    c.duration = t.require_column("DurationSeconds");
    c.restriction = t.require_column("Sign");
    c.street_marker = t.require_column("StreetMarker");
    c.street_name = t.column("StreetName");
    c.lon = t.column("Longitude");
    c.lat = t.column("Latitude");
  } else {
    c.device_id = t.require_column("DeviceId");
    c.arrival = t.require_column("ArrivalTime");
    c.departure = t.require_column("DepartureTime");
    c.duration = t.require_column("Duration");
    c.restriction = t.require_column("Restriction");
    c.device_name = t.column("DeviceName");
    c.street_name = t.column("StreetName");
    c.lon = t.column("Longitude");
    c.lat = t.column("Latitude");
  }
  return c;
}

std::string cell(const std::vector<std::string>& row, std::optional<std::size_t> idx) {
  if (!idx || *idx >= row.size()) return "";
  return csv::trim(row[*idx]);
}

}  // namespace

parse_result parse_events_table(const csv::table& t, event_schema schema) {
  column_set cols = resolve_columns(t, schema);
  parse_result out;
  out.events.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t line_no = r + 2;
    auto bad = [&](const std::string& field) {
      out.bad_rows.push_back({line_no, field, "UnparsableRow"});
    };

    parking_event ev;
    ev.device_id = cell(row, cols.device_id);
    if (ev.device_id.empty()) {
      bad("DeviceId");
      continue;
    }
    auto arrival = timeutil::parse_datetime(cell(row, cols.arrival));
    if (!arrival) {
      bad("ArrivalTime");
      continue;
    }
    auto departure = timeutil::parse_datetime(cell(row, cols.departure));
    if (!departure) {
      bad("DepartureTime");
      continue;
    }
    auto duration = csv::parse_int(cell(row, cols.duration));
    if (!duration) {
      bad(schema == event_schema::melbourne_v1 ? "DurationSeconds" : "Duration");
      continue;
    }
    ev.arrival = *arrival;
    ev.departure = *departure;
    ev.duration_s = *duration;
    ev.restriction = cell(row, cols.restriction);

    if (schema == event_schema::melbourne_v1) {
      std::string marker = cell(row, cols.street_marker);
      if (marker.empty()) {
        bad("StreetMarker");
        continue;
      }
      ev.street_marker = marker;
    }
    std::string street = cell(row, cols.street_name);
    if (!street.empty()) ev.sector = street;

    std::string lon_s = cell(row, cols.lon);
    std::string lat_s = cell(row, cols.lat);
    if (!lon_s.empty() && !lat_s.empty()) {
      auto lon = csv::parse_double(lon_s);
      auto lat = csv::parse_double(lat_s);
      if (!lon || !lat) {
        bad(!lon ? "Longitude" : "Latitude");
        continue;
      }
      ev.position = geo_point{*lon, *lat};
    }
    out.events.push_back(std::move(ev));
  }
  return out;
}

parse_result parse_events(const std::string& path, event_schema schema) {
  return parse_events_table(csv::read_file(path), schema);
}

filter_result filter_anomalies(const std::vector<parking_event>& events) {
  filter_result out;
  std::vector<std::size_t> survivors;
  survivors.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& ev = events[i];
    if (timeutil::at_midnight(ev.arrival) && timeutil::at_midnight(ev.departure)) {
      out.rejected.push_back({ev, reject_reason::both_midnight});
    } else if (ev.duration_s <= 0 || ev.departure <= ev.arrival) {
      out.rejected.push_back({ev, reject_reason::non_positive_duration});
    } else if (!timeutil::same_calendar_day(ev.arrival, ev.departure)) {
      out.rejected.push_back({ev, reject_reason::crosses_midnight});
    } else {
      survivors.push_back(i);
    }
  }

  // overlap per slot key: sweep sorted intervals, flag both members of a pair
  std::map<std::string, std::vector<std::size_t>> by_slot;
  for (std::size_t i : survivors) by_slot[events[i].slot_key()].push_back(i);

  std::vector<bool> overlapping(events.size(), false);
  for (auto& [key, idxs] : by_slot) {
    std::sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
      if (events[a].arrival != events[b].arrival) return events[a].arrival < events[b].arrival;
      return events[a].departure < events[b].departure;
    });
    second_t max_dep = 0;
    std::size_t max_idx = 0;
    bool first = true;
    for (std::size_t idx : idxs) {
      if (!first && events[idx].arrival < max_dep) {
        overlapping[idx] = true;
        overlapping[max_idx] = true;
      }
      if (first || events[idx].departure > max_dep) {
        max_dep = events[idx].departure;
        max_idx = idx;
      }
      first = false;
    }
  }

  for (std::size_t i : survivors) {
    if (overlapping[i]) {
      out.rejected.push_back({events[i], reject_reason::overlap});
    } else {
      parking_event ev = events[i];
      // interval is authoritative when the as-read duration disagrees
      if (std::llabs(ev.duration_s - (ev.departure - ev.arrival)) > 1)
        ev.duration_s = ev.departure - ev.arrival;
      out.kept.push_back(std::move(ev));
    }
  }
  return out;
}

geo_point polygon_centroid(const std::vector<geo_point>& poly) {
  if (poly.size() < 3) throw error("InvalidPolygon", "polygon needs at least 3 vertices");
  // shoelace centroid; falls back to the vertex mean when the area degenerates
  double a2 = 0, cx = 0, cy = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    double cross = p.lon * q.lat - q.lon * p.lat;
    a2 += cross;
    cx += (p.lon + q.lon) * cross;
    cy += (p.lat + q.lat) * cross;
  }
  if (std::abs(a2) < 1e-18) {
    double mx = 0, my = 0;
    for (const auto& p : poly) {
      mx += p.lon;
      my += p.lat;
    }
    return {mx / static_cast<double>(poly.size()), my / static_cast<double>(poly.size())};
  }
  return {cx / (3.0 * a2), cy / (3.0 * a2)};
}

bool point_in_polygon(const geo_point& p, const std::vector<geo_point>& poly) {
  // ray casting with on-edge tolerance
  bool inside = false;
  std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = poly[j];
    const auto& b = poly[i];
    double cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    double dot = (p.lon - a.lon) * (p.lon - b.lon) + (p.lat - a.lat) * (p.lat - b.lat);
    if (std::abs(cross) < 1e-12 && dot <= 1e-12) return true;  // on boundary
    if ((b.lat > p.lat) != (a.lat > p.lat)) {
      double x = (a.lon - b.lon) * (p.lat - b.lat) / (a.lat - b.lat) + b.lon;
      if (p.lon < x) inside = !inside;
    }
  }
  return inside;
}

join_result join_locations(std::vector<parking_event> events, const location_table& locations,
                           const polygon_table& polygons) {
  join_result out;
  std::map<std::string, geo_point> resolved;
  std::map<std::string, bool> checked;
  for (auto& ev : events) {
    if (ev.position) continue;
    const std::string& key = ev.slot_key();
    auto it = resolved.find(key);
    if (it == resolved.end()) {
      auto loc = locations.find(key);
      auto pol = polygons.find(key);
      geo_point pt;
      if (loc != locations.end()) {
        pt = loc->second;
        if (pol != polygons.end() && !checked[key]) {
          checked[key] = true;
          if (!point_in_polygon(pt, pol->second))
            out.warnings.push_back({"LocationOutsidePolygon", key});
        }
      } else if (pol != polygons.end()) {
        pt = polygon_centroid(pol->second);
      } else {
        throw error("UnknownSlot", key);
      }
      it = resolved.emplace(key, pt).first;
    }
    ev.position = it->second;
  }
  out.events = std::move(events);
  return out;
}

std::vector<poi> read_pois(const std::string& poi_path, const std::string& opening_hours_path) {
  csv::table t = csv::read_file(poi_path);
  std::size_t c_id = t.require_column("poi_id");
  std::size_t c_cat = t.require_column("category");
  std::size_t c_lon = t.require_column("lon");
  std::size_t c_lat = t.require_column("lat");
  auto c_cap = t.column("capacity");

  std::vector<poi> pois;
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    poi p;
    p.poi_id = csv::trim(row[c_id]);
    p.category = csv::trim(row[c_cat]);
    auto lon = csv::parse_double(row[c_lon]);
    auto lat = csv::parse_double(row[c_lat]);
    if (!lon || !lat)
      throw error("UnparsableRow", "pois line " + std::to_string(r + 2));
    p.position = {*lon, *lat};
    if (c_cap && *c_cap < row.size()) p.capacity = csv::parse_int(row[*c_cap]);
    index[p.poi_id] = pois.size();
    pois.push_back(std::move(p));
  }

  if (!opening_hours_path.empty()) {
    csv::table h = csv::read_file(opening_hours_path);
    std::size_t h_id = h.require_column("poi_id");
    std::size_t h_dow = h.require_column("day_of_week");
    std::size_t h_open = h.require_column("open_min");
    std::size_t h_close = h.require_column("close_min");
    for (std::size_t r = 0; r < h.rows.size(); ++r) {
      const auto& row = h.rows[r];
      auto it = index.find(csv::trim(row[h_id]));
      if (it == index.end()) continue;  // hours for unknown POIs are ignored
      auto dow = csv::parse_int(row[h_dow]);
      auto open = csv::parse_int(row[h_open]);
      auto close = csv::parse_int(row[h_close]);
      if (!dow || !open || !close || *dow < 0 || *dow > 6)
        throw error("UnparsableRow", "opening_hours line " + std::to_string(r + 2));
      poi& p = pois[it->second];
      if (!p.opening_hours) p.opening_hours.emplace();
      (*p.opening_hours)[static_cast<std::size_t>(*dow)].push_back(
          {static_cast<int>(*open), static_cast<int>(*close)});
    }
    for (auto& p : pois) {
      if (!p.opening_hours) continue;
      for (auto& day : *p.opening_hours) {
        std::sort(day.begin(), day.end(),
                  [](const weekly_interval& a, const weekly_interval& b) {
                    return a.open_min < b.open_min;
                  });
        for (std::size_t i = 0; i < day.size(); ++i) {
          if (day[i].open_min >= day[i].close_min)
            throw error("InvalidSchedule", "empty interval for " + p.poi_id);
          if (i > 0 && day[i].open_min < day[i - 1].close_min)
            throw error("InvalidSchedule", "overlapping intervals for " + p.poi_id);
        }
      }
    }
  }
  return pois;
}

std::vector<weather_record> read_weather(const std::string& path) {
  csv::table t = csv::read_file(path);
  std::size_t c_time = t.require_column("time");
  std::size_t c_temp = t.require_column("temp_c");
  std::size_t c_wind = t.require_column("wind_kmh");
  std::size_t c_bar = t.require_column("barometer_mbar");
  std::size_t c_hum = t.require_column("humidity_pct");
  std::vector<weather_record> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    auto time = timeutil::parse_datetime(row[c_time]);
    auto temp = csv::parse_double(row[c_temp]);
    auto wind = csv::parse_double(row[c_wind]);
    auto bar = csv::parse_double(row[c_bar]);
    auto hum = csv::parse_double(row[c_hum]);
    if (!time || !temp || !wind || !bar || !hum)
      throw error("UnparsableRow", "weather line " + std::to_string(r + 2));
    if (*wind < 0 || *bar <= 0 || *hum < 0 || *hum > 100)
      throw error("InvalidWeather", "out-of-range value at line " + std::to_string(r + 2));
    out.push_back({*time, *temp, *wind, *bar, *hum});
  }
  std::sort(out.begin(), out.end(),
            [](const weather_record& a, const weather_record& b) { return a.time < b.time; });
  return out;
}

location_table read_locations(const std::string& path) {
  csv::table t = csv::read_file(path);
  std::size_t c_key = t.require_column("StreetMarker");
  std::size_t c_lon = t.require_column("Longitude");
  std::size_t c_lat = t.require_column("Latitude");
  location_table out;
  for (const auto& row : t.rows) {
    auto lon = csv::parse_double(row[c_lon]);
    auto lat = csv::parse_double(row[c_lat]);
    if (!lon || !lat) continue;
    out[csv::trim(row[c_key])] = {*lon, *lat};
  }
  return out;
}

polygon_table read_polygons(const std::string& path) {
  csv::table t = csv::read_file(path);
  std::size_t c_key = t.require_column("StreetMarker");
  std::size_t c_poly = t.require_column("Polygon");
  polygon_table out;
  for (const auto& row : t.rows) {
    std::vector<geo_point> poly;
    const std::string& s = row[c_poly];
    std::size_t pos = 0;
    while (pos < s.size()) {
      std::size_t semi = s.find(';', pos);
      std::string pair = s.substr(pos, semi == std::string::npos ? std::string::npos : semi - pos);
      std::size_t sp = pair.find(' ');
      if (sp != std::string::npos) {
        auto lon = csv::parse_double(pair.substr(0, sp));
        auto lat = csv::parse_double(pair.substr(sp + 1));
        if (lon && lat) poly.push_back({*lon, *lat});
      }
      if (semi == std::string::npos) break;
      pos = semi + 1;
    }
    if (poly.size() >= 3) out[csv::trim(row[c_key])] = std::move(poly);
  }
  return out;
}

void write_events_csv(const std::string& path, const std::vector<parking_event>& events) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(events.size());
  for (const auto& ev : events) {
    rows.push_back({ev.slot_key(), ev.device_id, timeutil::format_second(ev.arrival),
                    timeutil::format_second(ev.departure), std::to_string(ev.duration_s),
                    ev.restriction, ev.sector.value_or(""),
                    ev.position ? csv::format_double(ev.position->lon) : "",
                    ev.position ? csv::format_double(ev.position->lat) : ""});
  }
  csv::write_file(path,
                  {"slot_key", "device_id", "arrival", "departure", "duration_s", "restriction",
                   "sector", "lon", "lat"},
                  rows);
}

std::vector<parking_event> read_events_csv(const std::string& path) {
  csv::table t = csv::read_file(path);
  std::size_t c_key = t.require_column("slot_key");
  std::size_t c_dev = t.require_column("device_id");
  std::size_t c_arr = t.require_column("arrival");
  std::size_t c_dep = t.require_column("departure");
  std::size_t c_dur = t.require_column("duration_s");
  std::size_t c_rule = t.require_column("restriction");
  auto c_sector = t.column("sector");
  auto c_lon = t.column("lon");
  auto c_lat = t.column("lat");
  std::vector<parking_event> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    parking_event ev;
    std::string key = csv::trim(row[c_key]);
    ev.device_id = csv::trim(row[c_dev]);
    if (key != ev.device_id) ev.street_marker = key;
    auto arr = timeutil::parse_datetime(row[c_arr]);
    auto dep = timeutil::parse_datetime(row[c_dep]);
    auto dur = csv::parse_int(row[c_dur]);
    if (!arr || !dep || !dur)
      throw error("UnparsableRow", "events line " + std::to_string(r + 2));
    ev.arrival = *arr;
    ev.departure = *dep;
    ev.duration_s = *dur;
    ev.restriction = csv::trim(row[c_rule]);
    if (c_sector) {
      std::string s = cell(row, c_sector);
      if (!s.empty()) ev.sector = s;
    }
    if (c_lon && c_lat) {
      auto lon = csv::parse_double(cell(row, c_lon));
      auto lat = csv::parse_double(cell(row, c_lat));
      if (lon && lat) ev.position = geo_point{*lon, *lat};
    }
    out.push_back(std::move(ev));
  }
  return out;
}

void write_rejections_csv(const std::string& path, const std::vector<rejected_event>& rejected) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(rejected.size());
  for (const auto& r : rejected) {
    const auto& ev = r.event;
    rows.push_back({ev.slot_key(), ev.device_id, timeutil::format_second(ev.arrival),
                    timeutil::format_second(ev.departure), std::to_string(ev.duration_s),
                    ev.restriction, to_string(r.reason)});
  }
  csv::write_file(
      path, {"slot_key", "device_id", "arrival", "departure", "duration_s", "restriction",
             "reason"},
      rows);
}

}  // namespace fadacs::ingest
