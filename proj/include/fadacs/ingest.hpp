#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fadacs/common.hpp"
#include "fadacs/csv.hpp"

namespace fadacs::ingest {

// One sensor occupancy interval [arrival, departure) for one slot. Timestamps
// are kept at second precision so the duration consistency check stays
// meaningful; the pipeline truncates to minutes when slicing.
struct parking_event {
  std::string device_id;
  std::optional<std::string> street_marker;
  second_t arrival = 0;
  second_t departure = 0;
  std::int64_t duration_s = 0;  // as read; normalized against the interval after validation
  std::string restriction;
  std::optional<std::string> sector;
  std::optional<geo_point> position;

  // Melbourne keys slots by street marker, Rye by device id.
  const std::string& slot_key() const { return street_marker ? *street_marker : device_id; }
};

enum class reject_reason { non_positive_duration, both_midnight, crosses_midnight, overlap };

const char* to_string(reject_reason r);

struct rejected_event {
  parking_event event;
  reject_reason reason;
};

struct weekly_interval {
  int open_min = 0;   // minute of day, inclusive
  int close_min = 0;  // minute of day, exclusive
};

struct poi {
  std::string poi_id;
  std::string category;
  geo_point position;
  std::optional<std::int64_t> capacity;
  // 7 lists (Monday=0..Sunday=6); empty optional = schedule unknown
  std::optional<std::array<std::vector<weekly_interval>, 7>> opening_hours;

  bool open_at(second_t t) const;
};

struct weather_record {
  second_t time = 0;
  double temp_c = 0;
  double wind_kmh = 0;
  double barometer_mbar = 0;
  double humidity_pct = 0;
};

enum class event_schema { melbourne_v1, rye_v1 };

struct bad_row {
  std::size_t line_no = 0;  // 1-based, header is line 1
  std::string field;
  std::string reason;
};

struct parse_result {
  std::vector<parking_event> events;
  std::vector<bad_row> bad_rows;  // unparsable mandatory fields, collected not dropped
};

parse_result parse_events(const std::string& path, event_schema schema);
parse_result parse_events_table(const csv::table& t, event_schema schema);

struct filter_result {
  std::vector<parking_event> kept;
  std::vector<rejected_event> rejected;
};

// Applies the four anomaly rules. Per-event rules take precedence in the order
// both-midnight, non-positive duration, crosses-midnight; overlap is then
// tested per slot key among the survivors and removes both members of every
// intersecting pair. kept + rejected is the input as a multiset.
filter_result filter_anomalies(const std::vector<parking_event>& events);

using location_table = std::map<std::string, geo_point>;
using polygon_table = std::map<std::string, std::vector<geo_point>>;

struct join_warning {
  std::string code;  // "LocationOutsidePolygon"
  std::string slot_key;
};

struct join_result {
  std::vector<parking_event> events;
  std::vector<join_warning> warnings;
};

// Fills missing coordinates from the location table, else from the polygon
// centroid; throws error("UnknownSlot") when a slot appears in neither.
join_result join_locations(std::vector<parking_event> events, const location_table& locations,
                           const polygon_table& polygons);

geo_point polygon_centroid(const std::vector<geo_point>& polygon);
bool point_in_polygon(const geo_point& p, const std::vector<geo_point>& polygon);

// Context tables ------------------------------------------------------------

// pois.csv: poi_id,category,lon,lat,capacity
// opening_hours.csv: poi_id,day_of_week,open_min,close_min
std::vector<poi> read_pois(const std::string& poi_path,
                           const std::string& opening_hours_path = "");

// weather.csv: time,temp_c,wind_kmh,barometer_mbar,humidity_pct (sorted by time)
std::vector<weather_record> read_weather(const std::string& path);

// locations.csv: StreetMarker,Longitude,Latitude
location_table read_locations(const std::string& path);

// polygons.csv: StreetMarker,Polygon  with "lon lat;lon lat;..." vertex lists
polygon_table read_polygons(const std::string& path);

// Normalized clean-event CSV (slot_key,device_id,arrival,departure,duration_s,
// restriction,sector,lon,lat), shared by every downstream stage.
void write_events_csv(const std::string& path, const std::vector<parking_event>& events);
std::vector<parking_event> read_events_csv(const std::string& path);
void write_rejections_csv(const std::string& path, const std::vector<rejected_event>& rejected);

}  // namespace fadacs::ingest
