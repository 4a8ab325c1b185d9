#pragma once

#include <map>
#include <string>
#include <vector>

#include "fadacs/features.hpp"
#include "fadacs/ingest.hpp"
#include "fadacs/spatial.hpp"

namespace fadacs::synth {

enum class domain { source, target };

const char* to_string(domain d);

// Deterministic two-city generator. All randomness flows from the splitmix64
// streams in fadacs/prng.hpp, so equal configs reproduce byte-identical data.
struct synth_config {
  std::uint64_t seed = 7;
  int n_lots = 20;          // per domain
  int slots_per_lot = 10;
  int days = 7;
  int interval_min = 5;     // occupancy slicing, 1 or 5
  double shift = 0.0;       // 0 = identical domains, 1 = fully flipped weather observation
  double spatial_corr = 0.5;
  double noise_std = 0.05;
  int poi_density_source = 3;  // POIs per lot
  int poi_density_target = 3;
  int spatial_lag_steps = 6;   // advection lag between neighbouring lots
  bool events_mode = false;
  bool inject_anomalies = false;
  int start_year = 2017;
  int start_month = 2;
  int start_day = 6;  // a Monday

  void validate() const;  // throws error("InvalidConfig")
};

struct synth_domain {
  std::vector<spatial::slot_geometry> slots;
  std::vector<spatial::parking_lot> lots;
  std::vector<ingest::poi> pois;
  std::vector<ingest::weather_record> weather;  // observed table (shift-transformed for target)
  features::occupancy_grid grid;                // ground truth (quantized in events mode)
  features::time_span span;
  std::vector<ingest::parking_event> events;    // events mode only, anomalies appended
  std::map<std::string, std::size_t> injected_by_reason;
};

synth_domain generate_domain(const synth_config& cfg, domain which);

struct roundtrip_report {
  double max_abs_diff = 0;
  std::size_t n_events = 0;
  std::size_t n_kept = 0;
  std::size_t n_rejected = 0;
  std::map<std::string, std::size_t> rejected_by_reason;
  std::map<std::string, std::size_t> injected_by_reason;
  bool grid_match = false;        // max_abs_diff <= 1e-12
  bool rejections_match = false;  // per-reason rejected == injected
};

// events -> filter_anomalies -> occupancy_series, compared against the
// generator's own grid
roundtrip_report roundtrip_check(const synth_config& cfg);

// CSV emission in the exact schemas the ingest stage consumes.
void write_domain(const std::string& dir, const synth_config& cfg,
                  const synth_domain& d);

}  // namespace fadacs::synth
