#pragma once

#include <array>
#include <string>
#include <vector>

#include "fadacs/common.hpp"
#include "fadacs/ingest.hpp"
#include "fadacs/spatial.hpp"

namespace fadacs::features {

// lots x timesteps matrix of occupancy rates in [0,1], uniform minute spacing
struct occupancy_grid {
  std::vector<int> lot_ids;
  std::vector<minute_t> timestamps;
  int interval_min = 5;
  std::vector<double> values;  // row-major [lot][time]

  std::size_t n_lots() const { return lot_ids.size(); }
  std::size_t n_steps() const { return timestamps.size(); }
  double at(std::size_t lot, std::size_t t) const { return values[lot * n_steps() + t]; }
  double& at(std::size_t lot, std::size_t t) { return values[lot * n_steps() + t]; }
};

struct time_span {
  minute_t begin = 0;  // inclusive
  minute_t end = 0;    // exclusive
};

// Oc_l^t = (# member slots with an event interval containing instant t) / (# member slots)
occupancy_grid occupancy_series(const std::vector<ingest::parking_event>& events,
                                const std::vector<spatial::parking_lot>& lots, int interval_min,
                                const time_span& span);

struct poi_channel_values {
  double n_open_1km = 0;
  double n_open_500m = 0;
  double n_poi_1km = 0;
  double n_poi_500m = 0;
  double min_dis_1km = 1000;  // sentinel = radius when no POI inside
  double min_dis_500m = 500;
};

poi_channel_values poi_channels(const spatial::parking_lot& lot,
                                const std::vector<ingest::poi>& pois, second_t t);

struct datetime_channel_values {
  int day_of_week = 0;   // Monday = 0
  int day_of_month = 1;  // 1..31 (or month 1..12 under month_of_year mode)
  int hour = 0;
};

enum class day_of_month_mode { day_of_month, month_of_year };

datetime_channel_values datetime_channels(second_t t,
                                          day_of_month_mode mode = day_of_month_mode::day_of_month);

struct weather_channel_values {
  double temp_c = 0;
  double wind_kmh = 0;
  double barometer_mbar = 0;
  double humidity_pct = 0;
};

// step interpolation: latest record at or before t; throws error("NoWeatherBefore")
weather_channel_values weather_channels(second_t t,
                                        const std::vector<ingest::weather_record>& weather);

// The 16 model channels: occupancy history + the 14 contextual features in
// their tabulated order + an is_weekend flag.
extern const std::array<const char*, 16> kChannelNames;
constexpr std::size_t kNumChannels = 16;

struct context_config {
  day_of_month_mode dom_mode = day_of_month_mode::day_of_month;
};

// channels x (lot-major, then time) matrix of raw channel values; shared by
// window assembly and the feature screen
struct context_matrix {
  std::vector<std::string> channel_names;
  std::size_t n_lots = 0;
  std::size_t n_steps = 0;
  std::vector<double> values;  // [channel][lot][time]

  double at(std::size_t c, std::size_t lot, std::size_t t) const {
    return values[(c * n_lots + lot) * n_steps + t];
  }
  double& at(std::size_t c, std::size_t lot, std::size_t t) {
    return values[(c * n_lots + lot) * n_steps + t];
  }
};

context_matrix build_context(const occupancy_grid& grid,
                             const std::vector<spatial::parking_lot>& lots,
                             const std::vector<ingest::poi>& pois,
                             const std::vector<ingest::weather_record>& weather,
                             const context_config& cfg = {});

// samples x timesteps x lots x channels, with per-channel normalization stats
struct feature_tensor {
  std::size_t n_samples = 0;
  std::size_t lookback = 0;
  std::size_t n_lots = 0;
  std::size_t n_channels = 0;
  std::vector<std::string> channel_names;
  std::vector<double> values;
  std::vector<std::pair<double, double>> norm_min_max;  // recorded per channel

  std::size_t index(std::size_t s, std::size_t t, std::size_t l, std::size_t c) const {
    return ((s * lookback + t) * n_lots + l) * n_channels + c;
  }
  double at(std::size_t s, std::size_t t, std::size_t l, std::size_t c) const {
    return values[index(s, t, l, c)];
  }
  double& at(std::size_t s, std::size_t t, std::size_t l, std::size_t c) {
    return values[index(s, t, l, c)];
  }
};

struct target_grid {
  std::size_t n_samples = 0;
  std::size_t n_lots = 0;
  int horizon = 1;  // steps
  std::vector<double> values;  // [sample][lot]

  double at(std::size_t s, std::size_t l) const { return values[s * n_lots + l]; }
  double& at(std::size_t s, std::size_t l) { return values[s * n_lots + l]; }
};

struct window_dataset {
  feature_tensor features;   // raw (unnormalized) values
  target_grid targets;
  std::vector<minute_t> sample_times;  // input-window start per sample
  std::vector<int> lot_order;          // lot_ids along the tensor's lot axis
  // temporal split over samples: [0,train_end) train, [train_end,val_end) val, rest test
  std::size_t train_end = 0;
  std::size_t val_end = 0;
};

// Sample i covers input steps [i, i+lookback) and targets step i+lookback-1+horizon.
// The lot axis is sorted by Morton code of (lat, lon). Throws "SeriesTooShort"
// when no sample fits.
window_dataset assemble_windows(const occupancy_grid& grid, const context_matrix& context,
                                const std::vector<spatial::parking_lot>& lots,
                                std::size_t lookback, int horizon, double train_frac = 0.7,
                                double val_frac = 0.15);

// Per-channel min-max fitted on samples [0, fit_end) only.
std::vector<std::pair<double, double>> fit_normalization(const feature_tensor& t,
                                                         std::size_t fit_end);
void apply_normalization(feature_tensor& t, const std::vector<std::pair<double, double>>& stats);
double denormalize(double v, const std::pair<double, double>& mm);

// Morton (Z-order) permutation of lots on interleaved (lat, lon) bits.
std::vector<std::size_t> morton_order(const std::vector<spatial::parking_lot>& lots);
std::uint64_t morton_code(double lon, double lat, const geo_point& min_c, const geo_point& max_c);

// Flat binary tensor file: magic "FDTN", version, axis lengths, channel names,
// row-major float64 little-endian payload. JSON sidecar carries normalization.
void write_tensor(const std::string& path, const feature_tensor& t);
feature_tensor read_tensor(const std::string& path);
void write_targets(const std::string& path, const target_grid& t);
target_grid read_targets(const std::string& path);

void write_grid_csv(const std::string& path, const occupancy_grid& grid);
occupancy_grid read_grid_csv(const std::string& path, int interval_min = 0);

}  // namespace fadacs::features
