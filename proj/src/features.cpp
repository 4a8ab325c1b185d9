#include "fadacs/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include "fadacs/timeutil.hpp"

namespace fadacs::features {

const std::array<const char*, 16> kChannelNames = {
    "occupancy",      "n_open_poi_1km", "n_open_poi_500m", "n_poi_1km",
    "n_poi_500m",     "min_dis_1km",    "min_dis_500m",    "day_of_week",
    "day_of_month",   "hour",           "availability",    "temp_c",
    "wind_kmh",       "barometer_mbar", "humidity_pct",    "is_weekend"};

occupancy_grid occupancy_series(const std::vector<ingest::parking_event>& events,
                                const std::vector<spatial::parking_lot>& lots, int interval_min,
                                const time_span& span) {
  if (interval_min <= 0) throw error("InvalidConfig", "interval must be positive");
  occupancy_grid grid;
  grid.interval_min = interval_min;
  for (minute_t t = span.begin; t < span.end; t += interval_min) grid.timestamps.push_back(t);

  std::map<std::string, std::size_t> slot_to_lot;
  for (std::size_t li = 0; li < lots.size(); ++li) {
    if (lots[li].slot_keys.empty()) throw error("EmptyLot", std::to_string(lots[li].lot_id));
    grid.lot_ids.push_back(lots[li].lot_id);
    for (const auto& key : lots[li].slot_keys) slot_to_lot[key] = li;
  }

  const std::size_t n_steps = grid.timestamps.size();
  grid.values.assign(lots.size() * n_steps, 0.0);
  if (n_steps == 0) return grid;

  // per-slot coverage marks guard against double counting within a slot
  std::map<std::string, std::vector<bool>> covered;
  const second_t t0_s = to_second(span.begin);
  const second_t step_s = static_cast<second_t>(interval_min) * 60;
  for (const auto& ev : events) {
    auto it = slot_to_lot.find(ev.slot_key());
    if (it == slot_to_lot.end())
      throw error("UnknownSlot", ev.slot_key() + " not in any lot");
    if (ev.departure <= ev.arrival) continue;
    // instants t0 + k*step with arrival <= t < departure
    auto ceil_div = [](second_t a, second_t b) { return a >= 0 ? (a + b - 1) / b : a / b; };
    second_t k_begin = std::max<second_t>(0, ceil_div(ev.arrival - t0_s, step_s));
    second_t k_end = std::min<second_t>(static_cast<second_t>(n_steps),
                                        ceil_div(ev.departure - t0_s, step_s));
    if (k_begin >= k_end) continue;
    auto& marks = covered[ev.slot_key()];
    if (marks.empty()) marks.assign(n_steps, false);
    for (second_t k = k_begin; k < k_end; ++k) marks[static_cast<std::size_t>(k)] = true;
  }

  for (const auto& [key, marks] : covered) {
    std::size_t lot = slot_to_lot.at(key);
    for (std::size_t k = 0; k < n_steps; ++k)
      if (marks[k]) grid.values[lot * n_steps + k] += 1.0;
  }
  for (std::size_t li = 0; li < lots.size(); ++li) {
    double n = static_cast<double>(lots[li].slot_keys.size());
    for (std::size_t k = 0; k < n_steps; ++k) grid.values[li * n_steps + k] /= n;
  }
  return grid;
}

poi_channel_values poi_channels(const spatial::parking_lot& lot,
                                const std::vector<ingest::poi>& pois, second_t t) {
  poi_channel_values v;
  double best_1km = std::numeric_limits<double>::infinity();
  double best_500m = std::numeric_limits<double>::infinity();
  for (const auto& p : pois) {
    double d = spatial::haversine_m(lot.centroid, p.position);
    if (d > 1000.0) continue;
    bool open = p.open_at(t);
    v.n_poi_1km += 1;
    if (open) v.n_open_1km += 1;
    best_1km = std::min(best_1km, d);
    if (d <= 500.0) {
      v.n_poi_500m += 1;
      if (open) v.n_open_500m += 1;
      best_500m = std::min(best_500m, d);
    }
  }
  v.min_dis_1km = std::isfinite(best_1km) ? best_1km : 1000.0;
  v.min_dis_500m = std::isfinite(best_500m) ? best_500m : 500.0;
  return v;
}

datetime_channel_values datetime_channels(second_t t, day_of_month_mode mode) {
  auto c = timeutil::from_seconds(t);
  datetime_channel_values v;
  v.day_of_week = timeutil::day_of_week(t);
  v.day_of_month = mode == day_of_month_mode::day_of_month ? c.day : c.month;
  v.hour = c.hour;
  return v;
}

weather_channel_values weather_channels(second_t t,
                                        const std::vector<ingest::weather_record>& weather) {
  auto it = std::upper_bound(weather.begin(), weather.end(), t,
                             [](second_t v, const ingest::weather_record& w) { return v < w.time; });
  if (it == weather.begin())
    throw error("NoWeatherBefore", timeutil::format_second(t));
  const auto& w = *(it - 1);
  return {w.temp_c, w.wind_kmh, w.barometer_mbar, w.humidity_pct};
}

context_matrix build_context(const occupancy_grid& grid,
                             const std::vector<spatial::parking_lot>& lots,
                             const std::vector<ingest::poi>& pois,
                             const std::vector<ingest::weather_record>& weather,
                             const context_config& cfg) {
  if (lots.size() != grid.n_lots())
    throw error("ShapeMismatch", "lots do not match grid rows");
  context_matrix m;
  m.channel_names.assign(kChannelNames.begin(), kChannelNames.end());
  m.n_lots = grid.n_lots();
  m.n_steps = grid.n_steps();
  m.values.assign(kNumChannels * m.n_lots * m.n_steps, 0.0);

  for (std::size_t t = 0; t < m.n_steps; ++t) {
    second_t ts = to_second(grid.timestamps[t]);
    auto dt = datetime_channels(ts, cfg.dom_mode);
    auto wx = weather_channels(ts, weather);
    double weekend = timeutil::is_weekend(ts) ? 1.0 : 0.0;
    for (std::size_t l = 0; l < m.n_lots; ++l) {
      auto pc = poi_channels(lots[l], pois, ts);
      double occ = grid.at(l, t);
      m.at(0, l, t) = occ;
      m.at(1, l, t) = pc.n_open_1km;
      m.at(2, l, t) = pc.n_open_500m;
      m.at(3, l, t) = pc.n_poi_1km;
      m.at(4, l, t) = pc.n_poi_500m;
      m.at(5, l, t) = pc.min_dis_1km;
      m.at(6, l, t) = pc.min_dis_500m;
      m.at(7, l, t) = dt.day_of_week;
      m.at(8, l, t) = dt.day_of_month;
      m.at(9, l, t) = dt.hour;
      m.at(10, l, t) = occ < 1.0 ? 1.0 : 0.0;  // currently available
      m.at(11, l, t) = wx.temp_c;
      m.at(12, l, t) = wx.wind_kmh;
      m.at(13, l, t) = wx.barometer_mbar;
      m.at(14, l, t) = wx.humidity_pct;
      m.at(15, l, t) = weekend;
    }
  }
  return m;
}

std::uint64_t morton_code(double lon, double lat, const geo_point& min_c, const geo_point& max_c) {
  auto quantize = [](double v, double lo, double hi) -> std::uint32_t {
    if (hi <= lo) return 0;
    double n = (v - lo) / (hi - lo);
    n = std::min(1.0, std::max(0.0, n));
    return static_cast<std::uint32_t>(n * 65535.0);
  };
  auto spread = [](std::uint32_t v) {
    std::uint64_t x = v & 0xFFFF;
    x = (x | (x << 16)) & 0x0000FFFF0000FFFFULL;
    x = (x | (x << 8)) & 0x00FF00FF00FF00FFULL;
    x = (x | (x << 4)) & 0x0F0F0F0F0F0F0F0FULL;
    x = (x | (x << 2)) & 0x3333333333333333ULL;
    x = (x | (x << 1)) & 0x5555555555555555ULL;
    return x;
  };
  std::uint32_t qlat = quantize(lat, min_c.lat, max_c.lat);
  std::uint32_t qlon = quantize(lon, min_c.lon, max_c.lon);
  return (spread(qlat) << 1) | spread(qlon);
}

std::vector<std::size_t> morton_order(const std::vector<spatial::parking_lot>& lots) {
  geo_point min_c{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  geo_point max_c{-std::numeric_limits<double>::infinity(),
                  -std::numeric_limits<double>::infinity()};
  for (const auto& lot : lots) {
    min_c.lon = std::min(min_c.lon, lot.centroid.lon);
    min_c.lat = std::min(min_c.lat, lot.centroid.lat);
    max_c.lon = std::max(max_c.lon, lot.centroid.lon);
    max_c.lat = std::max(max_c.lat, lot.centroid.lat);
  }
  std::vector<std::size_t> order(lots.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<std::uint64_t> codes(lots.size());
  for (std::size_t i = 0; i < lots.size(); ++i)
    codes[i] = morton_code(lots[i].centroid.lon, lots[i].centroid.lat, min_c, max_c);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (codes[a] != codes[b]) return codes[a] < codes[b];
    return lots[a].lot_id < lots[b].lot_id;
  });
  return order;
}

window_dataset assemble_windows(const occupancy_grid& grid, const context_matrix& context,
                                const std::vector<spatial::parking_lot>& lots,
                                std::size_t lookback, int horizon, double train_frac,
                                double val_frac) {
  if (horizon < 1) throw error("InvalidConfig", "horizon must be >= 1");
  if (context.n_lots != grid.n_lots() || context.n_steps != grid.n_steps())
    throw error("ShapeMismatch", "context does not match grid");
  const std::size_t T = grid.n_steps();
  const std::size_t need = lookback + static_cast<std::size_t>(horizon);
  if (T < need)
    throw error("SeriesTooShort", "grid has " + std::to_string(T) + " steps, needs >= " +
                                      std::to_string(need));
  const std::size_t n_samples = T - need + 1;
  const std::size_t L = grid.n_lots();
  const std::size_t C = context.channel_names.size();

  auto order = morton_order(lots);

  window_dataset ds;
  ds.features.n_samples = n_samples;
  ds.features.lookback = lookback;
  ds.features.n_lots = L;
  ds.features.n_channels = C;
  ds.features.channel_names = context.channel_names;
  ds.features.values.assign(n_samples * lookback * L * C, 0.0);
  ds.targets.n_samples = n_samples;
  ds.targets.n_lots = L;
  ds.targets.horizon = horizon;
  ds.targets.values.assign(n_samples * L, 0.0);

  for (std::size_t l = 0; l < L; ++l) ds.lot_order.push_back(grid.lot_ids[order[l]]);

  for (std::size_t s = 0; s < n_samples; ++s) {
    ds.sample_times.push_back(grid.timestamps[s]);
    for (std::size_t t = 0; t < lookback; ++t)
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t c = 0; c < C; ++c)
          ds.features.at(s, t, l, c) = context.at(c, order[l], s + t);
    std::size_t target_step = s + lookback - 1 + static_cast<std::size_t>(horizon);
    for (std::size_t l = 0; l < L; ++l)
      ds.targets.at(s, l) = grid.at(order[l], target_step);
  }

  ds.train_end = static_cast<std::size_t>(std::floor(static_cast<double>(n_samples) * train_frac));
  ds.val_end = static_cast<std::size_t>(
      std::floor(static_cast<double>(n_samples) * (train_frac + val_frac)));
  ds.train_end = std::min(ds.train_end, n_samples);
  ds.val_end = std::min(std::max(ds.val_end, ds.train_end), n_samples);
  return ds;
}

std::vector<std::pair<double, double>> fit_normalization(const feature_tensor& t,
                                                         std::size_t fit_end) {
  if (fit_end == 0 || fit_end > t.n_samples)
    throw error("InvalidConfig", "normalization fit range empty or out of bounds");
  std::vector<std::pair<double, double>> stats(
      t.n_channels, {std::numeric_limits<double>::infinity(),
                     -std::numeric_limits<double>::infinity()});
  for (std::size_t s = 0; s < fit_end; ++s)
    for (std::size_t step = 0; step < t.lookback; ++step)
      for (std::size_t l = 0; l < t.n_lots; ++l)
        for (std::size_t c = 0; c < t.n_channels; ++c) {
          double v = t.at(s, step, l, c);
          stats[c].first = std::min(stats[c].first, v);
          stats[c].second = std::max(stats[c].second, v);
        }
  return stats;
}

void apply_normalization(feature_tensor& t, const std::vector<std::pair<double, double>>& stats) {
  if (stats.size() != t.n_channels) throw error("ShapeMismatch", "normalization channel count");
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    std::size_t c = i % t.n_channels;
    double lo = stats[c].first, hi = stats[c].second;
    double range = hi - lo;
    t.values[i] = range > 0 ? (t.values[i] - lo) / range : 0.0;
  }
  t.norm_min_max = stats;
}

double denormalize(double v, const std::pair<double, double>& mm) {
  double range = mm.second - mm.first;
  return range > 0 ? v * range + mm.first : mm.first;
}

namespace {

constexpr char kTensorMagic[4] = {'F', 'D', 'T', 'N'};
constexpr std::uint32_t kTensorVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<char*>(b), 8);
}

void put_f64(std::ofstream& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(out, v);
}

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::ifstream& in) {
  std::uint64_t v = get_u64(in);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

void put_string(std::ofstream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::ifstream& in) {
  std::uint32_t n = get_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

}  // namespace

void write_tensor(const std::string& path, const feature_tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("OutputUnwritable", path);
  out.write(kTensorMagic, 4);
  put_u32(out, kTensorVersion);
  put_u32(out, 4);  // axes
  put_u64(out, t.n_samples);
  put_u64(out, t.lookback);
  put_u64(out, t.n_lots);
  put_u64(out, t.n_channels);
  put_u32(out, static_cast<std::uint32_t>(t.channel_names.size()));
  for (const auto& n : t.channel_names) put_string(out, n);
  put_u32(out, static_cast<std::uint32_t>(t.norm_min_max.size()));
  for (const auto& [lo, hi] : t.norm_min_max) {
    put_f64(out, lo);
    put_f64(out, hi);
  }
  for (double v : t.values) put_f64(out, v);
}

feature_tensor read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("InputMissing", path);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, kTensorMagic, 4) != 0) throw error("BadFileFormat", path);
  if (get_u32(in) != kTensorVersion) throw error("BadFileVersion", path);
  if (get_u32(in) != 4) throw error("BadFileFormat", "expected 4 axes in " + path);
  feature_tensor t;
  t.n_samples = get_u64(in);
  t.lookback = get_u64(in);
  t.n_lots = get_u64(in);
  t.n_channels = get_u64(in);
  std::uint32_t n_names = get_u32(in);
  for (std::uint32_t i = 0; i < n_names; ++i) t.channel_names.push_back(get_string(in));
  std::uint32_t n_norm = get_u32(in);
  for (std::uint32_t i = 0; i < n_norm; ++i) {
    double lo = get_f64(in);
    double hi = get_f64(in);
    t.norm_min_max.emplace_back(lo, hi);
  }
  std::size_t total = t.n_samples * t.lookback * t.n_lots * t.n_channels;
  t.values.resize(total);
  for (std::size_t i = 0; i < total; ++i) t.values[i] = get_f64(in);
  if (!in) throw error("BadFileFormat", "truncated tensor " + path);
  return t;
}

void write_targets(const std::string& path, const target_grid& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("OutputUnwritable", path);
  out.write(kTensorMagic, 4);
  put_u32(out, kTensorVersion);
  put_u32(out, 2);
  put_u64(out, t.n_samples);
  put_u64(out, t.n_lots);
  put_u32(out, static_cast<std::uint32_t>(t.horizon));
  for (double v : t.values) put_f64(out, v);
}

target_grid read_targets(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("InputMissing", path);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, kTensorMagic, 4) != 0) throw error("BadFileFormat", path);
  if (get_u32(in) != kTensorVersion) throw error("BadFileVersion", path);
  if (get_u32(in) != 2) throw error("BadFileFormat", "expected 2 axes in " + path);
  target_grid t;
  t.n_samples = get_u64(in);
  t.n_lots = get_u64(in);
  t.horizon = static_cast<int>(get_u32(in));
  t.values.resize(t.n_samples * t.n_lots);
  for (auto& v : t.values) v = get_f64(in);
  if (!in) throw error("BadFileFormat", "truncated targets " + path);
  return t;
}

void write_grid_csv(const std::string& path, const occupancy_grid& grid) {
  std::vector<std::string> header{"time"};
  for (int id : grid.lot_ids) header.push_back("lot_" + std::to_string(id));
  std::vector<std::vector<std::string>> rows;
  rows.reserve(grid.n_steps());
  for (std::size_t t = 0; t < grid.n_steps(); ++t) {
    std::vector<std::string> row{timeutil::format_minute(grid.timestamps[t])};
    for (std::size_t l = 0; l < grid.n_lots(); ++l)
      row.push_back(csv::format_double(grid.at(l, t)));
    rows.push_back(std::move(row));
  }
  csv::write_file(path, header, rows);
}

occupancy_grid read_grid_csv(const std::string& path, int interval_min) {
  csv::table t = csv::read_file(path);
  if (t.header.empty() || csv::trim(t.header[0]) != "time")
    throw error("BadFileFormat", "grid csv must start with a time column");
  occupancy_grid grid;
  for (std::size_t c = 1; c < t.header.size(); ++c) {
    std::string name = csv::trim(t.header[c]);
    if (name.rfind("lot_", 0) != 0) throw error("BadFileFormat", "bad lot column " + name);
    grid.lot_ids.push_back(static_cast<int>(csv::parse_int(name.substr(4)).value_or(-1)));
  }
  const std::size_t L = grid.lot_ids.size();
  const std::size_t T = t.rows.size();
  grid.values.assign(L * T, 0.0);
  for (std::size_t r = 0; r < T; ++r) {
    auto ts = timeutil::parse_datetime(t.rows[r][0]);
    if (!ts) throw error("UnparsableRow", "grid line " + std::to_string(r + 2));
    grid.timestamps.push_back(to_minute(*ts));
    for (std::size_t l = 0; l < L; ++l) {
      auto v = csv::parse_double(t.rows[r][l + 1]);
      if (!v) throw error("UnparsableRow", "grid line " + std::to_string(r + 2));
      grid.values[l * T + r] = *v;
    }
  }
  if (grid.timestamps.size() >= 2)
    grid.interval_min = static_cast<int>(grid.timestamps[1] - grid.timestamps[0]);
  if (interval_min > 0) grid.interval_min = interval_min;
  for (std::size_t i = 2; i < grid.timestamps.size(); ++i)
    if (grid.timestamps[i] - grid.timestamps[i - 1] != grid.interval_min)
      throw error("BadFileFormat", "grid timestamps not uniformly spaced");
  return grid;
}

}  // namespace fadacs::features
