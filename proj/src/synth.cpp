#include "fadacs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fadacs/prng.hpp"
#include "fadacs/timeutil.hpp"

namespace fadacs::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

// fluctuation centres and stationary spreads used by the observation transform
struct weather_stat {
  double center;
  double spread;
};
constexpr weather_stat kTemp{20.0, 4.5};
constexpr weather_stat kHumidity{60.0, 12.9};
constexpr weather_stat kWind{15.0, 3.0};
constexpr weather_stat kBarometer{1013.0, 1.3};

struct domain_base {
  double lon;
  double lat;
};

domain_base base_of(domain which) {
  return which == domain::source ? domain_base{144.9600, -37.8100}
                                 : domain_base{144.8200, -38.3700};
}

std::vector<double> ar1(std::size_t n, double rho, double innov_std, prng& rng) {
  std::vector<double> out(n, 0.0);
  double v = 0;
  for (std::size_t i = 0; i < n; ++i) {
    v = rho * v + innov_std * rng.normal();
    out[i] = v;
  }
  return out;
}

struct weather_series {
  std::vector<double> temp, humidity, wind, barometer;  // true values per step
};

weather_series true_weather(std::size_t n_steps, int interval_min, second_t t0, prng rng) {
  weather_series w;
  auto temp_ar = ar1(n_steps, 0.9, 0.8, rng);
  auto hum_ar = ar1(n_steps, 0.35, 9.0, rng);
  auto wind_ar = ar1(n_steps, 0.8, 1.5, rng);
  auto bar_ar = ar1(n_steps, 0.95, 0.4, rng);
  w.temp.resize(n_steps);
  w.humidity.resize(n_steps);
  w.wind.resize(n_steps);
  w.barometer.resize(n_steps);
  for (std::size_t i = 0; i < n_steps; ++i) {
    second_t ts = t0 + static_cast<second_t>(i) * interval_min * 60;
    double tod = static_cast<double>(timeutil::minute_of_day(ts)) / 1440.0;
    double daily = std::sin(2.0 * kPi * (tod - 14.0 / 24.0));
    w.temp[i] = kTemp.center + 6.0 * daily + temp_ar[i];
    w.humidity[i] = std::clamp(kHumidity.center - 12.0 * daily + hum_ar[i], 5.0, 95.0);
    w.wind[i] = std::max(0.0, kWind.center + wind_ar[i]);
    w.barometer[i] = std::max(950.0, kBarometer.center + bar_ar[i]);
  }
  return w;
}

// advected spatial field: neighbouring lots see the same series offset by
// lag steps, smoothed across the lot axis with a [1 2 1]/4 kernel
struct spatial_field {
  std::vector<double> series;  // F over an extended step range
  std::size_t lag = 6;
  std::size_t offset = 0;  // index of step 0 for lot 0

  double raw(std::ptrdiff_t u) const {
    if (series.empty()) return 0.0;
    std::ptrdiff_t i = std::clamp<std::ptrdiff_t>(
        u + static_cast<std::ptrdiff_t>(offset), 0,
        static_cast<std::ptrdiff_t>(series.size()) - 1);
    return series[static_cast<std::size_t>(i)];
  }

  double at(std::size_t lot, std::size_t step) const {
    std::ptrdiff_t u = static_cast<std::ptrdiff_t>(step) -
                       static_cast<std::ptrdiff_t>(lot * lag);
    return 0.25 * raw(u - static_cast<std::ptrdiff_t>(lag)) + 0.5 * raw(u) +
           0.25 * raw(u + static_cast<std::ptrdiff_t>(lag));
  }
};

spatial_field make_field(std::size_t n_steps, std::size_t n_lots, std::size_t lag, prng rng) {
  spatial_field f;
  f.lag = lag;
  f.offset = lag * (n_lots + 1);
  std::size_t n = n_steps + lag * (n_lots + 2) + 1;
  f.series = ar1(n, 0.85, 1.0, rng);
  // two smoothing passes in time
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> s = f.series;
    for (std::size_t i = 1; i + 1 < s.size(); ++i)
      f.series[i] = 0.25 * s[i - 1] + 0.5 * s[i] + 0.25 * s[i + 1];
  }
  double mean = 0;
  for (double v : f.series) mean += v;
  mean /= static_cast<double>(f.series.size());
  double var = 0;
  for (double v : f.series) var += (v - mean) * (v - mean);
  var /= static_cast<double>(f.series.size());
  double inv = var > 0 ? 1.0 / std::sqrt(var) : 1.0;
  for (double& v : f.series) v = (v - mean) * inv;
  return f;
}

std::string lot_key(int lot) { return "L" + std::to_string(lot); }
std::string slot_key(int lot, int slot) {
  return lot_key(lot) + "S" + std::to_string(slot);
}

}  // namespace

const char* to_string(domain d) { return d == domain::source ? "source" : "target"; }

void synth_config::validate() const {
  if (n_lots <= 0) throw error("InvalidConfig", "n_lots must be positive");
  if (slots_per_lot <= 0) throw error("InvalidConfig", "slots_per_lot must be positive");
  if (days < 0) throw error("InvalidConfig", "days must be non-negative");
  if (interval_min != 1 && interval_min != 5)
    throw error("InvalidConfig", "interval_min must be 1 or 5");
  if (shift < 0 || shift > 1) throw error("InvalidConfig", "shift must lie in [0,1]");
  if (spatial_corr < 0 || spatial_corr > 1)
    throw error("InvalidConfig", "spatial_corr must lie in [0,1]");
  if (noise_std < 0) throw error("InvalidConfig", "noise_std must be non-negative");
  if (poi_density_source < 0 || poi_density_target < 0)
    throw error("InvalidConfig", "poi densities must be non-negative");
  if (spatial_lag_steps < 1) throw error("InvalidConfig", "spatial_lag_steps must be >= 1");
  timeutil::civil_datetime c{start_year, start_month, start_day, 0, 0, 0};
  if (!timeutil::valid_civil(c)) throw error("InvalidConfig", "bad start date");
}

synth_domain generate_domain(const synth_config& cfg, domain which) {
  cfg.validate();
  synth_domain out;
  const domain_base base = base_of(which);
  const prng root = prng(cfg.seed).fork(to_string(which));
  const int L = cfg.n_lots;
  const int S = cfg.slots_per_lot;

  // geometry: lots along a line ~40 m apart, slots packed ~3.5 m apart
  for (int l = 0; l < L; ++l) {
    spatial::parking_lot lot;
    lot.lot_id = l;
    lot.rule = "2P";
    double lot_lon = base.lon + 0.00045 * l;
    double sum_lon = 0, sum_lat = 0;
    for (int s = 0; s < S; ++s) {
      spatial::slot_geometry sg;
      sg.slot_key = slot_key(l, s);
      sg.position = {lot_lon + 0.00004 * s, base.lat + (s % 2 ? 0.00002 : 0.0)};
      sg.rule = lot.rule;
      sg.sector = "S" + std::to_string(l);
      sum_lon += sg.position.lon;
      sum_lat += sg.position.lat;
      lot.slot_keys.push_back(sg.slot_key);
      out.slots.push_back(std::move(sg));
    }
    lot.centroid = {sum_lon / S, sum_lat / S};
    out.lots.push_back(std::move(lot));
  }

  // POIs on a parallel line; even-indexed ones carry opening hours
  const int poi_density =
      which == domain::source ? cfg.poi_density_source : cfg.poi_density_target;
  static const char* kCategories[3] = {"cafe", "bar", "landmark"};
  static const double kOffsetsDeg[3] = {0.0014, 0.0036, 0.0072};  // ~150/400/800 m
  int poi_idx = 0;
  for (int l = 0; l < L; ++l) {
    for (int k = 0; k < poi_density; ++k, ++poi_idx) {
      ingest::poi p;
      p.poi_id = std::string(to_string(which)) + "_poi_" + std::to_string(poi_idx);
      p.category = kCategories[poi_idx % 3];
      p.position = {out.lots[l].centroid.lon, base.lat + kOffsetsDeg[(l + k) % 3]};
      if (poi_idx % 2 == 0) {
        p.opening_hours.emplace();
        for (int d = 0; d < 7; ++d)
          (*p.opening_hours)[d].push_back(d < 5 ? ingest::weekly_interval{480, 1320}
                                                : ingest::weekly_interval{600, 960});
      }
      if (poi_idx % 3 == 1) p.capacity = 40 + 10 * (poi_idx % 5);
      out.pois.push_back(std::move(p));
    }
  }

  // time base
  const second_t t0 =
      timeutil::to_seconds({cfg.start_year, cfg.start_month, cfg.start_day, 0, 0, 0});
  const minute_t m0 = to_minute(t0);
  const std::size_t n_steps =
      static_cast<std::size_t>(cfg.days) * 1440 / static_cast<std::size_t>(cfg.interval_min);
  out.span = {m0, m0 + static_cast<minute_t>(cfg.days) * 1440};

  weather_series truth = true_weather(n_steps, cfg.interval_min, t0, root.fork("weather"));

  // observed weather: the target mixes the true fluctuation with an
  // independent one so the marginal stays put while the measured coupling
  // rotates from +1 (shift 0) through 0 (shift 0.5) to -1 (shift 1)
  out.weather.reserve(n_steps);
  const double mix_true = std::cos(kPi * cfg.shift);
  const double mix_indep = std::sin(kPi * cfg.shift);
  const bool transform = which == domain::target && cfg.shift > 0;
  prng wnoise = root.fork("weather-indep");
  auto indep_t = ar1(n_steps, 0.9, kTemp.spread * std::sqrt(1 - 0.9 * 0.9), wnoise);
  auto indep_h = ar1(n_steps, 0.6, kHumidity.spread * std::sqrt(1 - 0.6 * 0.6), wnoise);
  auto indep_w = ar1(n_steps, 0.8, kWind.spread * std::sqrt(1 - 0.8 * 0.8), wnoise);
  auto indep_b = ar1(n_steps, 0.95, kBarometer.spread * std::sqrt(1 - 0.95 * 0.95), wnoise);
  for (std::size_t i = 0; i < n_steps; ++i) {
    ingest::weather_record rec;
    rec.time = t0 + static_cast<second_t>(i) * cfg.interval_min * 60;
    auto mix = [&](double v, const weather_stat& st, double indep) {
      if (!transform) return v;
      return st.center + mix_true * (v - st.center) + mix_indep * indep;
    };
    rec.temp_c = mix(truth.temp[i], kTemp, indep_t[i]);
    rec.humidity_pct = std::clamp(mix(truth.humidity[i], kHumidity, indep_h[i]), 0.0, 100.0);
    rec.wind_kmh = std::max(0.0, mix(truth.wind[i], kWind, indep_w[i]));
    rec.barometer_mbar = std::max(900.0, mix(truth.barometer[i], kBarometer, indep_b[i]));
    out.weather.push_back(rec);
  }

  // static POI pull per lot, centred across lots
  std::vector<double> poi_pull(L, 0.0);
  {
    double mean = 0;
    for (int l = 0; l < L; ++l) {
      double n500 = 0;
      for (const auto& p : out.pois)
        if (spatial::haversine_m(out.lots[l].centroid, p.position) <= 500.0) n500 += 1;
      poi_pull[l] = n500;
      mean += n500;
    }
    mean /= L;
    double scale = 0;
    for (int l = 0; l < L; ++l) scale = std::max(scale, std::abs(poi_pull[l] - mean));
    for (int l = 0; l < L; ++l)
      poi_pull[l] = scale > 0 ? (poi_pull[l] - mean) / scale : 0.0;
  }

  spatial_field field = make_field(n_steps, static_cast<std::size_t>(L),
                                   static_cast<std::size_t>(cfg.spatial_lag_steps),
                                   root.fork("field"));

  // occupancy: base + daily + weekly + poi + advected field + lagged weather
  // coupling (true series; the source signs mirror the city-centre screen:
  // humidity negative, temperature positive) + white noise
  out.grid.interval_min = cfg.interval_min;
  for (minute_t t = out.span.begin; t < out.span.end; t += cfg.interval_min)
    out.grid.timestamps.push_back(t);
  for (int l = 0; l < L; ++l) out.grid.lot_ids.push_back(l);
  out.grid.values.assign(static_cast<std::size_t>(L) * n_steps, 0.0);

  prng noise = root.fork("noise");
  const double a_spatial = 0.22 * cfg.spatial_corr;
  const double c_hum = -0.40;
  const double c_temp = 0.12;
  for (int l = 0; l < L; ++l) {
    const double phase = 0.25 * std::sin(1.7 * l);
    for (std::size_t i = 0; i < n_steps; ++i) {
      second_t ts = t0 + static_cast<second_t>(i) * cfg.interval_min * 60;
      double tod = static_cast<double>(timeutil::minute_of_day(ts)) / 1440.0;
      std::size_t lag_i = i > 0 ? i - 1 : 0;
      double h_norm = (truth.humidity[lag_i] - kHumidity.center) / 40.0;
      double t_norm = (truth.temp[lag_i] - kTemp.center) / 12.0;
      double v = 0.45 + 0.16 * std::sin(2.0 * kPi * tod - 2.1 + phase) +
                 (timeutil::is_weekend(ts) ? 0.05 : -0.05) + 0.05 * poi_pull[l] +
                 a_spatial * field.at(static_cast<std::size_t>(l), i) + c_hum * h_norm +
                 c_temp * t_norm + cfg.noise_std * noise.normal();
      out.grid.values[static_cast<std::size_t>(l) * n_steps + i] = std::clamp(v, 0.0, 1.0);
    }
  }

  if (cfg.events_mode) {
    // quantize to whole slots, then emit maximal per-slot runs under a stack
    // model (slot j of a lot is occupied iff j < occupied count)
    for (int l = 0; l < L; ++l)
      for (std::size_t i = 0; i < n_steps; ++i) {
        double& v = out.grid.values[static_cast<std::size_t>(l) * n_steps + i];
        v = static_cast<double>(std::llround(v * S)) / static_cast<double>(S);
      }
    const second_t step_s = static_cast<second_t>(cfg.interval_min) * 60;
    for (int l = 0; l < L; ++l) {
      for (int s = 0; s < S; ++s) {
        std::size_t i = 0;
        while (i < n_steps) {
          double need = (static_cast<double>(s) + 0.5) / static_cast<double>(S);
          if (out.grid.values[static_cast<std::size_t>(l) * n_steps + i] < need) {
            ++i;
            continue;
          }
          std::size_t run_end = i;
          while (run_end + 1 < n_steps &&
                 out.grid.values[static_cast<std::size_t>(l) * n_steps + run_end + 1] >= need &&
                 timeutil::same_calendar_day(
                     t0 + static_cast<second_t>(run_end + 1) * step_s,
                     t0 + static_cast<second_t>(i) * step_s))
            ++run_end;
          ingest::parking_event ev;
          ev.device_id = slot_key(l, s);
          ev.arrival = t0 + static_cast<second_t>(i) * step_s;
          second_t raw_dep = t0 + static_cast<second_t>(run_end + 1) * step_s;
          second_t day_cap = timeutil::start_of_day(ev.arrival) + 86399;
          ev.departure = std::min(raw_dep, day_cap);
          ev.duration_s = ev.departure - ev.arrival;
          ev.restriction = "2P";
          ev.sector = "S" + std::to_string(l);
          ev.position = out.slots[static_cast<std::size_t>(l * S + s)].position;
          out.events.push_back(std::move(ev));
          i = run_end + 1;
        }
      }
    }

    if (cfg.inject_anomalies && n_steps > 0) {
      auto daytime = [&](int day, int hour, int minute) {
        return t0 + static_cast<second_t>(day) * 86400 + hour * 3600 + minute * 60;
      };
      const std::string key0 = slot_key(0, 0);
      ingest::parking_event bad;
      bad.device_id = key0;
      bad.restriction = "2P";
      bad.sector = "S0";
      bad.position = out.slots[0].position;

      bad.arrival = daytime(0, 11, 0);
      bad.departure = daytime(0, 10, 59);
      bad.duration_s = -30;
      out.events.push_back(bad);
      out.injected_by_reason["NonPositiveDuration"] += 1;

      bad.arrival = daytime(0, 0, 0);
      bad.departure = daytime(0, 0, 0);
      bad.duration_s = 120;  // claims two minutes, both stamps at midnight
      out.events.push_back(bad);
      out.injected_by_reason["BothMidnight"] += 1;

      if (cfg.days >= 2) {
        bad.arrival = daytime(0, 23, 0);
        bad.departure = daytime(1, 1, 0);
        bad.duration_s = 7200;
        out.events.push_back(bad);
        out.injected_by_reason["CrossesMidnight"] += 1;
      }

      // an overlapping pair dropped into a window where the carrier slot is
      // guaranteed vacant, so the clean grid is untouched
      const int carrier_slot = S - 1;
      const double carrier_need =
          (static_cast<double>(carrier_slot) + 0.5) / static_cast<double>(S);
      for (int l = 0; l < L; ++l) {
        bool placed = false;
        std::size_t steps_per_day =
            static_cast<std::size_t>(1440 / cfg.interval_min);
        for (std::size_t i = 0; i + 3 < n_steps; ++i) {
          if (i / steps_per_day != (i + 3) / steps_per_day) continue;  // same day
          bool vacant = true;
          for (std::size_t j = i; j <= i + 3; ++j)
            if (out.grid.values[static_cast<std::size_t>(l) * n_steps + j] >= carrier_need)
              vacant = false;
          if (!vacant) continue;
          ingest::parking_event ov;
          ov.device_id = slot_key(l, carrier_slot);
          ov.restriction = "2P";
          ov.sector = "S" + std::to_string(l);
          ov.position = out.slots[static_cast<std::size_t>(l * S + carrier_slot)].position;
          ov.arrival = t0 + static_cast<second_t>(i) * step_s;
          ov.departure = ov.arrival + 2 * step_s;
          ov.duration_s = 2 * step_s;
          out.events.push_back(ov);
          ov.arrival = ov.arrival + step_s;
          ov.departure = ov.arrival + 2 * step_s;
          ov.duration_s = 2 * step_s;
          out.events.push_back(ov);
          out.injected_by_reason["Overlap"] += 2;
          placed = true;
          break;
        }
        if (placed) break;
      }
    }
  }
  return out;
}

roundtrip_report roundtrip_check(const synth_config& base_cfg) {
  synth_config cfg = base_cfg;
  cfg.events_mode = true;
  synth_domain d = generate_domain(cfg, domain::source);

  roundtrip_report rep;
  rep.n_events = d.events.size();
  rep.injected_by_reason = d.injected_by_reason;

  auto filtered = ingest::filter_anomalies(d.events);
  rep.n_kept = filtered.kept.size();
  rep.n_rejected = filtered.rejected.size();
  for (const auto& r : filtered.rejected)
    rep.rejected_by_reason[ingest::to_string(r.reason)] += 1;

  features::occupancy_grid grid =
      features::occupancy_series(filtered.kept, d.lots, cfg.interval_min, d.span);
  rep.max_abs_diff = 0;
  for (std::size_t i = 0; i < grid.values.size(); ++i)
    rep.max_abs_diff = std::max(rep.max_abs_diff, std::abs(grid.values[i] - d.grid.values[i]));
  rep.grid_match = rep.max_abs_diff <= 1e-12;
  rep.rejections_match = rep.rejected_by_reason == rep.injected_by_reason;
  return rep;
}

void write_domain(const std::string& dir, const synth_config& cfg,
                  const synth_domain& d) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  spatial::write_slots_csv(dir + "/slots.csv", d.slots);
  spatial::write_lots_csv(dir + "/lots.csv", d.lots);

  std::vector<std::vector<std::string>> poi_rows, hour_rows;
  for (const auto& p : d.pois) {
    poi_rows.push_back({p.poi_id, p.category, csv::format_double(p.position.lon),
                        csv::format_double(p.position.lat),
                        p.capacity ? std::to_string(*p.capacity) : ""});
    if (p.opening_hours)
      for (int day = 0; day < 7; ++day)
        for (const auto& iv : (*p.opening_hours)[day])
          hour_rows.push_back({p.poi_id, std::to_string(day), std::to_string(iv.open_min),
                               std::to_string(iv.close_min)});
  }
  csv::write_file(dir + "/pois.csv", {"poi_id", "category", "lon", "lat", "capacity"}, poi_rows);
  csv::write_file(dir + "/opening_hours.csv", {"poi_id", "day_of_week", "open_min", "close_min"},
                  hour_rows);

  std::vector<std::vector<std::string>> weather_rows;
  for (const auto& w : d.weather)
    weather_rows.push_back({timeutil::format_second(w.time), csv::format_double(w.temp_c),
                            csv::format_double(w.wind_kmh),
                            csv::format_double(w.barometer_mbar),
                            csv::format_double(w.humidity_pct)});
  csv::write_file(dir + "/weather.csv",
                  {"time", "temp_c", "wind_kmh", "barometer_mbar", "humidity_pct"}, weather_rows);

  features::write_grid_csv(dir + "/truth_grid.csv", d.grid);
  if (cfg.events_mode) {
    // raw Rye-schema log, ready for `ingest --schema rye`
    std::vector<std::vector<std::string>> rows;
    rows.reserve(d.events.size());
    for (const auto& ev : d.events)
      rows.push_back({ev.device_id, "sensor " + ev.device_id,
                      timeutil::format_second(ev.arrival), timeutil::format_second(ev.departure),
                      std::to_string(ev.duration_s), "0", ev.sector.value_or(""), ev.restriction,
                      ev.position ? csv::format_double(ev.position->lon) : "",
                      ev.position ? csv::format_double(ev.position->lat) : ""});
    csv::write_file(dir + "/events.csv",
                    {"DeviceId", "DeviceName", "ArrivalTime", "DepartureTime", "Duration",
                     "OverstayDuration", "StreetName", "Restriction", "Longitude", "Latitude"},
                    rows);
  }
}

}  // namespace fadacs::synth
