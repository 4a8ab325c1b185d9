#include "doctest.h"

#include "fadacs/features.hpp"
#include "fadacs/ingest.hpp"
#include "fadacs/stats.hpp"
#include "fadacs/synth.hpp"
#include "oracles.hpp"

using namespace fadacs;
using namespace fadacs::synth;

namespace {

synth_config small_cfg() {
  synth_config cfg;
  cfg.seed = 42;
  cfg.n_lots = 6;
  cfg.slots_per_lot = 8;
  cfg.days = 3;
  cfg.interval_min = 5;
  cfg.noise_std = 0.04;
  return cfg;
}

std::vector<double> pooled_occupancy(const synth_domain& d) {
  return d.grid.values;
}

// scalar joint statistic for the weather/occupancy coupling: centred product
std::vector<double> coupling_samples(const synth_domain& d) {
  std::vector<double> out;
  const std::size_t T = d.grid.n_steps();
  for (std::size_t l = 0; l < d.grid.n_lots(); ++l)
    for (std::size_t t = 0; t < T; ++t)
      out.push_back((d.weather[t].humidity_pct - 60.0) * (d.grid.at(l, t) - 0.45));
  return out;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("determinism: same config twice is bit-identical") {
  auto cfg = small_cfg();
  auto a = generate_domain(cfg, domain::source);
  auto b = generate_domain(cfg, domain::source);
  CHECK(a.grid.values == b.grid.values);
  REQUIRE(a.weather.size() == b.weather.size());
  for (std::size_t i = 0; i < a.weather.size(); ++i) {
    CHECK(a.weather[i].humidity_pct == b.weather[i].humidity_pct);
    CHECK(a.weather[i].temp_c == b.weather[i].temp_c);
  }
  auto t1 = generate_domain(cfg, domain::target);
  auto t2 = generate_domain(cfg, domain::target);
  CHECK(t1.grid.values == t2.grid.values);
  CHECK(t1.grid.values != a.grid.values);  // domains draw their own streams
}

TEST_CASE("occupancy stays in range and is plausibly occupied") {
  auto d = generate_domain(small_cfg(), domain::source);
  double mean = 0;
  for (double v : d.grid.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    mean += v;
  }
  mean /= static_cast<double>(d.grid.values.size());
  CHECK(mean > 0.2);
  CHECK(mean < 0.8);
}

TEST_CASE("config validation") {
  auto bad = small_cfg();
  bad.shift = 1.5;
  CHECK_THROWS_WITH_AS(generate_domain(bad, domain::source), doctest::Contains("InvalidConfig"),
                       error);
  bad = small_cfg();
  bad.interval_min = 7;
  CHECK_THROWS_AS(bad.validate(), error);
  bad = small_cfg();
  bad.noise_std = -1;
  CHECK_THROWS_AS(bad.validate(), error);
}

TEST_CASE("zero-day span gives an empty grid and no events") {
  auto cfg = small_cfg();
  cfg.days = 0;
  cfg.events_mode = true;
  auto d = generate_domain(cfg, domain::source);
  CHECK(d.grid.n_steps() == 0);
  CHECK(d.events.empty());
}

TEST_CASE("shift 0, same seed: the two domains are identically distributed") {
  auto cfg = small_cfg();
  cfg.days = 5;
  cfg.shift = 0.0;
  auto src = generate_domain(cfg, domain::source);
  auto tgt = generate_domain(cfg, domain::target);
  double ks = oracles::ks_statistic(pooled_occupancy(src), pooled_occupancy(tgt));
  CHECK(ks < 0.05);
}

TEST_CASE("shift 1 flips the measured humidity correlation with |r| > 0.1") {
  auto cfg = small_cfg();
  cfg.days = 5;
  cfg.shift = 1.0;
  auto src = generate_domain(cfg, domain::source);
  auto tgt = generate_domain(cfg, domain::target);
  auto corr_of = [](const synth_domain& d) {
    std::vector<double> h, occ;
    const std::size_t T = d.grid.n_steps();
    for (std::size_t l = 0; l < d.grid.n_lots(); ++l)
      for (std::size_t t = 0; t < T; ++t) {
        h.push_back(d.weather[t].humidity_pct);
        occ.push_back(d.grid.at(l, t));
      }
    return stats::pearson(h, occ);
  };
  double r_src = corr_of(src);
  double r_tgt = corr_of(tgt);
  CHECK(r_src < -0.1);  // city-centre sign
  CHECK(r_tgt > 0.1);   // coastal sign
}

TEST_CASE("the joint weather-occupancy KS distance grows with shift") {
  auto cfg = small_cfg();
  cfg.days = 5;
  auto src = generate_domain(cfg, domain::source);
  auto at_shift = [&](double s) {
    auto c = cfg;
    c.shift = s;
    return oracles::ks_statistic(coupling_samples(src),
                                 coupling_samples(generate_domain(c, domain::target)));
  };
  double k0 = at_shift(0.0);
  double k5 = at_shift(0.5);
  double k1 = at_shift(1.0);
  CHECK(k0 <= k5 + 1e-9);
  CHECK(k5 <= k1 + 1e-9);
}

TEST_CASE("clean generated events pass the anomaly filter untouched") {
  auto cfg = small_cfg();
  cfg.events_mode = true;
  auto d = generate_domain(cfg, domain::source);
  CHECK(d.events.size() > 0);
  auto res = ingest::filter_anomalies(d.events);
  CHECK(res.rejected.empty());
  CHECK(res.kept.size() == d.events.size());
}

TEST_CASE("events round-trip through the pipeline to the exact grid") {
  auto rep = roundtrip_check(small_cfg());
  CHECK(rep.grid_match);
  CHECK(rep.max_abs_diff <= 1e-12);
  CHECK(rep.n_rejected == 0);
}

TEST_CASE("injected anomalies are rejected with matching reasons, grid intact") {
  auto cfg = small_cfg();
  cfg.inject_anomalies = true;
  auto rep = roundtrip_check(cfg);
  CHECK(rep.grid_match);
  CHECK(rep.rejections_match);
  CHECK(rep.injected_by_reason.at("NonPositiveDuration") == 1);
  CHECK(rep.injected_by_reason.at("BothMidnight") == 1);
  CHECK(rep.injected_by_reason.at("CrossesMidnight") == 1);
  CHECK(rep.injected_by_reason.at("Overlap") == 2);
  CHECK(rep.n_rejected == 5);
}

TEST_CASE("poi density differs per domain when configured") {
  auto cfg = small_cfg();
  cfg.poi_density_source = 2;
  cfg.poi_density_target = 5;
  auto src = generate_domain(cfg, domain::source);
  auto tgt = generate_domain(cfg, domain::target);
  CHECK(src.pois.size() == 2u * 6u);
  CHECK(tgt.pois.size() == 5u * 6u);
}

TEST_CASE("grid quantization in events mode uses whole slot counts") {
  auto cfg = small_cfg();
  cfg.events_mode = true;
  auto d = generate_domain(cfg, domain::source);
  for (double v : d.grid.values) {
    double scaled = v * cfg.slots_per_lot;
    CHECK(std::abs(scaled - std::llround(scaled)) < 1e-9);
  }
}

}  // TEST_SUITE
