// fadacs: parking-occupancy transfer pipeline CLI.
// Subcommands: ingest | cluster | featurize | screen | synth | train | adapt |
// evaluate | report. Config file (JSON, nested sections) plus flag overrides;
// flags win. Errors leave as machine-readable JSON on stderr, exit code 1.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fadacs/adapt.hpp"
#include "fadacs/eval.hpp"
#include "fadacs/features.hpp"
#include "fadacs/ingest.hpp"
#include "fadacs/manifest.hpp"
#include "fadacs/spatial.hpp"
#include "fadacs/stats.hpp"
#include "fadacs/synth.hpp"
#include "fadacs/timeutil.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fadacs;

namespace {

constexpr const char* kVersion = "fadacs 1.0.0";

json g_config;  // loaded config file, empty object when absent

json config_section(const std::string& name) {
  if (g_config.contains(name) && g_config[name].is_object()) return g_config[name];
  return json::object();
}

// flag wins, then config section key, then default
template <typename T>
T resolve(const CLI::Option* opt, const T& flag_value, const json& section,
          const std::string& key, const T& fallback) {
  if (opt && opt->count() > 0) return flag_value;
  if (section.contains(key)) {
    try {
      return section.at(key).get<T>();
    } catch (const json::exception&) {
      throw error("ConfigInvalid", "config key '" + key + "' has the wrong type");
    }
  }
  return fallback;
}

void require_input(const std::string& path, const std::string& what) {
  if (path.empty()) throw error("ConfigInvalid", what + " not set");
  if (!fs::exists(path)) throw error("InputMissing", what + ": " + path);
}

struct timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::string config_hash_of(const json& resolved) {
  return manifest::string_digest(resolved.dump());
}

// --- model (de)serialization ---------------------------------------------------

json model_config_to_json(const adapt::model_config& c) {
  return {{"encoder", adapt::to_string(c.kind)},
          {"in_channels", c.in_channels},
          {"lookback", c.lookback},
          {"n_lots", c.n_lots},
          {"hidden", c.hidden},
          {"code_channels", c.code_channels},
          {"kernel", c.kernel},
          {"single_cell", c.single_cell},
          {"disc_hidden", c.disc_hidden},
          {"head", c.head == adapt::discriminator_head::two_logit_log_softmax ? "two_logit"
                                                                              : "one_logit"}};
}

adapt::model_config model_config_from_json(const json& j) {
  adapt::model_config c;
  c.kind = adapt::encoder_kind_from_string(j.at("encoder").get<std::string>());
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.lookback = j.at("lookback").get<std::size_t>();
  c.n_lots = j.at("n_lots").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.code_channels = j.at("code_channels").get<std::size_t>();
  c.kernel = j.at("kernel").get<std::size_t>();
  c.single_cell = j.at("single_cell").get<bool>();
  c.disc_hidden = j.at("disc_hidden").get<std::size_t>();
  c.head = j.at("head").get<std::string>() == "one_logit"
               ? adapt::discriminator_head::one_logit_sigmoid
               : adapt::discriminator_head::two_logit_log_softmax;
  return c;
}

void save_model(const std::string& dir, adapt::model& m, const json& extra_meta) {
  fs::create_directories(dir);
  json meta = extra_meta;
  meta["model_config"] = model_config_to_json(m.cfg);
  neural::save_checkpoint(dir + "/model.ckpt", m.params(), meta.dump());
}

adapt::model load_model(const std::string& dir) {
  const std::string path = dir + "/model.ckpt";
  if (!neural::checkpoint_exists(path))
    throw error("UpstreamStageMissing", "no checkpoint at " + path);
  std::string meta = neural::read_checkpoint_metadata(path);
  adapt::model m = adapt::build_model(model_config_from_json(json::parse(meta).at("model_config")),
                                      /*seed=*/0);
  neural::load_checkpoint(path, m.params());
  return m;
}

// --- dataset bundles -------------------------------------------------------------

struct bundle {
  features::window_dataset data;
  features::occupancy_grid grid;
  json meta;
};

void write_bundle(const std::string& dir, const features::window_dataset& ds,
                  const features::occupancy_grid& grid, const json& extra) {
  fs::create_directories(dir);
  features::write_tensor(dir + "/features.bin", ds.features);
  features::write_targets(dir + "/targets.bin", ds.targets);
  features::write_grid_csv(dir + "/grid.csv", grid);
  json meta = extra;
  meta["channel_names"] = ds.features.channel_names;
  meta["lot_order"] = ds.lot_order;
  meta["n_samples"] = ds.features.n_samples;
  meta["lookback"] = ds.features.lookback;
  meta["horizon"] = ds.targets.horizon;
  meta["train_end"] = ds.train_end;
  meta["val_end"] = ds.val_end;
  meta["first_sample_minute"] = ds.sample_times.empty() ? 0 : ds.sample_times.front();
  json norm = json::array();
  for (const auto& [lo, hi] : ds.features.norm_min_max) norm.push_back({lo, hi});
  meta["normalization"] = norm;
  std::ofstream out(dir + "/meta.json", std::ios::binary);
  out << meta.dump(2) << '\n';
}

bundle read_bundle(const std::string& dir) {
  if (!fs::exists(dir + "/meta.json"))
    throw error("UpstreamStageMissing", "no dataset bundle at " + dir);
  bundle b;
  std::ifstream in(dir + "/meta.json", std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  b.meta = json::parse(ss.str());
  b.data.features = features::read_tensor(dir + "/features.bin");
  b.data.targets = features::read_targets(dir + "/targets.bin");
  b.grid = features::read_grid_csv(dir + "/grid.csv");
  b.data.train_end = b.meta.at("train_end").get<std::size_t>();
  b.data.val_end = b.meta.at("val_end").get<std::size_t>();
  b.data.lot_order = b.meta.at("lot_order").get<std::vector<int>>();
  minute_t first = b.meta.at("first_sample_minute").get<minute_t>();
  for (std::size_t s = 0; s < b.data.features.n_samples; ++s)
    b.data.sample_times.push_back(first + static_cast<minute_t>(s) * b.grid.interval_min);
  return b;
}

// --- shared loading steps ---------------------------------------------------------

std::vector<spatial::parking_lot> lots_matching_grid(const std::string& lots_path,
                                                     const features::occupancy_grid& grid) {
  auto lots = spatial::read_lots_csv(lots_path);
  std::map<int, spatial::parking_lot> by_id;
  for (auto& l : lots) by_id[l.lot_id] = std::move(l);
  std::vector<spatial::parking_lot> out;
  for (int id : grid.lot_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw error("UnknownSlot", "grid lot " + std::to_string(id) + " missing from lots file");
    out.push_back(it->second);
  }
  return out;
}

struct context_inputs {
  features::occupancy_grid grid;
  std::vector<spatial::parking_lot> lots;
  std::vector<ingest::poi> pois;
  std::vector<ingest::weather_record> weather;
};

context_inputs load_context_inputs(const std::string& grid_path, const std::string& events_path,
                                   const std::string& lots_path, const std::string& pois_path,
                                   const std::string& hours_path, const std::string& weather_path,
                                   int interval, const std::string& span_start,
                                   const std::string& span_end) {
  context_inputs ci;
  require_input(lots_path, "--lots");
  require_input(pois_path, "--pois");
  require_input(weather_path, "--weather");
  if (!grid_path.empty()) {
    require_input(grid_path, "--grid");
    ci.grid = features::read_grid_csv(grid_path, interval);
    ci.lots = lots_matching_grid(lots_path, ci.grid);
  } else {
    require_input(events_path, "--events");
    auto events = ingest::read_events_csv(events_path);
    auto filtered = ingest::filter_anomalies(events);
    auto lots = spatial::read_lots_csv(lots_path);
    features::time_span span;
    if (!span_start.empty() && !span_end.empty()) {
      auto s = timeutil::parse_datetime(span_start);
      auto e = timeutil::parse_datetime(span_end);
      if (!s || !e) throw error("ConfigInvalid", "bad span timestamps");
      span = {to_minute(*s), to_minute(*e)};
    } else {
      if (filtered.kept.empty()) throw error("SeriesTooShort", "no events after filtering");
      second_t lo = filtered.kept.front().arrival, hi = filtered.kept.front().departure;
      for (const auto& ev : filtered.kept) {
        lo = std::min(lo, ev.arrival);
        hi = std::max(hi, ev.departure);
      }
      span = {to_minute(timeutil::start_of_day(lo)),
              to_minute(timeutil::start_of_day(hi)) + 1440};
    }
    ci.grid = features::occupancy_series(filtered.kept, lots, interval, span);
    ci.lots = std::move(lots);
  }
  ci.pois = ingest::read_pois(pois_path, hours_path);
  ci.weather = ingest::read_weather(weather_path);
  return ci;
}

adapt::train_config train_config_from(const json& section, const CLI::Option* o_epochs,
                                      std::size_t epochs, const CLI::Option* o_batch,
                                      std::size_t batch, const CLI::Option* o_lr, double lr,
                                      const CLI::Option* o_seed, std::uint64_t seed,
                                      const CLI::Option* o_bpe, std::size_t bpe,
                                      const CLI::Option* o_patience, std::size_t patience,
                                      const CLI::Option* o_dsteps, std::size_t dsteps) {
  adapt::train_config tc;
  tc.epochs = resolve(o_epochs, epochs, section, "epochs", std::size_t{30});
  tc.batch_size = resolve(o_batch, batch, section, "batch_size", std::size_t{32});
  tc.lr = resolve(o_lr, lr, section, "lr", 1e-3);
  tc.seed = resolve(o_seed, seed, section, "seed", std::uint64_t{1});
  tc.batches_per_epoch = resolve(o_bpe, bpe, section, "batches_per_epoch", std::size_t{0});
  tc.patience = resolve(o_patience, patience, section, "patience", std::size_t{10});
  tc.d_steps_per_g_step = resolve(o_dsteps, dsteps, section, "d_steps_per_g_step", std::size_t{1});
  return tc;
}

json train_config_to_json(const adapt::train_config& tc) {
  return {{"epochs", tc.epochs},
          {"batch_size", tc.batch_size},
          {"lr", tc.lr},
          {"seed", tc.seed},
          {"batches_per_epoch", tc.batches_per_epoch},
          {"patience", tc.patience},
          {"d_steps_per_g_step", tc.d_steps_per_g_step}};
}

adapt::sample_range pick_range(const std::string& name, const features::window_dataset& ds) {
  if (name == "train") return {0, ds.train_end};
  if (name == "val") return {ds.train_end, ds.val_end};
  if (name == "test") return {ds.val_end, ds.features.n_samples};
  if (name == "all") return {0, ds.features.n_samples};
  throw error("ConfigInvalid", "unknown range: " + name);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FADACS parking occupancy pipeline"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  if (const char* env = std::getenv("FADACS_CONFIG")) config_path = env;
  app.add_option("--config", config_path, "JSON config file (flags override it)");

  // ---- synth ----
  auto* sc_synth = app.add_subcommand("synth", "generate the synthetic two-city benchmark");
  std::string sy_out, sy_domain = "both";
  std::uint64_t sy_seed = 7;
  int sy_lots = 20, sy_slots = 10, sy_days = 7, sy_interval = 5, sy_poi_src = 3, sy_poi_tgt = 3,
      sy_lag = 6;
  double sy_shift = 0, sy_spatial = 0.5, sy_noise = 0.05;
  bool sy_events = false, sy_inject = false;
  sc_synth->add_option("--out", sy_out, "output directory")->required();
  auto* o_sy_seed = sc_synth->add_option("--seed", sy_seed);
  auto* o_sy_lots = sc_synth->add_option("--n-lots", sy_lots);
  auto* o_sy_slots = sc_synth->add_option("--slots-per-lot", sy_slots);
  auto* o_sy_days = sc_synth->add_option("--days", sy_days);
  auto* o_sy_interval = sc_synth->add_option("--interval", sy_interval);
  auto* o_sy_shift = sc_synth->add_option("--shift", sy_shift);
  auto* o_sy_spatial = sc_synth->add_option("--spatial-corr", sy_spatial);
  auto* o_sy_noise = sc_synth->add_option("--noise-std", sy_noise);
  auto* o_sy_psrc = sc_synth->add_option("--poi-density-source", sy_poi_src);
  auto* o_sy_ptgt = sc_synth->add_option("--poi-density-target", sy_poi_tgt);
  auto* o_sy_lag = sc_synth->add_option("--spatial-lag-steps", sy_lag);
  auto* o_sy_events = sc_synth->add_flag("--events", sy_events, "emit raw event logs");
  auto* o_sy_inject = sc_synth->add_flag("--inject-anomalies", sy_inject);
  sc_synth->add_option("--domain", sy_domain, "source|target|both");

  // ---- ingest ----
  auto* sc_ingest = app.add_subcommand("ingest", "parse and clean raw sensor event files");
  std::string in_schema = "rye", in_events, in_locations, in_polygons, in_out;
  sc_ingest->add_option("--schema", in_schema, "melbourne|rye")->required();
  sc_ingest->add_option("--events", in_events)->required();
  sc_ingest->add_option("--locations", in_locations);
  sc_ingest->add_option("--polygons", in_polygons);
  sc_ingest->add_option("--out", in_out)->required();

  // ---- cluster ----
  auto* sc_cluster = app.add_subcommand("cluster", "group slots into parking lots");
  std::string cl_slots, cl_out, cl_mode = "melbourne", cl_region, cl_overrides;
  double cl_threshold = -1;
  sc_cluster->add_option("--slots", cl_slots)->required();
  sc_cluster->add_option("--out", cl_out)->required();
  sc_cluster->add_option("--mode", cl_mode, "melbourne|rye");
  auto* o_cl_thresh = sc_cluster->add_option("--threshold", cl_threshold, "meters");
  sc_cluster->add_option("--threshold-region", cl_region,
                         "comma-separated slot keys that define the threshold area");
  sc_cluster->add_option("--rule-overrides", cl_overrides, "CSV slot_key,rule");

  // ---- featurize ----
  auto* sc_feat = app.add_subcommand("featurize", "build model-ready window tensors");
  std::string ft_grid, ft_events, ft_lots, ft_pois, ft_hours, ft_weather, ft_out, ft_norm_from,
      ft_span_start, ft_span_end, ft_dom_mode = "day_of_month";
  int ft_interval = 5, ft_horizon = 1;
  std::size_t ft_lookback = 6;
  double ft_train_frac = 0.7, ft_val_frac = 0.15;
  sc_feat->add_option("--grid", ft_grid, "occupancy grid CSV (skips event slicing)");
  sc_feat->add_option("--events", ft_events, "clean events CSV");
  sc_feat->add_option("--lots", ft_lots)->required();
  sc_feat->add_option("--pois", ft_pois)->required();
  sc_feat->add_option("--hours", ft_hours, "opening hours CSV");
  sc_feat->add_option("--weather", ft_weather)->required();
  sc_feat->add_option("--out", ft_out)->required();
  auto* o_ft_interval = sc_feat->add_option("--interval", ft_interval, "minutes, 1 or 5");
  auto* o_ft_lookback = sc_feat->add_option("--lookback", ft_lookback);
  auto* o_ft_horizon = sc_feat->add_option("--horizon", ft_horizon, "steps ahead");
  auto* o_ft_train = sc_feat->add_option("--train-frac", ft_train_frac);
  auto* o_ft_val = sc_feat->add_option("--val-frac", ft_val_frac);
  auto* o_ft_dom = sc_feat->add_option("--dom-mode", ft_dom_mode, "day_of_month|month_of_year");
  sc_feat->add_option("--norm-from", ft_norm_from,
                      "bundle dir whose normalization stats are reused verbatim");
  sc_feat->add_option("--span-start", ft_span_start, "YYYY-MM-DD HH:MM");
  sc_feat->add_option("--span-end", ft_span_end);

  // ---- screen ----
  auto* sc_screen = app.add_subcommand("screen", "per-feature correlation / F-test table");
  std::string scr_grid, scr_events, scr_lots, scr_pois, scr_hours, scr_weather, scr_out,
      scr_dom_mode = "day_of_month";
  int scr_interval = 5;
  sc_screen->add_option("--grid", scr_grid);
  sc_screen->add_option("--events", scr_events);
  sc_screen->add_option("--lots", scr_lots)->required();
  sc_screen->add_option("--pois", scr_pois)->required();
  sc_screen->add_option("--hours", scr_hours);
  sc_screen->add_option("--weather", scr_weather)->required();
  sc_screen->add_option("--out", scr_out)->required();
  sc_screen->add_option("--interval", scr_interval);
  sc_screen->add_option("--dom-mode", scr_dom_mode);

  // ---- train ----
  auto* sc_train = app.add_subcommand("train", "fit an encoder+regressor on a bundle");
  std::string tr_data, tr_out, tr_model = "convlstm", tr_init_from;
  std::size_t tr_epochs = 30, tr_batch = 32, tr_bpe = 0, tr_patience = 10, tr_hidden = 200,
              tr_code = 60, tr_kernel = 3, tr_dhidden = 100;
  double tr_lr = 1e-3;
  std::uint64_t tr_seed = 1;
  bool tr_single_cell = false;
  sc_train->add_option("--data", tr_data)->required();
  sc_train->add_option("--out", tr_out)->required();
  auto* o_tr_model = sc_train->add_option("--model", tr_model, "mlp|lstm|convlstm");
  sc_train->add_option("--init-from", tr_init_from,
                       "model dir for parameter-transfer fine-tuning");
  auto* o_tr_epochs = sc_train->add_option("--epochs", tr_epochs);
  auto* o_tr_batch = sc_train->add_option("--batch", tr_batch);
  auto* o_tr_lr = sc_train->add_option("--lr", tr_lr);
  auto* o_tr_seed = sc_train->add_option("--seed", tr_seed);
  auto* o_tr_bpe = sc_train->add_option("--batches-per-epoch", tr_bpe);
  auto* o_tr_patience = sc_train->add_option("--patience", tr_patience);
  auto* o_tr_hidden = sc_train->add_option("--hidden", tr_hidden);
  auto* o_tr_code = sc_train->add_option("--code-channels", tr_code);
  auto* o_tr_kernel = sc_train->add_option("--kernel", tr_kernel);
  auto* o_tr_dhidden = sc_train->add_option("--disc-hidden", tr_dhidden);
  sc_train->add_flag("--single-cell", tr_single_cell, "ConvLSTM without the 1x1 projection");

  // ---- adapt ----
  auto* sc_adapt = app.add_subcommand("adapt", "adversarially adapt a target encoder");
  std::string ad_source_data, ad_target_data, ad_source_model, ad_out, ad_head = "two_logit";
  std::size_t ad_epochs = 10, ad_batch = 16, ad_bpe = 0, ad_patience = 10, ad_dsteps = 1;
  double ad_lr = 1e-3;
  std::uint64_t ad_seed = 1;
  sc_adapt->add_option("--source-data", ad_source_data)->required();
  sc_adapt->add_option("--target-data", ad_target_data)->required();
  sc_adapt->add_option("--source-model", ad_source_model)->required();
  sc_adapt->add_option("--out", ad_out)->required();
  auto* o_ad_epochs = sc_adapt->add_option("--epochs", ad_epochs);
  auto* o_ad_batch = sc_adapt->add_option("--batch", ad_batch);
  auto* o_ad_lr = sc_adapt->add_option("--lr", ad_lr);
  auto* o_ad_seed = sc_adapt->add_option("--seed", ad_seed);
  auto* o_ad_bpe = sc_adapt->add_option("--batches-per-epoch", ad_bpe);
  auto* o_ad_patience = sc_adapt->add_option("--patience", ad_patience);
  auto* o_ad_dsteps = sc_adapt->add_option("--d-steps", ad_dsteps);
  sc_adapt->add_option("--head", ad_head, "two_logit|one_logit");

  // ---- evaluate ----
  auto* sc_eval = app.add_subcommand("evaluate", "score models on a bundle range");
  std::string ev_data, ev_out, ev_range = "test";
  std::vector<std::string> ev_models;  // name=model_dir
  bool ev_ha = false;
  sc_eval->add_option("--data", ev_data)->required();
  sc_eval->add_option("--out", ev_out)->required();
  sc_eval->add_option("--model", ev_models, "name=model_dir (repeatable)");
  sc_eval->add_flag("--ha", ev_ha, "include the historical-average baseline row");
  sc_eval->add_option("--range", ev_range, "train|val|test|all");

  // ---- report ----
  auto* sc_report = app.add_subcommand("report", "merge evaluation reports into one table");
  std::vector<std::string> rp_inputs;
  std::string rp_out;
  sc_report->add_option("--in", rp_inputs, "report.json files")->required();
  sc_report->add_option("--out", rp_out, "output path stem")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "ConfigInvalid"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }

  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path, std::ios::binary);
      if (!in) throw error("InputMissing", "config file " + config_path);
      std::ostringstream ss;
      ss << in.rdbuf();
      try {
        g_config = json::parse(ss.str());
      } catch (const json::exception& e) {
        throw error("ConfigInvalid", e.what());
      }
      if (!g_config.is_object()) throw error("ConfigInvalid", "config root must be an object");
    } else {
      g_config = json::object();
    }

    // ---------------- synth ----------------
    if (sc_synth->parsed()) {
      timer t;
      json section = config_section("synth");
      synth::synth_config cfg;
      cfg.seed = resolve(o_sy_seed, sy_seed, section, "seed", std::uint64_t{7});
      cfg.n_lots = resolve(o_sy_lots, sy_lots, section, "n_lots", 20);
      cfg.slots_per_lot = resolve(o_sy_slots, sy_slots, section, "slots_per_lot", 10);
      cfg.days = resolve(o_sy_days, sy_days, section, "days", 7);
      cfg.interval_min = resolve(o_sy_interval, sy_interval, section, "interval_min", 5);
      cfg.shift = resolve(o_sy_shift, sy_shift, section, "shift", 0.0);
      cfg.spatial_corr = resolve(o_sy_spatial, sy_spatial, section, "spatial_corr", 0.5);
      cfg.noise_std = resolve(o_sy_noise, sy_noise, section, "noise_std", 0.05);
      cfg.poi_density_source = resolve(o_sy_psrc, sy_poi_src, section, "poi_density_source", 3);
      cfg.poi_density_target = resolve(o_sy_ptgt, sy_poi_tgt, section, "poi_density_target", 3);
      cfg.spatial_lag_steps = resolve(o_sy_lag, sy_lag, section, "spatial_lag_steps", 6);
      cfg.events_mode = resolve(o_sy_events, sy_events, section, "events_mode", false);
      cfg.inject_anomalies = resolve(o_sy_inject, sy_inject, section, "inject_anomalies", false);
      cfg.validate();

      std::vector<synth::domain> domains;
      if (sy_domain == "both") domains = {synth::domain::source, synth::domain::target};
      else if (sy_domain == "source") domains = {synth::domain::source};
      else if (sy_domain == "target") domains = {synth::domain::target};
      else throw error("ConfigInvalid", "--domain must be source|target|both");

      manifest::run_manifest man;
      man.subcommand = "synth";
      man.tool_version = kVersion;
      man.seed = cfg.seed;
      json resolved{{"seed", cfg.seed},
                    {"n_lots", cfg.n_lots},
                    {"slots_per_lot", cfg.slots_per_lot},
                    {"days", cfg.days},
                    {"interval_min", cfg.interval_min},
                    {"shift", cfg.shift},
                    {"spatial_corr", cfg.spatial_corr},
                    {"noise_std", cfg.noise_std},
                    {"poi_density_source", cfg.poi_density_source},
                    {"poi_density_target", cfg.poi_density_target},
                    {"spatial_lag_steps", cfg.spatial_lag_steps},
                    {"events_mode", cfg.events_mode},
                    {"inject_anomalies", cfg.inject_anomalies},
                    {"domains", sy_domain}};
      man.config = resolved;
      man.config_hash = config_hash_of(resolved);
      man.decisions = {{"prng", "splitmix64"},
                       {"observation_shift", "orthogonal weather mixing, cos(pi*shift)"}};
      for (auto which : domains) {
        auto d = synth::generate_domain(cfg, which);
        std::string sub = std::string(sy_out) + "/" + synth::to_string(which);
        synth::write_domain(sub, cfg, d);
        for (const auto& name :
             {"slots.csv", "lots.csv", "pois.csv", "opening_hours.csv", "weather.csv",
              "truth_grid.csv"})
          man.output_digests[std::string(synth::to_string(which)) + "/" + name] =
              manifest::file_digest(sub + "/" + name);
        if (cfg.events_mode)
          man.output_digests[std::string(synth::to_string(which)) + "/events.csv"] =
              manifest::file_digest(sub + "/events.csv");
      }
      man.elapsed_seconds = t.elapsed();
      man.write(std::string(sy_out) + "/manifest.json");
      return 0;
    }

    // ---------------- ingest ----------------
    if (sc_ingest->parsed()) {
      timer t;
      require_input(in_events, "--events");
      fs::create_directories(in_out);
      ingest::event_schema schema;
      if (in_schema == "melbourne") schema = ingest::event_schema::melbourne_v1;
      else if (in_schema == "rye") schema = ingest::event_schema::rye_v1;
      else throw error("ConfigInvalid", "--schema must be melbourne|rye");

      auto parsed = ingest::parse_events(in_events, schema);
      json warnings = json::array();
      for (const auto& b : parsed.bad_rows)
        warnings.push_back({{"line", b.line_no}, {"field", b.field}, {"reason", b.reason}});

      std::vector<ingest::parking_event> events = std::move(parsed.events);
      if (!in_locations.empty() || !in_polygons.empty()) {
        ingest::location_table locs;
        ingest::polygon_table polys;
        if (!in_locations.empty()) locs = ingest::read_locations(in_locations);
        if (!in_polygons.empty()) polys = ingest::read_polygons(in_polygons);
        auto joined = ingest::join_locations(std::move(events), locs, polys);
        events = std::move(joined.events);
        for (const auto& w : joined.warnings)
          warnings.push_back({{"code", w.code}, {"slot_key", w.slot_key}});
      }
      auto filtered = ingest::filter_anomalies(events);
      ingest::write_events_csv(in_out + "/clean_events.csv", filtered.kept);
      ingest::write_rejections_csv(in_out + "/rejected.csv", filtered.rejected);
      {
        std::ofstream wout(in_out + "/warnings.json", std::ios::binary);
        wout << warnings.dump(2) << '\n';
      }
      std::map<std::string, std::size_t> by_reason;
      for (const auto& r : filtered.rejected) by_reason[ingest::to_string(r.reason)] += 1;

      manifest::run_manifest man;
      man.subcommand = "ingest";
      man.tool_version = kVersion;
      json resolved{{"schema", in_schema}};
      man.config = resolved;
      man.config_hash = config_hash_of(resolved);
      man.input_digests["events"] = manifest::file_digest(in_events);
      if (!in_locations.empty())
        man.input_digests["locations"] = manifest::file_digest(in_locations);
      if (!in_polygons.empty()) man.input_digests["polygons"] = manifest::file_digest(in_polygons);
      man.output_digests["clean_events.csv"] = manifest::file_digest(in_out + "/clean_events.csv");
      man.output_digests["rejected.csv"] = manifest::file_digest(in_out + "/rejected.csv");
      man.decisions = {{"kept", filtered.kept.size()},
                       {"rejected", filtered.rejected.size()},
                       {"rejected_by_reason", by_reason},
                       {"unparsable_rows", parsed.bad_rows.size()}};
      man.elapsed_seconds = t.elapsed();
      man.write(in_out + "/manifest.json");
      return 0;
    }

    // ---------------- cluster ----------------
    if (sc_cluster->parsed()) {
      timer t;
      require_input(cl_slots, "--slots");
      fs::create_directories(cl_out);
      auto slots = spatial::read_slots_csv(cl_slots);
      if (!cl_overrides.empty()) {
        auto table = csv::read_file(cl_overrides);
        std::size_t ck = table.require_column("slot_key");
        std::size_t cr = table.require_column("rule");
        std::vector<std::pair<std::string, std::string>> overrides;
        for (const auto& row : table.rows)
          overrides.emplace_back(csv::trim(row[ck]), csv::trim(row[cr]));
        spatial::apply_rule_overrides(slots, overrides);
      }

      double threshold = cl_threshold;
      std::string threshold_source = "flag";
      if (o_cl_thresh->count() == 0) {
        std::set<std::string> region;
        if (!cl_region.empty()) {
          std::stringstream ss(cl_region);
          std::string key;
          while (std::getline(ss, key, ',')) region.insert(csv::trim(key));
        }
        threshold = spatial::connection_threshold_m(slots, region);
        threshold_source = cl_region.empty() ? "all-connected-edges" : "region";
      }

      std::vector<spatial::parking_lot> lots;
      if (cl_mode == "melbourne") lots = spatial::cluster_slots(slots, threshold);
      else if (cl_mode == "rye") lots = spatial::cluster_by_sector(slots, threshold);
      else throw error("ConfigInvalid", "--mode must be melbourne|rye");

      spatial::write_lots_csv(cl_out + "/lots.csv", lots);
      {
        std::ofstream jout(cl_out + "/lots.json", std::ios::binary);
        jout << spatial::lots_to_json(lots) << '\n';
      }

      manifest::run_manifest man;
      man.subcommand = "cluster";
      man.tool_version = kVersion;
      json resolved{{"mode", cl_mode}, {"threshold_m", threshold},
                    {"threshold_source", threshold_source}, {"region", cl_region}};
      man.config = resolved;
      man.config_hash = config_hash_of(resolved);
      man.input_digests["slots"] = manifest::file_digest(cl_slots);
      man.output_digests["lots.csv"] = manifest::file_digest(cl_out + "/lots.csv");
      man.decisions = {{"n_slots", slots.size()}, {"n_lots", lots.size()},
                       {"threshold_m", threshold}};
      man.elapsed_seconds = t.elapsed();
      man.write(cl_out + "/manifest.json");
      return 0;
    }

    // ---------------- featurize ----------------
    if (sc_feat->parsed()) {
      timer t;
      json section = config_section("featurize");
      int interval = resolve(o_ft_interval, ft_interval, section, "interval_min", 5);
      std::size_t lookback = resolve(o_ft_lookback, ft_lookback, section, "lookback",
                                     std::size_t{6});
      int horizon = resolve(o_ft_horizon, ft_horizon, section, "horizon", 1);
      double train_frac = resolve(o_ft_train, ft_train_frac, section, "train_frac", 0.7);
      double val_frac = resolve(o_ft_val, ft_val_frac, section, "val_frac", 0.15);
      std::string dom_mode = resolve(o_ft_dom, ft_dom_mode, section, "dom_mode",
                                     std::string("day_of_month"));

      auto ci = load_context_inputs(ft_grid, ft_events, ft_lots, ft_pois, ft_hours, ft_weather,
                                    interval, ft_span_start, ft_span_end);
      features::context_config ccfg;
      ccfg.dom_mode = dom_mode == "month_of_year" ? features::day_of_month_mode::month_of_year
                                                  : features::day_of_month_mode::day_of_month;
      auto context = features::build_context(ci.grid, ci.lots, ci.pois, ci.weather, ccfg);
      auto ds = features::assemble_windows(ci.grid, context, ci.lots, lookback, horizon,
                                           train_frac, val_frac);
      std::vector<std::pair<double, double>> stats;
      std::string norm_source = "fit-on-train";
      if (!ft_norm_from.empty()) {
        bundle src = read_bundle(ft_norm_from);
        stats = src.data.features.norm_min_max;
        norm_source = ft_norm_from;
      } else {
        stats = features::fit_normalization(ds.features, std::max<std::size_t>(1, ds.train_end));
      }
      features::apply_normalization(ds.features, stats);

      json extra{{"interval_min", interval},
                 {"dom_mode", dom_mode},
                 {"normalization_source", norm_source},
                 {"spatial_ordering", "morton"}};
      write_bundle(ft_out, ds, ci.grid, extra);

      manifest::run_manifest man;
      man.subcommand = "featurize";
      man.tool_version = kVersion;
      json resolved{{"interval_min", interval}, {"lookback", lookback}, {"horizon", horizon},
                    {"train_frac", train_frac}, {"val_frac", val_frac}, {"dom_mode", dom_mode},
                    {"norm_from", ft_norm_from}};
      man.config = resolved;
      man.config_hash = config_hash_of(resolved);
      for (const auto& [label, path] :
           std::vector<std::pair<std::string, std::string>>{{"lots", ft_lots},
                                                            {"pois", ft_pois},
                                                            {"weather", ft_weather}})
        man.input_digests[label] = manifest::file_digest(path);
      if (!ft_grid.empty()) man.input_digests["grid"] = manifest::file_digest(ft_grid);
      if (!ft_events.empty()) man.input_digests["events"] = manifest::file_digest(ft_events);
      if (!ft_hours.empty()) man.input_digests["hours"] = manifest::file_digest(ft_hours);
      man.output_digests["features.bin"] = manifest::file_digest(ft_out + "/features.bin");
      man.output_digests["targets.bin"] = manifest::file_digest(ft_out + "/targets.bin");
      man.decisions = {{"channel_names", ds.features.channel_names},
                       {"spatial_ordering", "morton"},
                       {"train_end", ds.train_end},
                       {"val_end", ds.val_end},
                       {"normalization_source", norm_source}};
      man.elapsed_seconds = t.elapsed();
      man.write(ft_out + "/manifest.json");
      return 0;
    }

    // ---------------- screen ----------------
    if (sc_screen->parsed()) {
      timer t;
      auto ci = load_context_inputs(scr_grid, scr_events, scr_lots, scr_pois, scr_hours,
                                    scr_weather, scr_interval, "", "");
      features::context_config ccfg;
      ccfg.dom_mode = scr_dom_mode == "month_of_year"
                          ? features::day_of_month_mode::month_of_year
                          : features::day_of_month_mode::day_of_month;
      auto context = features::build_context(ci.grid, ci.lots, ci.pois, ci.weather, ccfg);

      // occupancy channel is the response; every other channel is screened
      std::vector<double> occupancy;
      const std::size_t cells = context.n_lots * context.n_steps;
      occupancy.reserve(cells);
      for (std::size_t l = 0; l < context.n_lots; ++l)
        for (std::size_t s = 0; s < context.n_steps; ++s) occupancy.push_back(context.at(0, l, s));
      std::vector<std::string> names;
      std::vector<std::vector<double>> columns;
      for (std::size_t c = 1; c < context.channel_names.size(); ++c) {
        names.push_back(context.channel_names[c]);
        std::vector<double> col;
        col.reserve(cells);
        for (std::size_t l = 0; l < context.n_lots; ++l)
          for (std::size_t s = 0; s < context.n_steps; ++s) col.push_back(context.at(c, l, s));
        columns.push_back(std::move(col));
      }
      auto rows = stats::feature_screen(names, columns, occupancy);
      fs::create_directories(scr_out);
      stats::write_screen_csv(scr_out + "/screen.csv", rows);
      {
        std::ofstream jout(scr_out + "/screen.json", std::ios::binary);
        jout << stats::screen_to_json(rows) << '\n';
      }
      manifest::run_manifest man;
      man.subcommand = "screen";
      man.tool_version = kVersion;
      json resolved{{"interval_min", scr_interval}, {"dom_mode", scr_dom_mode}};
      man.config = resolved;
      man.config_hash = config_hash_of(resolved);
      man.output_digests["screen.csv"] = manifest::file_digest(scr_out + "/screen.csv");
      man.decisions = {{"anova_method", "simple-linear-regression F-test, df1=1"},
                       {"dom_mode", scr_dom_mode}};
      man.elapsed_seconds = t.elapsed();
      man.write(scr_out + "/manifest.json");
      return 0;
    }

    // ---------------- train ----------------
    if (sc_train->parsed()) {
      timer t;
      json section = config_section("train");
      bundle b = read_bundle(tr_data);
      adapt::train_config tc =
          train_config_from(section, o_tr_epochs, tr_epochs, o_tr_batch, tr_batch, o_tr_lr, tr_lr,
                            o_tr_seed, tr_seed, o_tr_bpe, tr_bpe, o_tr_patience, tr_patience,
                            nullptr, 1);

      adapt::model m;
      if (!tr_init_from.empty()) {
        m = load_model(tr_init_from);
        if (m.cfg.n_lots != b.data.features.n_lots)
          throw error("ShapeMismatch", "initial model lot axis does not match data");
      } else {
        adapt::model_config mc;
        mc.kind = adapt::encoder_kind_from_string(
            resolve(o_tr_model, tr_model, section, "model", std::string("convlstm")));
        mc.in_channels = b.data.features.n_channels;
        mc.lookback = b.data.features.lookback;
        mc.n_lots = b.data.features.n_lots;
        mc.hidden = resolve(o_tr_hidden, tr_hidden, section, "hidden", std::size_t{200});
        mc.code_channels = resolve(o_tr_code, tr_code, section, "code_channels", std::size_t{60});
        mc.kernel = resolve(o_tr_kernel, tr_kernel, section, "kernel", std::size_t{3});
        mc.disc_hidden = resolve(o_tr_dhidden, tr_dhidden, section, "disc_hidden",
                                 std::size_t{100});
        mc.single_cell = tr_single_cell;
        m = adapt::build_model(mc, tc.seed);
      }

      auto curves = tr_init_from.empty() ? adapt::baseline_train(m, b.data, tc)
                                         : adapt::parameter_transfer(m, b.data, tc);

      json resolved = train_config_to_json(tc);
      resolved["model"] = model_config_to_json(m.cfg);
      resolved["init_from"] = tr_init_from;
      json meta{{"seed", tc.seed}, {"config_hash", config_hash_of(resolved)}};
      save_model(tr_out, m, meta);
      adapt::write_curves_csv(tr_out + "/curves.csv", curves);

      manifest::run_manifest man;
      man.subcommand = "train";
      man.tool_version = kVersion;
      man.config = resolved;
      man.config_hash = config_hash_of(resolved);
      man.seed = tc.seed;
      man.input_digests["features.bin"] = manifest::file_digest(tr_data + "/features.bin");
      man.output_digests["model.ckpt"] = manifest::file_digest(tr_out + "/model.ckpt");
      man.decisions = {{"best_epoch", curves.best_epoch},
                       {"epochs_run", curves.epochs.size()}};
      man.elapsed_seconds = t.elapsed();
      man.write(tr_out + "/manifest.json");
      return 0;
    }

    // ---------------- adapt ----------------
    if (sc_adapt->parsed()) {
      timer t;
      json section = config_section("adapt");
      bundle src = read_bundle(ad_source_data);
      bundle tgt = read_bundle(ad_target_data);
      adapt::model source_model = load_model(ad_source_model);
      if (ad_head == "one_logit")
        source_model.cfg.head = adapt::discriminator_head::one_logit_sigmoid;
      adapt::train_config tc =
          train_config_from(section, o_ad_epochs, ad_epochs, o_ad_batch, ad_batch, o_ad_lr, ad_lr,
                            o_ad_seed, ad_seed, o_ad_bpe, ad_bpe, o_ad_patience, ad_patience,
                            o_ad_dsteps, ad_dsteps);

      std::string frozen_before = manifest::file_digest(ad_source_model + "/model.ckpt");
      auto result = adapt::adversarial_adapt(source_model, src.data, tgt.data, tc);
      std::string frozen_after = manifest::file_digest(ad_source_model + "/model.ckpt");
      if (frozen_before != frozen_after)
        throw error("Internal", "source checkpoint changed during adaptation");

      // stage 3 assembly: adapted target encoder + the source regressor F
      adapt::model assembled;
      assembled.cfg = source_model.cfg;
      assembled.enc = std::move(result.target_encoder);
      assembled.regressor = source_model.regressor;

      json resolved = train_config_to_json(tc);
      resolved["head"] = ad_head;
      json meta{{"seed", tc.seed},
                {"config_hash", config_hash_of(resolved)},
                {"stage", "adapted"}};
      save_model(ad_out, assembled, meta);
      {
        auto d_params = result.discriminator.params("discriminator.");
        fs::create_directories(ad_out);
        neural::save_checkpoint(ad_out + "/discriminator.ckpt", d_params, meta.dump());
      }
      adapt::write_curves_csv(ad_out + "/curves.csv", result.curves);

      manifest::run_manifest man;
      man.subcommand = "adapt";
      man.tool_version = kVersion;
      man.config = resolved;
      man.config_hash = config_hash_of(resolved);
      man.seed = tc.seed;
      man.input_digests["source_model"] = frozen_before;
      man.input_digests["source_features"] =
          manifest::file_digest(ad_source_data + "/features.bin");
      man.input_digests["target_features"] =
          manifest::file_digest(ad_target_data + "/features.bin");
      man.output_digests["model.ckpt"] = manifest::file_digest(ad_out + "/model.ckpt");
      man.decisions = {{"source_frozen", frozen_before == frozen_after},
                       {"mode_collapse_warning", result.curves.mode_collapse_warning},
                       {"head", ad_head}};
      man.elapsed_seconds = t.elapsed();
      man.write(ad_out + "/manifest.json");
      return 0;
    }

    // ---------------- evaluate ----------------
    if (sc_eval->parsed()) {
      timer t;
      bundle b = read_bundle(ev_data);
      adapt::sample_range range = pick_range(ev_range, b.data);
      if (range.size() == 0) throw error("EmptyBatch", "evaluation range has no samples");
      const std::size_t L = b.data.features.n_lots;
      const int horizon = b.data.targets.horizon;
      const int horizon_minutes = horizon * b.grid.interval_min;

      std::vector<double> truths;
      truths.reserve(range.size() * L);
      for (std::size_t s = range.begin; s < range.end; ++s)
        for (std::size_t l = 0; l < L; ++l) truths.push_back(b.data.targets.at(s, l));

      eval::report rep;
      std::vector<eval::lot_errors> per_lot;

      if (ev_ha) {
        eval::report_row row;
        row.model = "ha";
        try {
          std::size_t lookback = b.data.features.lookback;
          std::size_t first_eval_target =
              range.begin + lookback - 1 + static_cast<std::size_t>(horizon);
          adapt::ha_model ha(b.grid, first_eval_target);
          std::vector<double> preds;
          preds.reserve(range.size() * L);
          for (std::size_t s = range.begin; s < range.end; ++s) {
            minute_t target_time =
                b.data.sample_times[s] +
                static_cast<minute_t>((lookback - 1 + static_cast<std::size_t>(horizon)) *
                                      static_cast<std::size_t>(b.grid.interval_min));
            for (std::size_t l = 0; l < L; ++l)
              preds.push_back(ha.predict(b.data.lot_order[l], target_time));
          }
          auto batch = eval::make_batch(range.size(), L, preds, truths, horizon_minutes);
          row.by_horizon[horizon_minutes] = {eval::mae(batch), eval::rmse(batch)};
        } catch (const error& e) {
          row.error = e.code();
        }
        rep.rows.push_back(std::move(row));
      }

      for (const auto& spec : ev_models) {
        auto eq = spec.find('=');
        if (eq == std::string::npos)
          throw error("ConfigInvalid", "--model expects name=model_dir, got " + spec);
        eval::report_row row;
        row.model = spec.substr(0, eq);
        try {
          adapt::model m = load_model(spec.substr(eq + 1));
          if (m.cfg.n_lots != L) throw error("ShapeMismatch", "model lot axis");
          auto preds = adapt::model_predict_range(m, b.data.features, range);
          auto batch = eval::make_batch(range.size(), L, preds, truths, horizon_minutes);
          row.by_horizon[horizon_minutes] = {eval::mae(batch), eval::rmse(batch)};
          if (per_lot.empty()) {
            std::vector<int> ids = b.data.lot_order;
            per_lot = eval::per_lot_errors(batch, ids);
          }
        } catch (const error& e) {
          row.error = e.code();
        }
        rep.rows.push_back(std::move(row));
      }

      fs::create_directories(ev_out);
      eval::write_report_json(ev_out + "/report.json", rep);
      eval::write_report_csv(ev_out + "/report.csv", rep);
      if (!per_lot.empty()) eval::write_per_lot_csv(ev_out + "/per_lot.csv", per_lot);

      manifest::run_manifest man;
      man.subcommand = "evaluate";
      man.tool_version = kVersion;
      json resolved{{"range", ev_range}, {"models", ev_models}, {"ha", ev_ha}};
      man.config = resolved;
      man.config_hash = config_hash_of(resolved);
      man.input_digests["features.bin"] = manifest::file_digest(ev_data + "/features.bin");
      man.output_digests["report.json"] = manifest::file_digest(ev_out + "/report.json");
      man.decisions = {{"horizon_minutes", horizon_minutes}, {"n_samples", range.size()}};
      man.elapsed_seconds = t.elapsed();
      man.write(ev_out + "/manifest.json");
      return 0;
    }

    // ---------------- report ----------------
    if (sc_report->parsed()) {
      std::vector<eval::report> parts;
      for (const auto& path : rp_inputs) {
        require_input(path, "--in");
        parts.push_back(eval::read_report_json(path));
      }
      eval::report merged = eval::merge_reports(parts);
      eval::write_report_json(rp_out + ".json", merged);
      eval::write_report_csv(rp_out + ".csv", merged);
      return 0;
    }

    throw error("ConfigInvalid", "no subcommand given");
  } catch (const error& e) {
    std::cerr << json{{"error", e.code()}, {"message", e.what()}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
}
