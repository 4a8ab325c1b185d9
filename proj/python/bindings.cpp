// _fadacs: python bindings over the pipeline's main operations.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fadacs/adapt.hpp"
#include "fadacs/eval.hpp"
#include "fadacs/features.hpp"
#include "fadacs/spatial.hpp"
#include "fadacs/stats.hpp"
#include "fadacs/synth.hpp"
#include "fadacs/timeutil.hpp"

namespace py = pybind11;
using namespace fadacs;

namespace {

eval::evaluation_batch batch_from(const std::vector<std::vector<double>>& pred,
                                  const std::vector<std::vector<double>>& truth,
                                  int horizon_minutes) {
  std::size_t t = pred.size();
  std::size_t l = t ? pred[0].size() : 0;
  std::vector<double> p, y;
  for (const auto& row : pred) {
    if (row.size() != l) throw error("ShapeMismatch", "ragged prediction matrix");
    p.insert(p.end(), row.begin(), row.end());
  }
  for (const auto& row : truth) {
    if (row.size() != l) throw error("ShapeMismatch", "ragged truth matrix");
    y.insert(y.end(), row.begin(), row.end());
  }
  return eval::make_batch(t, l, std::move(p), std::move(y), horizon_minutes);
}

}  // namespace

PYBIND11_MODULE(_fadacs, m) {
  m.doc() = "FADACS parking-occupancy pipeline: core operations";
  m.attr("__version__") = "1.0.0";

  py::register_exception<error>(m, "FadacsError");

  m.def(
      "haversine_m",
      [](double lon1, double lat1, double lon2, double lat2) {
        return spatial::haversine_m({lon1, lat1}, {lon2, lat2});
      },
      py::arg("lon1"), py::arg("lat1"), py::arg("lon2"), py::arg("lat2"),
      "Great-circle distance in meters (Earth radius 6,371,000 m)");

  m.def("normalize_rule", &spatial::normalize_rule, py::arg("rule"));

  m.def(
      "cluster_slots",
      [](const std::vector<std::tuple<std::string, double, double, std::string>>& slots,
         double threshold_m) {
        std::vector<spatial::slot_geometry> sg;
        sg.reserve(slots.size());
        for (const auto& [key, lon, lat, rule] : slots)
          sg.push_back({key, {lon, lat}, std::nullopt, rule, std::nullopt});
        auto lots = spatial::cluster_slots(sg, threshold_m);
        std::vector<std::tuple<int, std::string, std::vector<std::string>>> out;
        out.reserve(lots.size());
        for (const auto& lot : lots) out.emplace_back(lot.lot_id, lot.rule, lot.slot_keys);
        return out;
      },
      py::arg("slots"), py::arg("threshold_m"),
      "Cluster (key, lon, lat, rule) slots; returns (lot_id, rule, slot_keys) tuples");

  m.def("connection_threshold_m",
        [](const std::vector<double>& edge_distances) {
          if (edge_distances.size() < 2) throw error("InsufficientEdges", "need >= 2 edges");
          double mean = 0;
          for (double d : edge_distances) mean += d;
          mean /= static_cast<double>(edge_distances.size());
          double var = 0;
          for (double d : edge_distances) var += (d - mean) * (d - mean);
          var /= static_cast<double>(edge_distances.size());
          return mean + 1.5 * std::sqrt(var);
        },
        py::arg("edge_distances"), "mean + 1.5 * population std of connection distances");

  m.def("pearson",
        [](const std::vector<double>& x, const std::vector<double>& y) {
          return stats::pearson(x, y);
        },
        py::arg("x"), py::arg("y"));

  m.def("regression_f_test",
        [](const std::vector<double>& x, const std::vector<double>& y) {
          auto r = stats::regression_f_test(x, y);
          return py::make_tuple(r.f, r.p);
        },
        py::arg("x"), py::arg("y"), "simple-linear-regression F test, returns (F, p)");

  m.def("mae",
        [](const std::vector<std::vector<double>>& pred,
           const std::vector<std::vector<double>>& truth) {
          return eval::mae(batch_from(pred, truth, 5));
        },
        py::arg("predictions"), py::arg("truths"));

  m.def("rmse",
        [](const std::vector<std::vector<double>>& pred,
           const std::vector<std::vector<double>>& truth) {
          return eval::rmse(batch_from(pred, truth, 5));
        },
        py::arg("predictions"), py::arg("truths"));

  m.def("datetime_channels",
        [](const std::string& timestamp) {
          auto t = timeutil::parse_datetime(timestamp);
          if (!t) throw error("UnparsableRow", "bad timestamp: " + timestamp);
          auto v = features::datetime_channels(*t);
          return py::make_tuple(v.day_of_week, v.day_of_month, v.hour);
        },
        py::arg("timestamp"), "(day_of_week Monday=0, day_of_month, hour)");

  m.def(
      "generate_synthetic",
      [](std::uint64_t seed, int n_lots, int days, int interval_min, double shift,
         double spatial_corr, double noise_std, const std::string& which) {
        synth::synth_config cfg;
        cfg.seed = seed;
        cfg.n_lots = n_lots;
        cfg.days = days;
        cfg.interval_min = interval_min;
        cfg.shift = shift;
        cfg.spatial_corr = spatial_corr;
        cfg.noise_std = noise_std;
        auto d = synth::generate_domain(
            cfg, which == "target" ? synth::domain::target : synth::domain::source);
        py::dict out;
        std::vector<std::vector<double>> grid(d.grid.n_lots());
        for (std::size_t l = 0; l < d.grid.n_lots(); ++l) {
          grid[l].resize(d.grid.n_steps());
          for (std::size_t t = 0; t < d.grid.n_steps(); ++t) grid[l][t] = d.grid.at(l, t);
        }
        out["occupancy"] = grid;
        std::vector<double> humidity;
        humidity.reserve(d.weather.size());
        for (const auto& w : d.weather) humidity.push_back(w.humidity_pct);
        out["humidity"] = humidity;
        out["n_lots"] = d.grid.n_lots();
        out["n_steps"] = d.grid.n_steps();
        return out;
      },
      py::arg("seed"), py::arg("n_lots") = 10, py::arg("days") = 2, py::arg("interval_min") = 5,
      py::arg("shift") = 0.0, py::arg("spatial_corr") = 0.5, py::arg("noise_std") = 0.05,
      py::arg("domain") = "source",
      "Deterministic synthetic domain; returns occupancy matrix and humidity series");

  m.def("convlstm_demo_rmse",
        [](std::uint64_t seed) {
          // miniature end-to-end sanity: fit a tiny ConvLSTM on one synthetic day
          synth::synth_config cfg;
          cfg.seed = seed;
          cfg.n_lots = 4;
          cfg.days = 1;
          cfg.noise_std = 0.01;
          auto d = synth::generate_domain(cfg, synth::domain::source);
          auto ctx = features::build_context(d.grid, d.lots, d.pois, d.weather);
          auto ds = features::assemble_windows(d.grid, ctx, d.lots, 6, 1);
          auto stats_mm = features::fit_normalization(ds.features, ds.train_end);
          features::apply_normalization(ds.features, stats_mm);
          adapt::model_config mc;
          mc.in_channels = ds.features.n_channels;
          mc.n_lots = ds.features.n_lots;
          mc.hidden = 4;
          mc.code_channels = 4;
          auto model = adapt::build_model(mc, seed);
          adapt::train_config tc;
          tc.epochs = 2;
          tc.batch_size = 16;
          tc.batches_per_epoch = 4;
          tc.seed = seed;
          auto curves = adapt::pretrain_source(model, ds, tc);
          return curves.epochs.back().val_loss;
        },
        py::arg("seed") = 1, "train a miniature ConvLSTM for two epochs, return val RMSE");
}
