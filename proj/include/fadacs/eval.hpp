#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fadacs/common.hpp"

namespace fadacs::eval {

// predictions/truths as [T x L] row-major matrices of occupancy rates
struct evaluation_batch {
  std::size_t n_times = 0;
  std::size_t n_lots = 0;
  std::vector<double> predictions;
  std::vector<double> truths;
  int horizon_minutes = 5;
};

evaluation_batch make_batch(std::size_t n_times, std::size_t n_lots,
                            std::vector<double> predictions, std::vector<double> truths,
                            int horizon_minutes);

double mae(const evaluation_batch& b);   // throws "EmptyBatch"
double rmse(const evaluation_batch& b);

struct lot_errors {
  int lot_id = 0;
  double mae = 0;
  double rmse = 0;
};

std::vector<lot_errors> per_lot_errors(const evaluation_batch& b, const std::vector<int>& lot_ids);

struct metric_cell {
  double mae = 0;
  double rmse = 0;
};

// One table row: a model evaluated at one or more horizons (minutes).
struct report_row {
  std::string model;
  std::map<int, metric_cell> by_horizon;
  std::string error;  // non-empty when this row failed; other rows stay intact
};

struct report {
  std::vector<report_row> rows;
};

std::string report_to_json(const report& r);
report report_from_json(const std::string& text);
void write_report_json(const std::string& path, const report& r);
report read_report_json(const std::string& path);

// Table-shaped CSV: model, then "mae_5m/rmse_5m/..." columns for the union of horizons.
void write_report_csv(const std::string& path, const report& r);
void write_per_lot_csv(const std::string& path, const std::vector<lot_errors>& rows);

// gnuplot-friendly whitespace-delimited curve dump
void write_curves_dat(const std::string& path, const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows);

// merge rows from several reports; same model names merge their horizon maps
report merge_reports(const std::vector<report>& parts);

}  // namespace fadacs::eval
