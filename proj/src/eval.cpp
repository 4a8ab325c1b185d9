#include "fadacs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fadacs/csv.hpp"
#include "json.hpp"

namespace fadacs::eval {

evaluation_batch make_batch(std::size_t n_times, std::size_t n_lots,
                            std::vector<double> predictions, std::vector<double> truths,
                            int horizon_minutes) {
  if (predictions.size() != n_times * n_lots || truths.size() != predictions.size())
    throw error("ShapeMismatch", "batch matrices must both be T x L");
  return {n_times, n_lots, std::move(predictions), std::move(truths), horizon_minutes};
}

double mae(const evaluation_batch& b) {
  const std::size_t n = b.predictions.size();
  if (n == 0) throw error("EmptyBatch", "mae over zero cells");
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(b.predictions[i] - b.truths[i]);
  return acc / static_cast<double>(n);
}

double rmse(const evaluation_batch& b) {
  const std::size_t n = b.predictions.size();
  if (n == 0) throw error("EmptyBatch", "rmse over zero cells");
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = b.predictions[i] - b.truths[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(n));
}

std::vector<lot_errors> per_lot_errors(const evaluation_batch& b,
                                       const std::vector<int>& lot_ids) {
  if (lot_ids.size() != b.n_lots) throw error("ShapeMismatch", "lot id list");
  if (b.n_times == 0) throw error("EmptyBatch", "per-lot errors over zero rows");
  std::vector<lot_errors> out;
  out.reserve(b.n_lots);
  for (std::size_t l = 0; l < b.n_lots; ++l) {
    double abs_acc = 0, sq_acc = 0;
    for (std::size_t t = 0; t < b.n_times; ++t) {
      double d = b.predictions[t * b.n_lots + l] - b.truths[t * b.n_lots + l];
      abs_acc += std::abs(d);
      sq_acc += d * d;
    }
    double n = static_cast<double>(b.n_times);
    out.push_back({lot_ids[l], abs_acc / n, std::sqrt(sq_acc / n)});
  }
  return out;
}

std::string report_to_json(const report& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j{{"model", row.model}};
    nlohmann::json h = nlohmann::json::object();
    for (const auto& [minutes, cell] : row.by_horizon)
      h[std::to_string(minutes)] = {{"mae", cell.mae}, {"rmse", cell.rmse}};
    j["horizons"] = h;
    if (!row.error.empty()) j["error"] = row.error;
    rows.push_back(std::move(j));
  }
  return nlohmann::json{{"rows", rows}}.dump(2);
}

report report_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  report r;
  for (const auto& jr : j.at("rows")) {
    report_row row;
    row.model = jr.at("model").get<std::string>();
    if (jr.contains("error")) row.error = jr.at("error").get<std::string>();
    for (auto it = jr.at("horizons").begin(); it != jr.at("horizons").end(); ++it) {
      metric_cell cell{it.value().at("mae").get<double>(), it.value().at("rmse").get<double>()};
      row.by_horizon[std::stoi(it.key())] = cell;
    }
    r.rows.push_back(std::move(row));
  }
  return r;
}

void write_report_json(const std::string& path, const report& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("OutputUnwritable", path);
  out << report_to_json(r) << '\n';
}

report read_report_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("InputMissing", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

void write_report_csv(const std::string& path, const report& r) {
  std::set<int> horizons;
  for (const auto& row : r.rows)
    for (const auto& [m, cell] : row.by_horizon) horizons.insert(m);
  std::vector<std::string> header{"model"};
  for (int m : horizons) {
    header.push_back("mae_" + std::to_string(m) + "m");
    header.push_back("rmse_" + std::to_string(m) + "m");
  }
  header.push_back("error");
  std::vector<std::vector<std::string>> rows;
  for (const auto& row : r.rows) {
    std::vector<std::string> cells{row.model};
    for (int m : horizons) {
      auto it = row.by_horizon.find(m);
      if (it == row.by_horizon.end()) {
        cells.push_back("");
        cells.push_back("");
      } else {
        cells.push_back(csv::format_double(it->second.mae));
        cells.push_back(csv::format_double(it->second.rmse));
      }
    }
    cells.push_back(row.error);
    rows.push_back(std::move(cells));
  }
  csv::write_file(path, header, rows);
}

void write_per_lot_csv(const std::string& path, const std::vector<lot_errors>& rows) {
  std::vector<std::vector<std::string>> out;
  out.reserve(rows.size());
  for (const auto& r : rows)
    out.push_back({std::to_string(r.lot_id), csv::format_double(r.mae),
                   csv::format_double(r.rmse)});
  csv::write_file(path, {"lot_id", "mae", "rmse"}, out);
}

void write_curves_dat(const std::string& path, const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("OutputUnwritable", path);
  out << "#";
  for (const auto& c : columns) out << ' ' << c;
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ' ';
      out << csv::format_double(row[i]);
    }
    out << '\n';
  }
}

report merge_reports(const std::vector<report>& parts) {
  report out;
  for (const auto& part : parts) {
    for (const auto& row : part.rows) {
      auto it = std::find_if(out.rows.begin(), out.rows.end(),
                             [&](const report_row& r) { return r.model == row.model; });
      if (it == out.rows.end()) {
        out.rows.push_back(row);
      } else {
        for (const auto& [m, cell] : row.by_horizon) it->by_horizon[m] = cell;
        if (!row.error.empty()) it->error = row.error;
      }
    }
  }
  return out;
}

}  // namespace fadacs::eval
