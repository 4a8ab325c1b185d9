#include "fadacs/stats.hpp"

#include <cmath>

#include "fadacs/csv.hpp"
#include "json.hpp"

namespace fadacs::stats {

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw error("ShapeMismatch", "pearson needs equal lengths");
  const std::size_t n = x.size();
  if (n < 2) throw error("DegenerateSampleSize", "pearson needs n >= 2");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double dx = x[i] - mx;
    double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw error("ConstantInput", "constant argument");
  double r = sxy / std::sqrt(sxx * syy);
  return std::min(1.0, std::max(-1.0, r));
}

double log_gamma(double x) {
  // Lanczos approximation, g = 7, n = 9
  static const double coeffs[9] = {0.99999999999980993,  676.5203681218851,   -1259.1392167224028,
                                   771.32342877765313,   -176.61502916214059, 12.507343278686905,
                                   -0.13857109526572012, 9.9843695780195716e-6,
                                   1.5056327351493116e-7};
  if (x < 0.5) {
    // reflection
    return std::log(3.141592653589793238462643 / std::sin(3.141592653589793238462643 * x)) -
           log_gamma(1.0 - x);
  }
  x -= 1.0;
  double a = coeffs[0];
  double t = x + 7.5;
  for (int i = 1; i < 9; ++i) a += coeffs[i] / (x + static_cast<double>(i));
  return 0.91893853320467274178 + (x + 0.5) * std::log(t) - t + std::log(a);
}

namespace {

// Lentz continued fraction for the incomplete beta
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-12;
  constexpr double kTiny = 1e-300;
  double qab = a + b;
  double qap = a + 1.0;
  double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw error("NoConvergence", "incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0) || !(b > 0)) throw error("InvalidConfig", "beta parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_front = log_gamma(a + b) - log_gamma(a) - log_gamma(b) + a * std::log(x) +
                    b * std::log(1.0 - x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double f_distribution_sf(double f, double df1, double df2) {
  if (f <= 0.0) return 1.0;
  double x = df2 / (df2 + df1 * f);
  return regularized_incomplete_beta(df2 / 2.0, df1 / 2.0, x);
}

f_test_result regression_f_test(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 3) throw error("DegenerateSampleSize", "F test needs n >= 3");
  double r = pearson(x, y);
  double r2 = r * r;
  f_test_result out;
  if (r2 >= 1.0 - 1e-15) {
    out.f = kMaxFValue;
    out.p = 0.0;
    return out;
  }
  double df2 = static_cast<double>(n - 2);
  out.f = r2 * df2 / (1.0 - r2);
  if (out.f > kMaxFValue) {
    out.f = kMaxFValue;
    out.p = 0.0;
    return out;
  }
  out.p = f_distribution_sf(out.f, 1.0, df2);
  return out;
}

std::vector<feature_screen_row> feature_screen(
    const std::vector<std::string>& feature_names,
    const std::vector<std::vector<double>>& feature_columns,
    std::span<const double> occupancy) {
  if (feature_names.size() != feature_columns.size())
    throw error("ShapeMismatch", "names do not match columns");
  std::vector<feature_screen_row> rows;
  rows.reserve(feature_names.size());
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    feature_screen_row row;
    row.feature = feature_names[i];
    row.n = feature_columns[i].size();
    try {
      if (feature_columns[i].size() != occupancy.size())
        throw error("ShapeMismatch", "column length");
      row.pcc = pearson(feature_columns[i], occupancy);
      auto ft = regression_f_test(feature_columns[i], occupancy);
      row.f_value = ft.f;
      row.p_value = ft.p;
    } catch (const error& e) {
      row.pcc.reset();
      row.f_value.reset();
      row.p_value.reset();
      row.note = e.code();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string opt_str(const std::optional<double>& v) {
  return v ? csv::format_double(*v) : "";
}

}  // namespace

void write_screen_csv(const std::string& path, const std::vector<feature_screen_row>& rows) {
  std::vector<std::vector<std::string>> out;
  out.reserve(rows.size());
  for (const auto& r : rows)
    out.push_back({r.feature, opt_str(r.pcc), opt_str(r.f_value), opt_str(r.p_value),
                   std::to_string(r.n), r.note});
  csv::write_file(path, {"feature", "pcc", "f_value", "p_value", "n", "note"}, out);
}

std::string screen_to_json(const std::vector<feature_screen_row>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j{{"feature", r.feature}, {"n", r.n}};
    j["pcc"] = r.pcc ? nlohmann::json(*r.pcc) : nlohmann::json();
    j["f_value"] = r.f_value ? nlohmann::json(*r.f_value) : nlohmann::json();
    j["p_value"] = r.p_value ? nlohmann::json(*r.p_value) : nlohmann::json();
    if (!r.note.empty()) j["note"] = r.note;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace fadacs::stats
