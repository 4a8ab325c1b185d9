#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fadacs/common.hpp"

namespace fadacs::stats {

// product-moment correlation; throws "DegenerateSampleSize" (n < 2) or
// "ConstantInput" (either argument constant)
double pearson(std::span<const double> x, std::span<const double> y);

struct f_test_result {
  double f = 0;
  double p = 1;
};

// F statistic of the simple-linear-regression ANOVA, df = (1, n-2):
// F = r^2 (n-2) / (1 - r^2); |r| -> 1 caps F and clamps p to 0.
inline constexpr double kMaxFValue = 1e15;
f_test_result regression_f_test(std::span<const double> x, std::span<const double> y);

// log Gamma (Lanczos) and the regularized incomplete beta I_x(a,b),
// continued fraction evaluated to 1e-12
double log_gamma(double x);
double regularized_incomplete_beta(double a, double b, double x);

// survival function of the F distribution with (df1, df2) degrees of freedom
double f_distribution_sf(double f, double df1, double df2);

struct feature_screen_row {
  std::string feature;
  std::optional<double> pcc;      // in [-1, 1]
  std::optional<double> f_value;  // >= 0
  std::optional<double> p_value;  // in [0, 1]
  std::size_t n = 0;
  std::string note;  // error code when the feature could not be screened
};

// One row per feature column, in the given order, against occupancy.
std::vector<feature_screen_row> feature_screen(
    const std::vector<std::string>& feature_names,
    const std::vector<std::vector<double>>& feature_columns,
    std::span<const double> occupancy);

void write_screen_csv(const std::string& path, const std::vector<feature_screen_row>& rows);
std::string screen_to_json(const std::vector<feature_screen_row>& rows);

}  // namespace fadacs::stats
