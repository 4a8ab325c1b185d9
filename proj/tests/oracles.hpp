// Test-side oracles, kept independent of the implementation paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fadacs/neural.hpp"
#include "fadacs/spatial.hpp"

namespace oracles {

// ---- spherical law of cosines (cross-formula distance oracle) -------------------

inline double slc_distance_m(const fadacs::geo_point& a, const fadacs::geo_point& b) {
  constexpr double rad = 0.017453292519943295;
  constexpr double R = 6371000.0;
  double p1 = a.lat * rad, p2 = b.lat * rad;
  double dl = (b.lon - a.lon) * rad;
  double c = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
  c = std::min(1.0, std::max(-1.0, c));
  return R * std::acos(c);
}

// ---- naive convolution (triple loop, zero padding) -------------------------------

inline fadacs::neural::tensor naive_conv1d(const fadacs::neural::tensor& x,
                                           const fadacs::neural::tensor& k) {
  const std::size_t in_ch = x.shape[0], spatial = x.shape[1];
  const std::size_t out_ch = k.shape[0], kw = k.shape[2];
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kw / 2);
  fadacs::neural::tensor y({out_ch, spatial});
  for (std::size_t o = 0; o < out_ch; ++o)
    for (std::size_t p = 0; p < spatial; ++p) {
      double acc = 0;
      for (std::size_t i = 0; i < in_ch; ++i)
        for (std::size_t d = 0; d < kw; ++d) {
          std::ptrdiff_t q = static_cast<std::ptrdiff_t>(p) + static_cast<std::ptrdiff_t>(d) - half;
          if (q < 0 || q >= static_cast<std::ptrdiff_t>(spatial)) continue;
          acc += x.data[i * spatial + static_cast<std::size_t>(q)] *
                 k.data[(o * in_ch + i) * kw + d];
        }
      y.data[o * spatial + p] = acc;
    }
  return y;
}

// ---- scalar-by-scalar ConvLSTM step (explicit evaluation of every gate line) -----

struct scalar_convlstm_out {
  fadacs::neural::tensor h, c;
};

inline scalar_convlstm_out scalar_convlstm_step(const fadacs::neural::convlstm_cell& cell,
                                                const fadacs::neural::tensor& x,
                                                const fadacs::neural::tensor& h_prev,
                                                const fadacs::neural::tensor& c_prev) {
  const std::size_t hid = cell.hidden_channels();
  const std::size_t spatial = cell.spatial();
  auto conv = [&](const fadacs::neural::tensor& inp, const fadacs::neural::tensor& k) {
    return naive_conv1d(inp, k);
  };
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  fadacs::neural::tensor xi = conv(x, cell.w_xi), hi = conv(h_prev, cell.w_hi);
  fadacs::neural::tensor xf = conv(x, cell.w_xf), hf = conv(h_prev, cell.w_hf);
  fadacs::neural::tensor xc = conv(x, cell.w_xc), hc = conv(h_prev, cell.w_hc);
  fadacs::neural::tensor xo = conv(x, cell.w_xo), ho = conv(h_prev, cell.w_ho);
  scalar_convlstm_out out{fadacs::neural::tensor({hid, spatial}),
                          fadacs::neural::tensor({hid, spatial})};
  for (std::size_t ch = 0; ch < hid; ++ch)
    for (std::size_t p = 0; p < spatial; ++p) {
      std::size_t j = ch * spatial + p;
      double i_t = sig(xi[j] + hi[j] + cell.w_ci[j] * c_prev[j] + cell.b_i[ch]);
      double f_t = sig(xf[j] + hf[j] + cell.w_cf[j] * c_prev[j] + cell.b_f[ch]);
      double c_t = f_t * c_prev[j] + i_t * std::tanh(xc[j] + hc[j] + cell.b_c[ch]);
      double o_t = sig(xo[j] + ho[j] + cell.w_co[j] * c_t + cell.b_o[ch]);
      out.c[j] = c_t;
      out.h[j] = o_t * std::tanh(c_t);
    }
  return out;
}

// ---- finite-difference gradient check ---------------------------------------------

// loss() must run a fresh forward pass; backward_loss() must zero grads, run
// forward + backward once, and leave gradients in the params.
//
// A coordinate that fails at the primary step width is re-measured at h/100:
// a ReLU kink inside the +-h window makes the central difference jump even
// though the subgradient is correct, and the shrunken window resolves it,
// while a genuine gradient bug keeps disagreeing at every width.
struct grad_check_result {
  double max_rel_err = 0;
  std::string worst_param;
};

inline grad_check_result check_gradients(const std::vector<fadacs::neural::param_ref>& params,
                                         const std::function<double()>& loss,
                                         const std::function<void()>& backward_loss,
                                         double h = 1e-5, double tol = 1e-4) {
  backward_loss();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad->data);

  grad_check_result res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& value = *params[pi].value;
    for (std::size_t j = 0; j < value.size(); ++j) {
      auto fd_at = [&](double width) {
        double keep = value[j];
        value[j] = keep + width;
        double up = loss();
        value[j] = keep - width;
        double down = loss();
        value[j] = keep;
        return (up - down) / (2.0 * width);
      };
      double an = analytic[pi][j];
      auto rel_of = [&](double fd) {
        return std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      };
      double rel = rel_of(fd_at(h));
      if (rel > tol) rel = std::min(rel, rel_of(fd_at(h / 100.0)));
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = params[pi].name + "[" + std::to_string(j) + "]";
      }
    }
  }
  return res;
}

// ---- brute-force clustering (pairwise link matrix + Floyd-Warshall closure) -------

inline std::vector<std::set<std::string>> brute_force_clusters(
    const std::vector<fadacs::spatial::slot_geometry>& slots,
    const std::function<bool(const fadacs::spatial::slot_geometry&,
                             const fadacs::spatial::slot_geometry&)>& linked) {
  const std::size_t n = slots.size();
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    reach[i][i] = true;
    for (std::size_t j = i + 1; j < n; ++j)
      reach[i][j] = reach[j][i] = linked(slots[i], slots[j]);
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (reach[i][k] && reach[k][j]) reach[i][j] = true;
  std::vector<bool> seen(n, false);
  std::vector<std::set<std::string>> components;
  for (std::size_t i = 0; i < n; ++i) {
    if (seen[i]) continue;
    std::set<std::string> comp;
    for (std::size_t j = 0; j < n; ++j)
      if (reach[i][j]) {
        comp.insert(slots[j].slot_key);
        seen[j] = true;
      }
    components.push_back(std::move(comp));
  }
  return components;
}

// ---- brute-force interval overlap over all pairs ----------------------------------

inline std::set<std::size_t> brute_force_overlaps(
    const std::vector<std::pair<std::int64_t, std::int64_t>>& intervals) {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < intervals.size(); ++i)
    for (std::size_t j = i + 1; j < intervals.size(); ++j) {
      if (intervals[i].first < intervals[j].second && intervals[j].first < intervals[i].second) {
        out.insert(i);
        out.insert(j);
      }
    }
  return out;
}

// ---- adaptive Simpson quadrature for the F(1, df2) upper tail ---------------------

inline double f_density(double x, double df1, double df2) {
  if (x <= 0) return 0;
  double a = df1 / 2.0, b = df2 / 2.0;
  double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  double log_pdf = a * std::log(df1 / df2) + (a - 1.0) * std::log(x) -
                   (a + b) * std::log1p(df1 * x / df2) - log_beta;
  return std::exp(log_pdf);
}

inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// upper tail P(F > f0) for df1 = 1 via quadrature. The density carries an
// x^(-1/2) singularity at zero, so integrate under x = u^2, where the
// substituted integrand 2 u f(u^2) is smooth:
//   2 B (1/df2)^(1/2) (1 + u^2/df2)^(-(1+df2)/2),  B = G((1+df2)/2)/(G(1/2) G(df2/2))
inline double f_tail_quadrature(double f0, double df1, double df2) {
  if (f0 <= 0) return 1.0;
  if (df1 != 1.0) {
    // densities with df1 >= 2 are bounded; plain quadrature suffices
    auto pdf = [&](double x) { return f_density(x, df1, df2); };
    return 1.0 - simpson(pdf, 0.0, f0, 20000);
  }
  double log_b = std::lgamma((1.0 + df2) / 2.0) - std::lgamma(0.5) - std::lgamma(df2 / 2.0);
  double scale = 2.0 * std::exp(log_b) / std::sqrt(df2);
  auto h = [&](double u) {
    return scale * std::pow(1.0 + u * u / df2, -(1.0 + df2) / 2.0);
  };
  double lower = simpson(h, 0.0, std::sqrt(f0), 20000);
  return 1.0 - lower;
}

// ---- two-sample Kolmogorov-Smirnov -------------------------------------------------

inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) ++i;
    else ++j;
    double fa = static_cast<double>(i) / a.size();
    double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

}  // namespace oracles
