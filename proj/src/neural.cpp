#include "fadacs/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace fadacs::neural {

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void require_shape(const tensor& t, const std::vector<std::size_t>& shape, const char* what) {
  if (t.shape != shape) {
    std::string got = "(", want = "(";
    for (auto d : t.shape) got += std::to_string(d) + ",";
    for (auto d : shape) want += std::to_string(d) + ",";
    throw error("ShapeMismatch", std::string(what) + " got " + got + ") want " + want + ")");
  }
}

void zero_grads(const std::vector<param_ref>& params) {
  for (const auto& p : params) p.grad->fill(0.0);
}

void glorot_fill(tensor& t, std::size_t fan_in, std::size_t fan_out, prng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
}

tensor conv1d_same(const tensor& x, const tensor& kernel) {
  if (x.shape.size() != 2 || kernel.shape.size() != 3 || kernel.shape[1] != x.shape[0] ||
      kernel.shape[2] % 2 == 0)
    throw error("ShapeMismatch", "conv1d_same expects x[in x spatial], k[out x in x odd]");
  const std::size_t in_ch = x.shape[0];
  const std::size_t spatial = x.shape[1];
  const std::size_t out_ch = kernel.shape[0];
  const std::size_t k = kernel.shape[2];
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);

  const std::ptrdiff_t sp = static_cast<std::ptrdiff_t>(spatial);
  tensor y({out_ch, spatial});
  for (std::size_t o = 0; o < out_ch; ++o) {
    double* yo = &y.data[o * spatial];
    for (std::size_t i = 0; i < in_ch; ++i) {
      const double* xi = &x.data[i * spatial];
      const double* ko = &kernel.data[(o * in_ch + i) * k];
      for (std::size_t d = 0; d < k; ++d) {
        const double w = ko[d];
        if (w == 0.0) continue;
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(d) - half;
        const std::ptrdiff_t p_lo = std::max<std::ptrdiff_t>(0, -off);
        const std::ptrdiff_t p_hi = std::min(sp, sp - off);
        for (std::ptrdiff_t p = p_lo; p < p_hi; ++p) yo[p] += w * xi[p + off];
      }
    }
  }
  return y;
}

tensor conv1d_backward_input(const tensor& grad_y, const tensor& kernel,
                             std::size_t in_channels, std::size_t spatial) {
  const std::size_t out_ch = kernel.shape[0];
  const std::size_t k = kernel.shape[2];
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
  const std::ptrdiff_t sp = static_cast<std::ptrdiff_t>(spatial);
  tensor gx({in_channels, spatial});
  for (std::size_t o = 0; o < out_ch; ++o) {
    const double* gy = &grad_y.data[o * spatial];
    for (std::size_t i = 0; i < in_channels; ++i) {
      double* gxi = &gx.data[i * spatial];
      const double* ko = &kernel.data[(o * in_channels + i) * k];
      for (std::size_t d = 0; d < k; ++d) {
        const double w = ko[d];
        if (w == 0.0) continue;
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(d) - half;
        // gx[q] += gy[q - off] * w
        const std::ptrdiff_t q_lo = std::max<std::ptrdiff_t>(0, off);
        const std::ptrdiff_t q_hi = std::min(sp, sp + off);
        for (std::ptrdiff_t q = q_lo; q < q_hi; ++q) gxi[q] += w * gy[q - off];
      }
    }
  }
  return gx;
}

void conv1d_backward_kernel(const tensor& x, const tensor& grad_y, tensor& grad_kernel) {
  const std::size_t in_ch = x.shape[0];
  const std::size_t spatial = x.shape[1];
  const std::size_t out_ch = grad_kernel.shape[0];
  const std::size_t k = grad_kernel.shape[2];
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
  const std::ptrdiff_t sp = static_cast<std::ptrdiff_t>(spatial);
  for (std::size_t o = 0; o < out_ch; ++o) {
    const double* gy = &grad_y.data[o * spatial];
    for (std::size_t i = 0; i < in_ch; ++i) {
      const double* xi = &x.data[i * spatial];
      double* gk = &grad_kernel.data[(o * in_ch + i) * k];
      for (std::size_t d = 0; d < k; ++d) {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(d) - half;
        const std::ptrdiff_t p_lo = std::max<std::ptrdiff_t>(0, -off);
        const std::ptrdiff_t p_hi = std::min(sp, sp - off);
        double acc = 0;
        for (std::ptrdiff_t p = p_lo; p < p_hi; ++p) acc += gy[p] * xi[p + off];
        gk[d] += acc;
      }
    }
  }
}

// --- dense ---------------------------------------------------------------------

dense::dense(std::size_t in, std::size_t out, prng& rng)
    : weight({out, in}), bias({out}), grad_weight({out, in}), grad_bias({out}) {
  glorot_fill(weight, in, out, rng);
}

tensor dense::forward(const tensor& x) {
  require_shape(x, {weight.shape[1]}, "dense input");
  input_ = x;
  have_input_ = true;
  const std::size_t out = weight.shape[0];
  const std::size_t in = weight.shape[1];
  tensor y({out});
  for (std::size_t o = 0; o < out; ++o) {
    double acc = bias[o];
    const double* w = &weight.data[o * in];
    for (std::size_t i = 0; i < in; ++i) acc += w[i] * x[i];
    y[o] = acc;
  }
  return y;
}

tensor dense::backward(const tensor& grad_out) {
  if (!have_input_) throw error("NoForwardRecorded", "dense");
  const std::size_t out = weight.shape[0];
  const std::size_t in = weight.shape[1];
  require_shape(grad_out, {out}, "dense upstream");
  tensor gx({in});
  for (std::size_t o = 0; o < out; ++o) {
    const double g = grad_out[o];
    grad_bias[o] += g;
    double* gw = &grad_weight.data[o * in];
    const double* w = &weight.data[o * in];
    for (std::size_t i = 0; i < in; ++i) {
      gw[i] += g * input_[i];
      gx[i] += g * w[i];
    }
  }
  return gx;
}

std::vector<param_ref> dense::params() {
  return {{"weight", &weight, &grad_weight}, {"bias", &bias, &grad_bias}};
}

std::unique_ptr<layer> dense::clone() const { return std::make_unique<dense>(*this); }

// --- activations -----------------------------------------------------------------

tensor relu::forward(const tensor& x) {
  input_ = x;
  have_input_ = true;
  tensor y = x;
  for (auto& v : y.data) v = v > 0 ? v : 0.0;
  return y;
}

tensor relu::backward(const tensor& grad_out) {
  if (!have_input_) throw error("NoForwardRecorded", "relu");
  tensor gx = grad_out;
  for (std::size_t i = 0; i < gx.size(); ++i)
    if (input_[i] <= 0.0) gx[i] = 0.0;
  return gx;
}

tensor sigmoid::forward(const tensor& x) {
  output_ = x;
  for (auto& v : output_.data) v = sig(v);
  have_output_ = true;
  return output_;
}

tensor sigmoid::backward(const tensor& grad_out) {
  if (!have_output_) throw error("NoForwardRecorded", "sigmoid");
  tensor gx = grad_out;
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= output_[i] * (1.0 - output_[i]);
  return gx;
}

tensor log_softmax::forward(const tensor& x) {
  double mx = x[0];
  for (double v : x.data) mx = std::max(mx, v);
  double lse = 0;
  for (double v : x.data) lse += std::exp(v - mx);
  lse = mx + std::log(lse);
  output_ = x;
  for (auto& v : output_.data) v -= lse;
  have_output_ = true;
  return output_;
}

tensor log_softmax::backward(const tensor& grad_out) {
  if (!have_output_) throw error("NoForwardRecorded", "log_softmax");
  double gsum = 0;
  for (double g : grad_out.data) gsum += g;
  tensor gx = grad_out;
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] -= std::exp(output_[i]) * gsum;
  return gx;
}

// --- layer_stack -----------------------------------------------------------------

layer_stack::layer_stack(const layer_stack& o) {
  layers_.reserve(o.layers_.size());
  for (const auto& l : o.layers_) layers_.push_back(l->clone());
}

layer_stack& layer_stack::operator=(const layer_stack& o) {
  if (this == &o) return *this;
  layers_.clear();
  layers_.reserve(o.layers_.size());
  for (const auto& l : o.layers_) layers_.push_back(l->clone());
  return *this;
}

tensor layer_stack::forward(const tensor& x) {
  tensor cur = x;
  for (auto& l : layers_) cur = l->forward(cur);
  return cur;
}

tensor layer_stack::backward(const tensor& grad_out) {
  tensor cur = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) cur = layers_[i]->backward(cur);
  return cur;
}

std::vector<param_ref> layer_stack::params(const std::string& prefix) {
  std::vector<param_ref> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (auto p : layers_[i]->params()) {
      p.name = prefix + std::to_string(i) + "." + layers_[i]->kind() + "." + p.name;
      out.push_back(p);
    }
  }
  return out;
}

// --- convlstm ---------------------------------------------------------------------

convlstm_cell::convlstm_cell(std::size_t in_channels, std::size_t hidden_channels,
                             std::size_t spatial, std::size_t kernel, prng& rng)
    : in_ch_(in_channels), hid_(hidden_channels), spatial_(spatial), k_(kernel) {
  if (kernel % 2 == 0) throw error("InvalidConfig", "kernel width must be odd");
  auto kshape_x = std::vector<std::size_t>{hid_, in_ch_, k_};
  auto kshape_h = std::vector<std::size_t>{hid_, hid_, k_};
  auto pshape = std::vector<std::size_t>{hid_, spatial_};
  auto bshape = std::vector<std::size_t>{hid_};
  for (tensor* t : {&w_xi, &w_xf, &w_xc, &w_xo}) {
    *t = tensor(kshape_x);
    glorot_fill(*t, in_ch_ * k_, hid_ * k_, rng);
  }
  for (tensor* t : {&w_hi, &w_hf, &w_hc, &w_ho}) {
    *t = tensor(kshape_h);
    glorot_fill(*t, hid_ * k_, hid_ * k_, rng);
  }
  for (tensor* t : {&w_ci, &w_cf, &w_co}) *t = tensor(pshape);  // peepholes start at zero
  for (tensor* t : {&b_i, &b_c, &b_o}) *t = tensor(bshape);
  b_f = tensor(bshape);
  b_f.fill(1.0);  // forget bias
  for (tensor* t : {&g_xi, &g_xf, &g_xc, &g_xo}) *t = tensor(kshape_x);
  for (tensor* t : {&g_hi, &g_hf, &g_hc, &g_ho}) *t = tensor(kshape_h);
  for (tensor* t : {&g_ci, &g_cf, &g_co}) *t = tensor(pshape);
  for (tensor* t : {&g_bi, &g_bf, &g_bc, &g_bo}) *t = tensor(bshape);
}

convlstm_state convlstm_cell::zero_state() const {
  return {tensor({hid_, spatial_}), tensor({hid_, spatial_})};
}

convlstm_state convlstm_cell::step(const tensor& x, const convlstm_state& prev) {
  require_shape(x, {in_ch_, spatial_}, "convlstm input");
  require_shape(prev.h, {hid_, spatial_}, "convlstm hidden");
  require_shape(prev.c, {hid_, spatial_}, "convlstm cell");

  const std::size_t n = hid_ * spatial_;
  tensor a_i = conv1d_same(x, w_xi);
  tensor a_f = conv1d_same(x, w_xf);
  tensor a_g = conv1d_same(x, w_xc);
  tensor a_o = conv1d_same(x, w_xo);
  {
    tensor hi = conv1d_same(prev.h, w_hi);
    tensor hf = conv1d_same(prev.h, w_hf);
    tensor hg = conv1d_same(prev.h, w_hc);
    tensor ho = conv1d_same(prev.h, w_ho);
    for (std::size_t j = 0; j < n; ++j) {
      a_i[j] += hi[j];
      a_f[j] += hf[j];
      a_g[j] += hg[j];
      a_o[j] += ho[j];
    }
  }

  step_cache sc;
  sc.x = x;
  sc.h_prev = prev.h;
  sc.c_prev = prev.c;
  sc.i = tensor({hid_, spatial_});
  sc.f = tensor({hid_, spatial_});
  sc.g = tensor({hid_, spatial_});
  sc.c = tensor({hid_, spatial_});
  sc.o = tensor({hid_, spatial_});
  sc.tanh_c = tensor({hid_, spatial_});

  convlstm_state next{tensor({hid_, spatial_}), tensor({hid_, spatial_})};
  for (std::size_t ch = 0; ch < hid_; ++ch) {
    for (std::size_t p = 0; p < spatial_; ++p) {
      const std::size_t j = ch * spatial_ + p;
      const double i_t = sig(a_i[j] + w_ci[j] * prev.c[j] + b_i[ch]);
      const double f_t = sig(a_f[j] + w_cf[j] * prev.c[j] + b_f[ch]);
      const double g_t = std::tanh(a_g[j] + b_c[ch]);
      const double c_t = f_t * prev.c[j] + i_t * g_t;
      const double o_t = sig(a_o[j] + w_co[j] * c_t + b_o[ch]);
      const double th = std::tanh(c_t);
      sc.i[j] = i_t;
      sc.f[j] = f_t;
      sc.g[j] = g_t;
      sc.c[j] = c_t;
      sc.o[j] = o_t;
      sc.tanh_c[j] = th;
      next.c[j] = c_t;
      next.h[j] = o_t * th;
    }
  }
  cache_.push_back(std::move(sc));
  return next;
}

convlstm_state convlstm_cell::forward_sequence(const tensor& x_seq) {
  if (x_seq.shape.size() != 3 || x_seq.shape[1] != in_ch_ || x_seq.shape[2] != spatial_)
    throw error("ShapeMismatch", "convlstm sequence must be [T x in x spatial]");
  cache_.clear();
  convlstm_state st = zero_state();
  const std::size_t T = x_seq.shape[0];
  const std::size_t n = in_ch_ * spatial_;
  for (std::size_t t = 0; t < T; ++t) {
    tensor x({in_ch_, spatial_});
    std::copy(x_seq.data.begin() + static_cast<std::ptrdiff_t>(t * n),
              x_seq.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * n), x.data.begin());
    st = step(x, st);
  }
  return st;
}

tensor convlstm_cell::backward_sequence(const tensor& grad_h_final, const tensor& grad_c_final) {
  if (cache_.empty()) throw error("NoForwardRecorded", "convlstm");
  const std::size_t T = cache_.size();
  const std::size_t n = hid_ * spatial_;
  tensor gh = grad_h_final;
  tensor gc = grad_c_final;
  require_shape(gh, {hid_, spatial_}, "convlstm grad h");
  require_shape(gc, {hid_, spatial_}, "convlstm grad c");

  tensor gx_seq({T, in_ch_, spatial_});
  tensor ga_i({hid_, spatial_}), ga_f({hid_, spatial_}), ga_g({hid_, spatial_}),
      ga_o({hid_, spatial_});

  for (std::size_t t = T; t-- > 0;) {
    const step_cache& sc = cache_[t];
    for (std::size_t ch = 0; ch < hid_; ++ch) {
      for (std::size_t p = 0; p < spatial_; ++p) {
        const std::size_t j = ch * spatial_ + p;
        const double go = gh[j] * sc.tanh_c[j];
        const double gao = go * sc.o[j] * (1.0 - sc.o[j]);
        double gcj = gc[j] + gh[j] * sc.o[j] * (1.0 - sc.tanh_c[j] * sc.tanh_c[j]) +
                     gao * w_co[j];
        g_co[j] += gao * sc.c[j];
        g_bo[ch] += gao;
        const double gf = gcj * sc.c_prev[j];
        const double gi = gcj * sc.g[j];
        const double gg = gcj * sc.i[j];
        const double gaf = gf * sc.f[j] * (1.0 - sc.f[j]);
        const double gai = gi * sc.i[j] * (1.0 - sc.i[j]);
        const double gag = gg * (1.0 - sc.g[j] * sc.g[j]);
        g_ci[j] += gai * sc.c_prev[j];
        g_cf[j] += gaf * sc.c_prev[j];
        g_bi[ch] += gai;
        g_bf[ch] += gaf;
        g_bc[ch] += gag;
        // gradient flowing into C_{t-1}
        gc[j] = gcj * sc.f[j] + gai * w_ci[j] + gaf * w_cf[j];
        ga_i[j] = gai;
        ga_f[j] = gaf;
        ga_g[j] = gag;
        ga_o[j] = gao;
      }
    }
    conv1d_backward_kernel(sc.x, ga_i, g_xi);
    conv1d_backward_kernel(sc.x, ga_f, g_xf);
    conv1d_backward_kernel(sc.x, ga_g, g_xc);
    conv1d_backward_kernel(sc.x, ga_o, g_xo);
    conv1d_backward_kernel(sc.h_prev, ga_i, g_hi);
    conv1d_backward_kernel(sc.h_prev, ga_f, g_hf);
    conv1d_backward_kernel(sc.h_prev, ga_g, g_hc);
    conv1d_backward_kernel(sc.h_prev, ga_o, g_ho);

    tensor gx = conv1d_backward_input(ga_i, w_xi, in_ch_, spatial_);
    {
      tensor t2 = conv1d_backward_input(ga_f, w_xf, in_ch_, spatial_);
      tensor t3 = conv1d_backward_input(ga_g, w_xc, in_ch_, spatial_);
      tensor t4 = conv1d_backward_input(ga_o, w_xo, in_ch_, spatial_);
      for (std::size_t j = 0; j < in_ch_ * spatial_; ++j) gx[j] += t2[j] + t3[j] + t4[j];
    }
    std::copy(gx.data.begin(), gx.data.end(),
              gx_seq.data.begin() + static_cast<std::ptrdiff_t>(t * in_ch_ * spatial_));

    tensor gh_prev = conv1d_backward_input(ga_i, w_hi, hid_, spatial_);
    {
      tensor t2 = conv1d_backward_input(ga_f, w_hf, hid_, spatial_);
      tensor t3 = conv1d_backward_input(ga_g, w_hc, hid_, spatial_);
      tensor t4 = conv1d_backward_input(ga_o, w_ho, hid_, spatial_);
      for (std::size_t j = 0; j < n; ++j) gh_prev[j] += t2[j] + t3[j] + t4[j];
    }
    gh = std::move(gh_prev);
  }
  cache_.clear();
  return gx_seq;
}

std::vector<param_ref> convlstm_cell::params(const std::string& prefix) {
  return {{prefix + "w_xi", &w_xi, &g_xi}, {prefix + "w_hi", &w_hi, &g_hi},
          {prefix + "w_xf", &w_xf, &g_xf}, {prefix + "w_hf", &w_hf, &g_hf},
          {prefix + "w_xc", &w_xc, &g_xc}, {prefix + "w_hc", &w_hc, &g_hc},
          {prefix + "w_xo", &w_xo, &g_xo}, {prefix + "w_ho", &w_ho, &g_ho},
          {prefix + "w_ci", &w_ci, &g_ci}, {prefix + "w_cf", &w_cf, &g_cf},
          {prefix + "w_co", &w_co, &g_co}, {prefix + "b_i", &b_i, &g_bi},
          {prefix + "b_f", &b_f, &g_bf},   {prefix + "b_c", &b_c, &g_bc},
          {prefix + "b_o", &b_o, &g_bo}};
}

// --- lstm ------------------------------------------------------------------------

lstm_cell::lstm_cell(std::size_t in_dim, std::size_t hidden_dim, prng& rng)
    : in_(in_dim), hid_(hidden_dim) {
  auto wx = std::vector<std::size_t>{hid_, in_};
  auto wh = std::vector<std::size_t>{hid_, hid_};
  auto bs = std::vector<std::size_t>{hid_};
  for (tensor* t : {&w_xi, &w_xf, &w_xc, &w_xo}) {
    *t = tensor(wx);
    glorot_fill(*t, in_, hid_, rng);
  }
  for (tensor* t : {&w_hi, &w_hf, &w_hc, &w_ho}) {
    *t = tensor(wh);
    glorot_fill(*t, hid_, hid_, rng);
  }
  for (tensor* t : {&b_i, &b_c, &b_o}) *t = tensor(bs);
  b_f = tensor(bs);
  b_f.fill(1.0);
  for (tensor* t : {&g_xi, &g_xf, &g_xc, &g_xo}) *t = tensor(wx);
  for (tensor* t : {&g_hi, &g_hf, &g_hc, &g_ho}) *t = tensor(wh);
  for (tensor* t : {&g_bi, &g_bf, &g_bc, &g_bo}) *t = tensor(bs);
}

namespace {

void matvec_add(const tensor& w, const tensor& x, tensor& out) {
  const std::size_t rows = w.shape[0];
  const std::size_t cols = w.shape[1];
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0;
    const double* wr = &w.data[r * cols];
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    out[r] += acc;
  }
}

// grad_w += outer(gy, x); grad_x += w^T gy
void matvec_backward(const tensor& w, const tensor& x, const tensor& gy, tensor& gw, tensor& gx) {
  const std::size_t rows = w.shape[0];
  const std::size_t cols = w.shape[1];
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = gy[r];
    double* gwr = &gw.data[r * cols];
    const double* wr = &w.data[r * cols];
    for (std::size_t c = 0; c < cols; ++c) {
      gwr[c] += g * x[c];
      gx[c] += g * wr[c];
    }
  }
}

}  // namespace

void lstm_cell::step(const tensor& x, tensor& h, tensor& c) {
  require_shape(x, {in_}, "lstm input");
  step_cache sc;
  sc.x = x;
  sc.h_prev = h;
  sc.c_prev = c;

  tensor a_i({hid_}), a_f({hid_}), a_g({hid_}), a_o({hid_});
  matvec_add(w_xi, x, a_i);
  matvec_add(w_hi, h, a_i);
  matvec_add(w_xf, x, a_f);
  matvec_add(w_hf, h, a_f);
  matvec_add(w_xc, x, a_g);
  matvec_add(w_hc, h, a_g);
  matvec_add(w_xo, x, a_o);
  matvec_add(w_ho, h, a_o);

  sc.i = tensor({hid_});
  sc.f = tensor({hid_});
  sc.g = tensor({hid_});
  sc.c = tensor({hid_});
  sc.o = tensor({hid_});
  sc.tanh_c = tensor({hid_});
  for (std::size_t j = 0; j < hid_; ++j) {
    const double i_t = sig(a_i[j] + b_i[j]);
    const double f_t = sig(a_f[j] + b_f[j]);
    const double g_t = std::tanh(a_g[j] + b_c[j]);
    const double c_t = f_t * c[j] + i_t * g_t;
    const double o_t = sig(a_o[j] + b_o[j]);
    sc.i[j] = i_t;
    sc.f[j] = f_t;
    sc.g[j] = g_t;
    sc.c[j] = c_t;
    sc.o[j] = o_t;
    sc.tanh_c[j] = std::tanh(c_t);
    c[j] = c_t;
    h[j] = o_t * sc.tanh_c[j];
  }
  cache_.push_back(std::move(sc));
}

tensor lstm_cell::forward_sequence(const tensor& x_seq) {
  if (x_seq.shape.size() != 2 || x_seq.shape[1] != in_)
    throw error("ShapeMismatch", "lstm sequence must be [T x in]");
  cache_.clear();
  tensor h({hid_}), c({hid_});
  const std::size_t T = x_seq.shape[0];
  for (std::size_t t = 0; t < T; ++t) {
    tensor x({in_});
    std::copy(x_seq.data.begin() + static_cast<std::ptrdiff_t>(t * in_),
              x_seq.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * in_), x.data.begin());
    step(x, h, c);
  }
  return h;
}

tensor lstm_cell::backward_sequence(const tensor& grad_h_final) {
  if (cache_.empty()) throw error("NoForwardRecorded", "lstm");
  const std::size_t T = cache_.size();
  tensor gh = grad_h_final;
  tensor gc({hid_});
  tensor gx_seq({T, in_});
  for (std::size_t t = T; t-- > 0;) {
    const step_cache& sc = cache_[t];
    tensor ga_i({hid_}), ga_f({hid_}), ga_g({hid_}), ga_o({hid_});
    for (std::size_t j = 0; j < hid_; ++j) {
      const double go = gh[j] * sc.tanh_c[j];
      const double gao = go * sc.o[j] * (1.0 - sc.o[j]);
      const double gcj = gc[j] + gh[j] * sc.o[j] * (1.0 - sc.tanh_c[j] * sc.tanh_c[j]);
      const double gf = gcj * sc.c_prev[j];
      const double gi = gcj * sc.g[j];
      const double gg = gcj * sc.i[j];
      const double gai = gi * sc.i[j] * (1.0 - sc.i[j]);
      const double gaf = gf * sc.f[j] * (1.0 - sc.f[j]);
      const double gag = gg * (1.0 - sc.g[j] * sc.g[j]);
      g_bi[j] += gai;
      g_bf[j] += gaf;
      g_bc[j] += gag;
      g_bo[j] += gao;
      gc[j] = gcj * sc.f[j];
      ga_i[j] = gai;
      ga_f[j] = gaf;
      ga_g[j] = gag;
      ga_o[j] = gao;
    }
    tensor gx({in_});
    tensor gh_prev({hid_});
    matvec_backward(w_xi, sc.x, ga_i, g_xi, gx);
    matvec_backward(w_xf, sc.x, ga_f, g_xf, gx);
    matvec_backward(w_xc, sc.x, ga_g, g_xc, gx);
    matvec_backward(w_xo, sc.x, ga_o, g_xo, gx);
    matvec_backward(w_hi, sc.h_prev, ga_i, g_hi, gh_prev);
    matvec_backward(w_hf, sc.h_prev, ga_f, g_hf, gh_prev);
    matvec_backward(w_hc, sc.h_prev, ga_g, g_hc, gh_prev);
    matvec_backward(w_ho, sc.h_prev, ga_o, g_ho, gh_prev);
    std::copy(gx.data.begin(), gx.data.end(),
              gx_seq.data.begin() + static_cast<std::ptrdiff_t>(t * in_));
    gh = std::move(gh_prev);
  }
  cache_.clear();
  return gx_seq;
}

std::vector<param_ref> lstm_cell::params(const std::string& prefix) {
  return {{prefix + "w_xi", &w_xi, &g_xi}, {prefix + "w_hi", &w_hi, &g_hi},
          {prefix + "w_xf", &w_xf, &g_xf}, {prefix + "w_hf", &w_hf, &g_hf},
          {prefix + "w_xc", &w_xc, &g_xc}, {prefix + "w_hc", &w_hc, &g_hc},
          {prefix + "w_xo", &w_xo, &g_xo}, {prefix + "w_ho", &w_ho, &g_ho},
          {prefix + "b_i", &b_i, &g_bi},   {prefix + "b_f", &b_f, &g_bf},
          {prefix + "b_c", &b_c, &g_bc},   {prefix + "b_o", &b_o, &g_bo}};
}

// --- adam ------------------------------------------------------------------------

void adam_update(const std::vector<param_ref>& params, adam_state& state,
                 const adam_config& cfg) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(tensor(p.value->shape));
      state.v.emplace_back(tensor(p.value->shape));
    }
  }
  if (state.m.size() != params.size())
    throw error("ShapeMismatch", "adam state does not match parameter list");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensor& value = *params[i].value;
    const tensor& grad = *params[i].grad;
    if (!value.same_shape(grad) || !value.same_shape(state.m[i]))
      throw error("ShapeMismatch", "adam parameter " + params[i].name);
    tensor& m = state.m[i];
    tensor& v = state.v[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      value[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// --- checkpoints --------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[4] = {'F', 'D', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;

void wr_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<char*>(b), 4);
}

void wr_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<char*>(b), 8);
}

std::uint32_t rd_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t rd_u64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void wr_string(std::ofstream& out, const std::string& s) {
  wr_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string rd_string(std::ifstream& in) {
  std::uint32_t n = rd_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<param_ref>& params,
                     const std::string& metadata_json) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw error("OutputUnwritable", tmp);
    out.write(kCkptMagic, 4);
    wr_u32(out, kCkptVersion);
    wr_string(out, metadata_json);
    wr_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
      wr_string(out, p.name);
      wr_u32(out, static_cast<std::uint32_t>(p.value->shape.size()));
      for (std::size_t d : p.value->shape) wr_u64(out, d);
    }
    for (const auto& p : params) {
      for (double d : p.value->data) {
        std::uint64_t v;
        std::memcpy(&v, &d, 8);
        wr_u64(out, v);
      }
    }
    if (!out) throw error("OutputUnwritable", tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw error("OutputUnwritable", "rename to " + path);
}

std::string load_checkpoint(const std::string& path, const std::vector<param_ref>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("UpstreamStageMissing", "checkpoint not found: " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, kCkptMagic, 4) != 0) throw error("BadFileFormat", path);
  if (rd_u32(in) != kCkptVersion) throw error("BadFileVersion", path);
  std::string meta = rd_string(in);
  std::uint32_t n = rd_u32(in);
  if (n != params.size())
    throw error("ShapeMismatch", "checkpoint holds " + std::to_string(n) + " tensors, model has " +
                                     std::to_string(params.size()));
  for (const auto& p : params) {
    std::string name = rd_string(in);
    if (name != p.name)
      throw error("ShapeMismatch", "checkpoint entry " + name + " vs model " + p.name);
    std::uint32_t ndim = rd_u32(in);
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = rd_u64(in);
    if (shape != p.value->shape) throw error("ShapeMismatch", "shape of " + name);
  }
  for (const auto& p : params) {
    for (auto& d : p.value->data) {
      std::uint64_t v = rd_u64(in);
      std::memcpy(&d, &v, 8);
    }
  }
  if (!in) throw error("BadFileFormat", "truncated checkpoint " + path);
  return meta;
}

std::string read_checkpoint_metadata(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("UpstreamStageMissing", "checkpoint not found: " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, kCkptMagic, 4) != 0) throw error("BadFileFormat", path);
  if (rd_u32(in) != kCkptVersion) throw error("BadFileVersion", path);
  std::string meta = rd_string(in);
  if (!in) throw error("BadFileFormat", path);
  return meta;
}

bool checkpoint_exists(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return static_cast<bool>(in);
}

}  // namespace fadacs::neural
