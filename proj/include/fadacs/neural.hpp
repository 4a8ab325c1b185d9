#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fadacs/common.hpp"
#include "fadacs/prng.hpp"

namespace fadacs::neural {

// Dense row-major float64 tensor.
struct tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  tensor() = default;
  explicit tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(count(shape), 0.0);
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // [rows x cols] accessors
  double& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  bool same_shape(const tensor& o) const { return shape == o.shape; }
};

void require_shape(const tensor& t, const std::vector<std::size_t>& shape, const char* what);

struct param_ref {
  std::string name;
  tensor* value;
  tensor* grad;
};

void zero_grads(const std::vector<param_ref>& params);

// Glorot-uniform fill for weight tensors: bound = sqrt(6 / (fan_in + fan_out)).
void glorot_fill(tensor& t, std::size_t fan_in, std::size_t fan_out, prng& rng);

// 1-D same-size convolution over the trailing spatial axis, cross-correlation
// orientation, zero padding: y[o][p] = sum_i sum_d x[i][p+d-k/2] K[o][i][d].
tensor conv1d_same(const tensor& x, const tensor& kernel);
tensor conv1d_backward_input(const tensor& grad_y, const tensor& kernel,
                             std::size_t in_channels, std::size_t spatial);
void conv1d_backward_kernel(const tensor& x, const tensor& grad_y, tensor& grad_kernel);

// --- feed-forward layers -----------------------------------------------------

class layer {
public:
  virtual ~layer() = default;
  virtual tensor forward(const tensor& x) = 0;
  virtual tensor backward(const tensor& grad_out) = 0;  // throws "NoForwardRecorded"
  virtual std::vector<param_ref> params() { return {}; }
  virtual std::string kind() const = 0;
  virtual std::unique_ptr<layer> clone() const = 0;
};

class dense : public layer {
public:
  dense(std::size_t in, std::size_t out, prng& rng);
  tensor forward(const tensor& x) override;
  tensor backward(const tensor& grad_out) override;
  std::vector<param_ref> params() override;
  std::string kind() const override { return "dense"; }
  std::unique_ptr<layer> clone() const override;

  tensor weight;  // [out x in]
  tensor bias;    // [out]
  tensor grad_weight, grad_bias;

private:
  tensor input_;
  bool have_input_ = false;
};

class relu : public layer {
public:
  tensor forward(const tensor& x) override;
  tensor backward(const tensor& grad_out) override;  // subgradient 0 at exactly 0
  std::string kind() const override { return "relu"; }
  std::unique_ptr<layer> clone() const override { return std::make_unique<relu>(*this); }

private:
  tensor input_;
  bool have_input_ = false;
};

class sigmoid : public layer {
public:
  tensor forward(const tensor& x) override;
  tensor backward(const tensor& grad_out) override;
  std::string kind() const override { return "sigmoid"; }
  std::unique_ptr<layer> clone() const override { return std::make_unique<sigmoid>(*this); }

private:
  tensor output_;
  bool have_output_ = false;
};

class log_softmax : public layer {
public:
  tensor forward(const tensor& x) override;
  tensor backward(const tensor& grad_out) override;
  std::string kind() const override { return "log_softmax"; }
  std::unique_ptr<layer> clone() const override { return std::make_unique<log_softmax>(*this); }

private:
  tensor output_;
  bool have_output_ = false;
};

// Ordered feed-forward composition with recorded intermediates.
class layer_stack {
public:
  layer_stack() = default;
  layer_stack(const layer_stack& o);
  layer_stack& operator=(const layer_stack& o);
  layer_stack(layer_stack&&) = default;
  layer_stack& operator=(layer_stack&&) = default;

  void push(std::unique_ptr<layer> l) { layers_.push_back(std::move(l)); }
  tensor forward(const tensor& x);
  tensor backward(const tensor& grad_out);  // returns input gradient
  std::vector<param_ref> params(const std::string& prefix = "");
  std::size_t size() const { return layers_.size(); }
  layer& at(std::size_t i) { return *layers_[i]; }

private:
  std::vector<std::unique_ptr<layer>> layers_;
};

// --- recurrent cells ----------------------------------------------------------

struct convlstm_state {
  tensor h;  // [hidden x spatial]
  tensor c;  // [hidden x spatial]
};

// ConvLSTM cell with convolutional input/hidden transforms and elementwise
// peephole terms from the cell state:
//   i = sig(Wxi*X + Whi*H + Wci.C + bi)
//   f = sig(Wxf*X + Whf*H + Wcf.C + bf)
//   C' = f.C + i.tanh(Wxc*X + Whc*H + bc)
//   o = sig(Wxo*X + Who*H + Wco.C' + bo)
//   H' = o.tanh(C')
class convlstm_cell {
public:
  convlstm_cell(std::size_t in_channels, std::size_t hidden_channels, std::size_t spatial,
                std::size_t kernel, prng& rng);

  convlstm_state zero_state() const;
  convlstm_state step(const tensor& x, const convlstm_state& prev);  // records cache

  // forward over a [T x in x spatial] sequence from the zero state
  convlstm_state forward_sequence(const tensor& x_seq);
  // BPTT from gradients at the final state; returns gradient w.r.t. x_seq
  tensor backward_sequence(const tensor& grad_h, const tensor& grad_c);

  void clear_cache() { cache_.clear(); }
  std::vector<param_ref> params(const std::string& prefix = "");

  std::size_t in_channels() const { return in_ch_; }
  std::size_t hidden_channels() const { return hid_; }
  std::size_t spatial() const { return spatial_; }
  std::size_t kernel() const { return k_; }

  tensor w_xi, w_hi, w_xf, w_hf, w_xc, w_hc, w_xo, w_ho;  // [hid x in/hid x k]
  tensor w_ci, w_cf, w_co;                                // [hid x spatial]
  tensor b_i, b_f, b_c, b_o;                              // [hid]
  tensor g_xi, g_hi, g_xf, g_hf, g_xc, g_hc, g_xo, g_ho, g_ci, g_cf, g_co, g_bi, g_bf, g_bc, g_bo;

private:
  struct step_cache {
    tensor x, h_prev, c_prev, i, f, g, c, o, tanh_c;
  };
  std::size_t in_ch_, hid_, spatial_, k_;
  std::vector<step_cache> cache_;
};

// Canonical LSTM (no peepholes) over plain vectors.
class lstm_cell {
public:
  lstm_cell(std::size_t in_dim, std::size_t hidden_dim, prng& rng);

  // forward over a [T x in] sequence from zero state; returns final h
  tensor forward_sequence(const tensor& x_seq);
  tensor backward_sequence(const tensor& grad_h);  // returns grad w.r.t. x_seq

  // single step (h, c in/out), records cache
  void step(const tensor& x, tensor& h, tensor& c);
  void clear_cache() { cache_.clear(); }
  std::vector<param_ref> params(const std::string& prefix = "");

  std::size_t in_dim() const { return in_; }
  std::size_t hidden_dim() const { return hid_; }

  tensor w_xi, w_hi, w_xf, w_hf, w_xc, w_hc, w_xo, w_ho;  // [hid x in/hid]
  tensor b_i, b_f, b_c, b_o;                              // [hid]
  tensor g_xi, g_hi, g_xf, g_hf, g_xc, g_hc, g_xo, g_ho, g_bi, g_bf, g_bc, g_bo;

private:
  struct step_cache {
    tensor x, h_prev, c_prev, i, f, g, c, o, tanh_c;
  };
  std::size_t in_, hid_;
  std::vector<step_cache> cache_;
};

// --- optimizer ----------------------------------------------------------------

struct adam_state {
  std::vector<tensor> m, v;
  std::int64_t t = 0;
};

struct adam_config {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam over the parameter list; state is created
// lazily on first call and must stay paired with the same parameter order.
void adam_update(const std::vector<param_ref>& params, adam_state& state,
                 const adam_config& cfg = {});

// --- checkpoints ----------------------------------------------------------------

// "FDCK" magic, version, embedded JSON metadata, named shape manifest,
// float64 little-endian payload. Written atomically (temp file + rename).
void save_checkpoint(const std::string& path, const std::vector<param_ref>& params,
                     const std::string& metadata_json);
// Loads values into the given params (names and shapes must match); returns metadata.
std::string load_checkpoint(const std::string& path, const std::vector<param_ref>& params);
std::string read_checkpoint_metadata(const std::string& path);
bool checkpoint_exists(const std::string& path);

}  // namespace fadacs::neural
