#include "fadacs/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fadacs/csv.hpp"
#include "fadacs/timeutil.hpp"

namespace fadacs::adapt {

using neural::param_ref;
using neural::tensor;

const char* to_string(encoder_kind k) {
  switch (k) {
    case encoder_kind::convlstm: return "convlstm";
    case encoder_kind::lstm: return "lstm";
    case encoder_kind::mlp: return "mlp";
  }
  return "?";
}

encoder_kind encoder_kind_from_string(const std::string& s) {
  if (s == "convlstm") return encoder_kind::convlstm;
  if (s == "lstm") return encoder_kind::lstm;
  if (s == "mlp") return encoder_kind::mlp;
  throw error("InvalidConfig", "unknown encoder kind: " + s);
}

namespace {

// [T x C x L] slice of one sample from the [S x T x L x C] tensor
tensor sample_input(const features::feature_tensor& f, std::size_t s) {
  tensor x({f.lookback, f.n_channels, f.n_lots});
  for (std::size_t t = 0; t < f.lookback; ++t)
    for (std::size_t l = 0; l < f.n_lots; ++l)
      for (std::size_t c = 0; c < f.n_channels; ++c)
        x.data[(t * f.n_channels + c) * f.n_lots + l] = f.at(s, t, l, c);
  return x;
}

class convlstm_encoder final : public encoder {
public:
  convlstm_encoder(const model_config& cfg, prng& rng)
      : cfg_(cfg),
        cell_(cfg.in_channels, cfg.single_cell ? cfg.code_channels : cfg.hidden, cfg.n_lots,
              cfg.kernel, rng),
        proj_kernel_({cfg.code_channels, cfg.hidden, 1}),
        proj_bias_({cfg.code_channels}),
        g_proj_kernel_({cfg.code_channels, cfg.hidden, 1}),
        g_proj_bias_({cfg.code_channels}) {
    if (!cfg_.single_cell)
      neural::glorot_fill(proj_kernel_, cfg.hidden, cfg.code_channels, rng);
  }

  tensor encode(const tensor& x) override {
    auto st = cell_.forward_sequence(x);
    if (cfg_.single_cell) return st.h;
    final_h_ = st.h;
    tensor codes = neural::conv1d_same(final_h_, proj_kernel_);
    for (std::size_t k = 0; k < cfg_.code_channels; ++k)
      for (std::size_t l = 0; l < cfg_.n_lots; ++l) codes.data[k * cfg_.n_lots + l] += proj_bias_[k];
    return codes;
  }

  tensor backward(const tensor& grad_codes) override {
    tensor gc({cell_.hidden_channels(), cfg_.n_lots});
    if (cfg_.single_cell) return cell_.backward_sequence(grad_codes, gc);
    neural::conv1d_backward_kernel(final_h_, grad_codes, g_proj_kernel_);
    for (std::size_t k = 0; k < cfg_.code_channels; ++k)
      for (std::size_t l = 0; l < cfg_.n_lots; ++l)
        g_proj_bias_[k] += grad_codes.data[k * cfg_.n_lots + l];
    tensor gh = neural::conv1d_backward_input(grad_codes, proj_kernel_, cfg_.hidden, cfg_.n_lots);
    return cell_.backward_sequence(gh, gc);
  }

  std::vector<param_ref> params(const std::string& prefix) override {
    auto out = cell_.params(prefix + "cell.");
    if (!cfg_.single_cell) {
      out.push_back({prefix + "proj.kernel", &proj_kernel_, &g_proj_kernel_});
      out.push_back({prefix + "proj.bias", &proj_bias_, &g_proj_bias_});
    }
    return out;
  }

  std::unique_ptr<encoder> clone() const override {
    return std::make_unique<convlstm_encoder>(*this);
  }

  encoder_kind kind() const override { return encoder_kind::convlstm; }

private:
  model_config cfg_;
  neural::convlstm_cell cell_;
  tensor proj_kernel_, proj_bias_, g_proj_kernel_, g_proj_bias_;
  tensor final_h_;
};

// Per-lot recurrent encoder: each lot's channel sequence is encoded on its own,
// so only temporal structure is available to it.
class lstm_encoder final : public encoder {
public:
  lstm_encoder(const model_config& cfg, prng& rng)
      : cfg_(cfg), cell_(cfg.in_channels, cfg.hidden, rng), proj_(cfg.hidden, cfg.code_channels, rng) {}

  tensor encode(const tensor& x) override {
    input_ = x;
    const std::size_t T = x.shape[0];
    tensor codes({cfg_.code_channels, cfg_.n_lots});
    for (std::size_t l = 0; l < cfg_.n_lots; ++l) {
      tensor seq({T, cfg_.in_channels});
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < cfg_.in_channels; ++c)
          seq.data[t * cfg_.in_channels + c] = x.data[(t * cfg_.in_channels + c) * cfg_.n_lots + l];
      tensor h = cell_.forward_sequence(seq);
      tensor code = proj_.forward(h);
      for (std::size_t k = 0; k < cfg_.code_channels; ++k)
        codes.data[k * cfg_.n_lots + l] = code[k];
    }
    return codes;
  }

  // replays the per-lot forward so each lot's cache is live when it is
  // back-propagated; parameter grads accumulate across lots
  tensor backward(const tensor& grad_codes) override {
    const std::size_t T = input_.shape[0];
    tensor gx({T, cfg_.in_channels, cfg_.n_lots});
    for (std::size_t l = 0; l < cfg_.n_lots; ++l) {
      tensor seq({T, cfg_.in_channels});
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < cfg_.in_channels; ++c)
          seq.data[t * cfg_.in_channels + c] =
              input_.data[(t * cfg_.in_channels + c) * cfg_.n_lots + l];
      tensor h = cell_.forward_sequence(seq);
      proj_.forward(h);
      tensor gcode({cfg_.code_channels});
      for (std::size_t k = 0; k < cfg_.code_channels; ++k)
        gcode[k] = grad_codes.data[k * cfg_.n_lots + l];
      tensor gh = proj_.backward(gcode);
      tensor gseq = cell_.backward_sequence(gh);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < cfg_.in_channels; ++c)
          gx.data[(t * cfg_.in_channels + c) * cfg_.n_lots + l] =
              gseq.data[t * cfg_.in_channels + c];
    }
    return gx;
  }

  std::vector<param_ref> params(const std::string& prefix) override {
    auto out = cell_.params(prefix + "cell.");
    for (auto p : proj_.params()) {
      p.name = prefix + "proj." + p.name;
      out.push_back(p);
    }
    return out;
  }

  std::unique_ptr<encoder> clone() const override { return std::make_unique<lstm_encoder>(*this); }
  encoder_kind kind() const override { return encoder_kind::lstm; }

private:
  model_config cfg_;
  neural::lstm_cell cell_;
  neural::dense proj_;
  tensor input_;
};

// Feed-forward encoder over the fully flattened window: time, channel and
// lot axes all collapse into one vector, so neither temporal order nor
// spatial neighbourhoods are distinguished.
class mlp_encoder final : public encoder {
public:
  mlp_encoder(const model_config& cfg, prng& rng)
      : cfg_(cfg),
        d1_(cfg.lookback * cfg.in_channels * cfg.n_lots, cfg.hidden, rng),
        d2_(cfg.hidden, cfg.code_channels * cfg.n_lots, rng) {}

  tensor encode(const tensor& x) override {
    input_flat_ = tensor({x.size()});
    input_flat_.data = x.data;
    tensor h = act_.forward(d1_.forward(input_flat_));
    tensor code = d2_.forward(h);
    tensor codes({cfg_.code_channels, cfg_.n_lots});
    codes.data = code.data;
    return codes;
  }

  tensor backward(const tensor& grad_codes) override {
    d2_.forward(act_.forward(d1_.forward(input_flat_)));
    tensor gcode({cfg_.code_channels * cfg_.n_lots});
    gcode.data = grad_codes.data;
    tensor gflat = d1_.backward(act_.backward(d2_.backward(gcode)));
    tensor gx({cfg_.lookback, cfg_.in_channels, cfg_.n_lots});
    gx.data = gflat.data;
    return gx;
  }

  std::vector<param_ref> params(const std::string& prefix) override {
    std::vector<param_ref> out;
    for (auto p : d1_.params()) {
      p.name = prefix + "d1." + p.name;
      out.push_back(p);
    }
    for (auto p : d2_.params()) {
      p.name = prefix + "d2." + p.name;
      out.push_back(p);
    }
    return out;
  }

  std::unique_ptr<encoder> clone() const override { return std::make_unique<mlp_encoder>(*this); }
  encoder_kind kind() const override { return encoder_kind::mlp; }

private:
  model_config cfg_;
  neural::dense d1_, d2_;
  neural::relu act_;
  tensor input_flat_;
};

std::unique_ptr<encoder> make_encoder(const model_config& cfg, prng& rng) {
  switch (cfg.kind) {
    case encoder_kind::convlstm: return std::make_unique<convlstm_encoder>(cfg, rng);
    case encoder_kind::lstm: return std::make_unique<lstm_encoder>(cfg, rng);
    case encoder_kind::mlp: return std::make_unique<mlp_encoder>(cfg, rng);
  }
  throw error("InvalidConfig", "bad encoder kind");
}

}  // namespace

model::model(const model& o) : cfg(o.cfg), enc(o.enc ? o.enc->clone() : nullptr),
                               regressor(o.regressor) {}

model& model::operator=(const model& o) {
  if (this == &o) return *this;
  cfg = o.cfg;
  enc = o.enc ? o.enc->clone() : nullptr;
  regressor = o.regressor;
  return *this;
}

std::vector<param_ref> model::params() {
  auto out = enc->params("encoder.");
  for (auto p : regressor.params("regressor.")) out.push_back(p);
  return out;
}

tensor model::predict(const tensor& x) {
  tensor codes = enc->encode(x);
  tensor preds({cfg.n_lots});
  tensor code({cfg.code_channels});
  for (std::size_t l = 0; l < cfg.n_lots; ++l) {
    for (std::size_t k = 0; k < cfg.code_channels; ++k)
      code[k] = codes.data[k * cfg.n_lots + l];
    preds[l] = regressor.forward(code)[0];
  }
  return preds;
}

model build_model(const model_config& cfg, std::uint64_t seed) {
  prng rng(derive_seed(seed, "model"));
  model m;
  m.cfg = cfg;
  m.enc = make_encoder(cfg, rng);
  m.regressor.push(std::make_unique<neural::dense>(cfg.code_channels, 1, rng));
  m.regressor.push(std::make_unique<neural::sigmoid>());
  return m;
}

neural::layer_stack build_discriminator(const model_config& cfg, std::uint64_t seed) {
  prng rng(derive_seed(seed, "discriminator"));
  neural::layer_stack d;
  d.push(std::make_unique<neural::dense>(cfg.code_channels, cfg.disc_hidden, rng));
  d.push(std::make_unique<neural::relu>());
  d.push(std::make_unique<neural::dense>(cfg.disc_hidden, cfg.disc_hidden, rng));
  d.push(std::make_unique<neural::relu>());
  if (cfg.head == discriminator_head::two_logit_log_softmax) {
    d.push(std::make_unique<neural::dense>(cfg.disc_hidden, 2, rng));
    d.push(std::make_unique<neural::log_softmax>());
  } else {
    d.push(std::make_unique<neural::dense>(cfg.disc_hidden, 1, rng));
  }
  return d;
}

double rmse_loss(const std::vector<double>& pred, const std::vector<double>& truth,
                 std::vector<double>* grad) {
  if (pred.size() != truth.size() || pred.empty())
    throw error("ShapeMismatch", "rmse_loss needs equal non-empty vectors");
  double mse = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - truth[i];
    mse += d * d;
  }
  mse /= static_cast<double>(pred.size());
  double j = std::sqrt(mse);
  if (grad) {
    grad->assign(pred.size(), 0.0);
    double denom = static_cast<double>(pred.size()) * std::max(j, 1e-12);
    for (std::size_t i = 0; i < pred.size(); ++i) (*grad)[i] = (pred[i] - truth[i]) / denom;
  }
  return j;
}

namespace {

struct snapshot {
  std::vector<tensor> values;
};

snapshot take_snapshot(const std::vector<param_ref>& params) {
  snapshot s;
  s.values.reserve(params.size());
  for (const auto& p : params) s.values.push_back(*p.value);
  return s;
}

void restore_snapshot(const std::vector<param_ref>& params, const snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = s.values[i];
}

std::vector<std::size_t> shuffled_indices(std::size_t begin, std::size_t end, prng& rng) {
  std::vector<std::size_t> idx;
  idx.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

double eval_range_rmse(model& m, const features::window_dataset& data, std::size_t begin,
                       std::size_t end) {
  if (begin >= end) return std::numeric_limits<double>::quiet_NaN();
  double mse = 0;
  std::size_t n = 0;
  for (std::size_t s = begin; s < end; ++s) {
    tensor x = sample_input(data.features, s);
    tensor p = m.predict(x);
    for (std::size_t l = 0; l < data.targets.n_lots; ++l) {
      double d = p[l] - data.targets.at(s, l);
      mse += d * d;
      ++n;
    }
  }
  return std::sqrt(mse / static_cast<double>(n));
}

// Minimizes batch RMSE with Adam. Two passes per batch: one to evaluate the
// joint loss, one to push per-sample gradients through fresh caches.
training_curves fit_rmse(model& m, const features::window_dataset& data, const train_config& cfg,
                         std::size_t train_begin, std::size_t train_end, std::size_t val_begin,
                         std::size_t val_end) {
  training_curves curves;
  if (train_end <= train_begin)
    throw error("SeriesTooShort", "empty training range");
  auto params = m.params();
  neural::adam_state opt;
  neural::adam_config adam{cfg.lr, 0.9, 0.999, 1e-8};
  prng rng(derive_seed(cfg.seed, "fit"));

  snapshot best = take_snapshot(params);
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;
  const std::size_t L = data.targets.n_lots;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = shuffled_indices(train_begin, train_end, rng);
    std::size_t n_batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
    if (cfg.batches_per_epoch > 0) n_batches = std::min(n_batches, cfg.batches_per_epoch);

    double epoch_loss = 0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      std::size_t lo = b * cfg.batch_size;
      std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                     order.begin() + static_cast<std::ptrdiff_t>(hi));
      std::vector<double> preds, truths;
      preds.reserve(batch.size() * L);
      truths.reserve(batch.size() * L);
      for (std::size_t s : batch) {
        tensor x = sample_input(data.features, s);
        tensor p = m.predict(x);
        for (std::size_t l = 0; l < L; ++l) {
          preds.push_back(p[l]);
          truths.push_back(data.targets.at(s, l));
        }
      }
      std::vector<double> grad;
      double loss = rmse_loss(preds, truths, &grad);
      if (!std::isfinite(loss)) throw error("Divergence", "loss became non-finite");
      epoch_loss += loss;

      neural::zero_grads(params);
      for (std::size_t si = 0; si < batch.size(); ++si) {
        tensor x = sample_input(data.features, batch[si]);
        tensor codes = m.enc->encode(x);
        tensor gcodes({m.cfg.code_channels, L});
        tensor code({m.cfg.code_channels});
        for (std::size_t l = 0; l < L; ++l) {
          for (std::size_t k = 0; k < m.cfg.code_channels; ++k)
            code[k] = codes.data[k * L + l];
          m.regressor.forward(code);
          tensor gp({1});
          gp[0] = grad[si * L + l];
          tensor gc = m.regressor.backward(gp);
          for (std::size_t k = 0; k < m.cfg.code_channels; ++k)
            gcodes.data[k * L + l] = gc[k];
        }
        m.enc->backward(gcodes);
      }
      neural::adam_update(params, opt, adam);
    }

    epoch_stats st;
    st.epoch = epoch;
    st.train_loss = n_batches ? epoch_loss / static_cast<double>(n_batches) : 0.0;
    double val = eval_range_rmse(m, data, val_begin, val_end);
    st.val_loss = std::isnan(val) ? st.train_loss : val;
    curves.epochs.push_back(st);

    if (st.val_loss < best_val) {
      best_val = st.val_loss;
      best = take_snapshot(params);
      best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience && cfg.patience > 0) {
      break;
    }
  }
  if (!curves.epochs.empty()) {
    restore_snapshot(params, best);
    curves.best_epoch = best_epoch;
  }
  return curves;
}

}  // namespace

training_curves pretrain_source(model& m, const features::window_dataset& data,
                                const train_config& cfg) {
  return fit_rmse(m, data, cfg, 0, data.train_end, data.train_end, data.val_end);
}

training_curves baseline_train(model& m, const features::window_dataset& data,
                               const train_config& cfg) {
  return fit_rmse(m, data, cfg, 0, data.train_end, data.train_end, data.val_end);
}

training_curves parameter_transfer(model& m, const features::window_dataset& target_labeled,
                                   const train_config& cfg) {
  return fit_rmse(m, target_labeled, cfg, 0, target_labeled.train_end, target_labeled.train_end,
                  target_labeled.val_end);
}

namespace {

// log D_src and its gradient at the discriminator output, per head
struct head_loss {
  double log_p_src;       // log D(code)
  double log_p_tgt;       // log(1 - D(code))
};

head_loss head_eval(const tensor& out, discriminator_head head) {
  if (head == discriminator_head::two_logit_log_softmax) {
    return {out[0], out[1]};  // log-softmax entries are the two log-probabilities
  }
  // single raw logit z: log sigma(z) = -softplus(-z), log(1 - sigma(z)) = -softplus(z)
  auto softplus = [](double v) { return v > 30 ? v : std::log1p(std::exp(v)); };
  double z = out[0];
  return {-softplus(-z), -softplus(z)};
}

// upstream gradient for d(-w * log_p)/d(out), written into g
void head_grad(const tensor& out, discriminator_head head, bool source_term, double w, tensor& g) {
  if (head == discriminator_head::two_logit_log_softmax) {
    g = tensor({2});
    g[source_term ? 0 : 1] = -w;
    return;
  }
  double z = out[0];
  double s = 1.0 / (1.0 + std::exp(-z));
  g = tensor({1});
  g[0] = source_term ? w * (s - 1.0) : w * s;
}

std::vector<tensor> code_columns(const tensor& codes) {
  const std::size_t K = codes.shape[0];
  const std::size_t L = codes.shape[1];
  std::vector<tensor> cols;
  cols.reserve(L);
  for (std::size_t l = 0; l < L; ++l) {
    tensor c({K});
    for (std::size_t k = 0; k < K; ++k) c[k] = codes.data[k * L + l];
    cols.push_back(std::move(c));
  }
  return cols;
}

}  // namespace

double adversarial_d_loss(neural::layer_stack& disc, const std::vector<tensor>& src_codes,
                          const std::vector<tensor>& tgt_codes, discriminator_head head) {
  if (src_codes.empty() || tgt_codes.empty())
    throw error("EmptyBatch", "adversarial loss needs codes from both domains");
  double loss = 0;
  for (const auto& c : src_codes) loss -= head_eval(disc.forward(c), head).log_p_src;
  loss /= static_cast<double>(src_codes.size());
  double tgt = 0;
  for (const auto& c : tgt_codes) tgt -= head_eval(disc.forward(c), head).log_p_tgt;
  return loss + tgt / static_cast<double>(tgt_codes.size());
}

double adversarial_m_loss(neural::layer_stack& disc, const std::vector<tensor>& tgt_codes,
                          discriminator_head head) {
  if (tgt_codes.empty()) throw error("EmptyBatch", "adversarial loss needs target codes");
  double loss = 0;
  for (const auto& c : tgt_codes) loss -= head_eval(disc.forward(c), head).log_p_src;
  return loss / static_cast<double>(tgt_codes.size());
}

double discriminator_accuracy(neural::layer_stack& disc, encoder& source_enc, encoder& target_enc,
                              const features::feature_tensor& source_x, const sample_range& sr,
                              const features::feature_tensor& target_x, const sample_range& tr,
                              discriminator_head head) {
  std::size_t correct = 0, total = 0;
  auto judge = [&](const tensor& out) {
    if (head == discriminator_head::two_logit_log_softmax) return out[0] > out[1];
    return out[0] > 0.0;
  };
  for (std::size_t s = sr.begin; s < sr.end; ++s) {
    for (const auto& c : code_columns(source_enc.encode(sample_input(source_x, s)))) {
      correct += judge(disc.forward(c)) ? 1 : 0;
      ++total;
    }
  }
  for (std::size_t s = tr.begin; s < tr.end; ++s) {
    for (const auto& c : code_columns(target_enc.encode(sample_input(target_x, s)))) {
      correct += judge(disc.forward(c)) ? 0 : 1;
      ++total;
    }
  }
  if (total == 0) throw error("EmptyBatch", "no held-out codes");
  return static_cast<double>(correct) / static_cast<double>(total);
}

adapt_result adversarial_adapt(model& source_model, const features::window_dataset& source,
                               const features::window_dataset& target, const train_config& cfg) {
  adapt_result out;
  out.target_encoder = source_model.enc->clone();  // Mt starts from Ms
  out.discriminator = build_discriminator(source_model.cfg, cfg.seed);

  auto mt_params = out.target_encoder->params("encoder.");
  auto d_params = out.discriminator.params("discriminator.");
  neural::adam_state mt_opt, d_opt;
  neural::adam_config adam{cfg.lr, 0.9, 0.999, 1e-8};
  prng rng(derive_seed(cfg.seed, "adapt"));

  const std::size_t L = source.features.n_lots;
  if (target.features.n_lots != L)
    throw error("ShapeMismatch", "source and target lot axes differ");
  const std::size_t n_src = source.train_end;
  const std::size_t n_tgt = target.train_end;
  if (n_src == 0 || n_tgt == 0) throw error("SeriesTooShort", "empty adaptation ranges");

  std::size_t iters = (std::min(n_src, n_tgt) + cfg.batch_size - 1) / cfg.batch_size;
  if (cfg.batches_per_epoch > 0) iters = std::min(iters, cfg.batches_per_epoch);

  // Checkpoint policy, label-free: the target encoder is kept at the FIRST
  // equilibrium crossing - the first epoch where the held-out discriminator
  // accuracy falls back into (.., 0.65] after D has demonstrated separation
  // (>= 0.7). Stopping at the earliest aligned state keeps the accumulated
  // drift from Ms minimal; chasing the most-confused D instead rewards
  // encoders that destroy structure. If D never separates the domains there
  // is nothing to align and Mt keeps its source initialization.
  snapshot best_mt = take_snapshot(mt_params);
  snapshot best_d = take_snapshot(d_params);
  snapshot prev_mt = best_mt;
  snapshot prev_d = best_d;
  double prev_gap = std::numeric_limits<double>::infinity();
  std::size_t prev_epoch = 0;
  double peak_acc = 0.0;
  bool selected = false;
  std::size_t collapse_run = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double d_loss_sum = 0, m_loss_sum = 0, d_acc_sum = 0;
    double min_step_acc = 1.0;
    std::size_t d_steps = 0;
    for (std::size_t it = 0; it < iters; ++it) {
      for (std::size_t ds = 0; ds < std::max<std::size_t>(1, cfg.d_steps_per_g_step); ++ds) {
        // ---- D step: classify frozen Ms codes vs current Mt codes
        std::vector<tensor> src_cols, tgt_cols;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
          std::size_t s = rng.below(n_src);
          auto cols = code_columns(source_model.enc->encode(sample_input(source.features, s)));
          for (auto& c : cols) src_cols.push_back(std::move(c));
        }
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
          std::size_t s = rng.below(n_tgt);
          auto cols = code_columns(out.target_encoder->encode(sample_input(target.features, s)));
          for (auto& c : cols) tgt_cols.push_back(std::move(c));
        }
        neural::zero_grads(d_params);
        double d_loss = 0;
        std::size_t d_correct = 0;
        const double w_src = 1.0 / static_cast<double>(src_cols.size());
        const double w_tgt = 1.0 / static_cast<double>(tgt_cols.size());
        tensor g;
        for (const auto& c : src_cols) {
          tensor o = out.discriminator.forward(c);
          auto hl = head_eval(o, source_model.cfg.head);
          d_loss -= w_src * hl.log_p_src;
          d_correct += (source_model.cfg.head == discriminator_head::two_logit_log_softmax
                            ? o[0] > o[1]
                            : o[0] > 0.0)
                           ? 1
                           : 0;
          head_grad(o, source_model.cfg.head, true, w_src, g);
          out.discriminator.backward(g);
        }
        for (const auto& c : tgt_cols) {
          tensor o = out.discriminator.forward(c);
          auto hl = head_eval(o, source_model.cfg.head);
          d_loss -= w_tgt * hl.log_p_tgt;
          d_correct += (source_model.cfg.head == discriminator_head::two_logit_log_softmax
                            ? o[0] > o[1]
                            : o[0] > 0.0)
                           ? 0
                           : 1;
          head_grad(o, source_model.cfg.head, false, w_tgt, g);
          out.discriminator.backward(g);
        }
        if (!std::isfinite(d_loss)) throw error("Divergence", "discriminator loss non-finite");
        neural::adam_update(d_params, d_opt, adam);
        d_loss_sum += d_loss;
        double step_acc =
            static_cast<double>(d_correct) / static_cast<double>(src_cols.size() + tgt_cols.size());
        d_acc_sum += step_acc;
        min_step_acc = std::min(min_step_acc, step_acc);
        ++d_steps;
      }

      // ---- Mt step: make target codes look source-born to D. D's parameter
      // grads collect pollution here; the next D step zeroes them first.
      neural::zero_grads(mt_params);
      double m_loss = 0;
      const double w = 1.0 / static_cast<double>(cfg.batch_size * L);
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        std::size_t s = rng.below(n_tgt);
        tensor x = sample_input(target.features, s);
        tensor codes = out.target_encoder->encode(x);
        tensor gcodes({source_model.cfg.code_channels, L});
        tensor code({source_model.cfg.code_channels});
        tensor g2;
        for (std::size_t l = 0; l < L; ++l) {
          for (std::size_t k = 0; k < source_model.cfg.code_channels; ++k)
            code[k] = codes.data[k * L + l];
          tensor o = out.discriminator.forward(code);
          m_loss -= w * head_eval(o, source_model.cfg.head).log_p_src;
          head_grad(o, source_model.cfg.head, true, w, g2);
          tensor gc = out.discriminator.backward(g2);
          for (std::size_t k = 0; k < source_model.cfg.code_channels; ++k)
            gcodes.data[k * L + l] = gc[k];
        }
        out.target_encoder->backward(gcodes);
      }
      if (!std::isfinite(m_loss)) throw error("Divergence", "encoder loss non-finite");
      neural::adam_update(mt_params, mt_opt, adam);
      m_loss_sum += m_loss;
    }

    epoch_stats st;
    st.epoch = epoch;
    st.d_loss = d_steps ? d_loss_sum / static_cast<double>(d_steps) : 0.0;
    st.m_loss = iters ? m_loss_sum / static_cast<double>(iters) : 0.0;
    st.d_accuracy = d_steps ? d_acc_sum / static_cast<double>(d_steps) : 0.0;
    st.d_holdout_accuracy = st.d_accuracy;
    if (source.val_end > source.train_end && target.val_end > target.train_end) {
      st.d_holdout_accuracy = discriminator_accuracy(
          out.discriminator, *source_model.enc, *out.target_encoder, source.features,
          {source.train_end, source.val_end}, target.features,
          {target.train_end, target.val_end}, source_model.cfg.head);
    }
    out.curves.epochs.push_back(st);

    double gap = std::abs(st.d_holdout_accuracy - 0.5);
    if (peak_acc >= 0.7 && st.d_holdout_accuracy <= 0.65) {
      if (gap <= prev_gap) {
        best_mt = take_snapshot(mt_params);
        best_d = take_snapshot(d_params);
        out.curves.best_epoch = epoch;
      } else {
        best_mt = prev_mt;
        best_d = prev_d;
        out.curves.best_epoch = prev_epoch;
      }
      selected = true;
      break;
    }
    peak_acc = std::max(peak_acc, st.d_holdout_accuracy);
    prev_gap = gap;
    prev_epoch = epoch;
    prev_mt = take_snapshot(mt_params);
    prev_d = take_snapshot(d_params);

    // pinned means every single D batch in the epoch was classified perfectly
    if (d_steps > 0 && min_step_acc >= 1.0) {
      if (++collapse_run >= cfg.patience && cfg.patience > 0)
        out.curves.mode_collapse_warning = true;
    } else {
      collapse_run = 0;
    }
  }
  // when D never separated the domains there was nothing to align, and the
  // accumulated Mt steps were noise against a blind critic: keep the source
  // initialization in that case (best_mt still holds the entry snapshot)
  restore_snapshot(mt_params, best_mt);
  restore_snapshot(d_params, best_d);
  if (!selected) out.curves.best_epoch = 0;
  return out;
}

void write_curves_csv(const std::string& path, const training_curves& curves) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(curves.epochs.size());
  for (const auto& e : curves.epochs)
    rows.push_back({std::to_string(e.epoch), csv::format_double(e.train_loss),
                    csv::format_double(e.val_loss), csv::format_double(e.d_loss),
                    csv::format_double(e.m_loss), csv::format_double(e.d_accuracy),
                    csv::format_double(e.d_holdout_accuracy)});
  csv::write_file(path,
                  {"epoch", "train_loss", "val_loss", "d_loss", "m_loss", "d_accuracy",
                   "d_holdout_accuracy"},
                  rows);
}

std::vector<double> assemble_predict(encoder& enc, neural::layer_stack& regressor,
                                     const features::feature_tensor& x,
                                     const sample_range& range) {
  if (range.end > x.n_samples || range.begin >= range.end)
    throw error("ShapeMismatch", "bad prediction range");
  const std::size_t L = x.n_lots;
  std::vector<double> out;
  out.reserve(range.size() * L);
  for (std::size_t s = range.begin; s < range.end; ++s) {
    tensor codes = enc.encode(sample_input(x, s));
    tensor code({codes.shape[0]});
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t k = 0; k < codes.shape[0]; ++k) code[k] = codes.data[k * L + l];
      out.push_back(regressor.forward(code)[0]);
    }
  }
  return out;
}

std::vector<double> model_predict_range(model& m, const features::feature_tensor& x,
                                        const sample_range& range) {
  return assemble_predict(*m.enc, m.regressor, x, range);
}

ha_model::ha_model(const features::occupancy_grid& grid, std::size_t history_steps) {
  if (history_steps > grid.n_steps()) history_steps = grid.n_steps();
  if (history_steps == 0) throw error("NoHistory", "empty history window");
  for (std::size_t l = 0; l < grid.n_lots(); ++l) {
    int lot = grid.lot_ids[l];
    for (std::size_t t = 0; t < history_steps; ++t) {
      second_t ts = to_second(grid.timestamps[t]);
      std::pair<int, int> key{timeutil::day_of_week(ts), timeutil::minute_of_day(ts)};
      auto& st = weekly_[lot][key];
      st.sum += grid.at(l, t);
      st.n += 1;
      auto& g = global_[lot];
      g.sum += grid.at(l, t);
      g.n += 1;
    }
  }
}

double ha_model::predict(int lot_id, minute_t t) const {
  auto git = global_.find(lot_id);
  if (git == global_.end() || git->second.n == 0)
    throw error("NoHistory", "lot " + std::to_string(lot_id));
  second_t ts = to_second(t);
  std::pair<int, int> key{timeutil::day_of_week(ts), timeutil::minute_of_day(ts)};
  auto wit = weekly_.find(lot_id);
  if (wit != weekly_.end()) {
    auto sit = wit->second.find(key);
    if (sit != wit->second.end() && sit->second.n > 0)
      return sit->second.sum / static_cast<double>(sit->second.n);
  }
  return git->second.sum / static_cast<double>(git->second.n);
}

}  // namespace fadacs::adapt
