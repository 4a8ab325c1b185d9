#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fadacs/features.hpp"
#include "fadacs/neural.hpp"

namespace fadacs::adapt {

enum class encoder_kind { convlstm, lstm, mlp };

const char* to_string(encoder_kind k);
encoder_kind encoder_kind_from_string(const std::string& s);

enum class discriminator_head { two_logit_log_softmax, one_logit_sigmoid };

// Maps one input window [T x C x L] to per-lot latent codes [K x L]. The
// ConvLSTM encoder sees all lots jointly through its spatial convolution; the
// LSTM and MLP encoders process each lot's own channels independently.
class encoder {
public:
  virtual ~encoder() = default;
  virtual neural::tensor encode(const neural::tensor& x) = 0;
  // gradient w.r.t. codes -> accumulates parameter grads, returns input grad
  virtual neural::tensor backward(const neural::tensor& grad_codes) = 0;
  virtual std::vector<neural::param_ref> params(const std::string& prefix) = 0;
  virtual std::unique_ptr<encoder> clone() const = 0;
  virtual encoder_kind kind() const = 0;
};

struct model_config {
  encoder_kind kind = encoder_kind::convlstm;
  std::size_t in_channels = 16;
  std::size_t lookback = 6;
  std::size_t n_lots = 1;
  std::size_t hidden = 200;         // hidden channels / units
  std::size_t code_channels = 60;   // encoder output K
  std::size_t kernel = 3;           // convlstm only
  bool single_cell = false;         // convlstm without the 1x1 projection (in -> K direct)
  std::size_t disc_hidden = 100;
  discriminator_head head = discriminator_head::two_logit_log_softmax;
};

// Encoder + regressor (Dense(K,1) + Sigmoid applied at each lot position).
struct model {
  model_config cfg;
  std::unique_ptr<encoder> enc;
  neural::layer_stack regressor;

  model() = default;
  model(const model& o);
  model& operator=(const model& o);
  model(model&&) = default;
  model& operator=(model&&) = default;

  std::vector<neural::param_ref> params();
  // predictions in (0,1), one per lot
  neural::tensor predict(const neural::tensor& x);
};

model build_model(const model_config& cfg, std::uint64_t seed);
neural::layer_stack build_discriminator(const model_config& cfg, std::uint64_t seed);

struct train_config {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t d_steps_per_g_step = 1;
  std::size_t patience = 10;          // early stop / mode-collapse window
  std::size_t batches_per_epoch = 0;  // 0 = full pass over the training range
};

struct epoch_stats {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double d_loss = 0;
  double m_loss = 0;
  double d_accuracy = 0;          // mean over the epoch's training batches
  double d_holdout_accuracy = 0;  // end-of-epoch accuracy on the val ranges
};

struct training_curves {
  std::vector<epoch_stats> epochs;
  bool mode_collapse_warning = false;
  std::size_t best_epoch = 0;
};

// batch RMSE and its gradient w.r.t. predictions
double rmse_loss(const std::vector<double>& pred, const std::vector<double>& truth,
                 std::vector<double>* grad = nullptr);

struct sample_range {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

// Stage 1: minimize RMSE(F(M(X)), Y) on the training range; returns the
// best-validation checkpoint. Throws error("Divergence") on non-finite loss.
training_curves pretrain_source(model& m, const features::window_dataset& data,
                                const train_config& cfg);

// Shared loop for the MLP / LSTM / ConvLSTM baselines.
training_curves baseline_train(model& m, const features::window_dataset& data,
                               const train_config& cfg);

// Stage 2 (Fig. 4): alternating updates of D (tell source codes from target
// codes) and the target encoder (fool D), with the source encoder frozen.
//   L_D = -E[log D_src(Ms(Xs))] - E[log(1 - D_src(Mt(Xt)))]
//   L_M = -E[log D_src(Mt(Xt))]
struct adapt_result {
  std::unique_ptr<encoder> target_encoder;
  neural::layer_stack discriminator;
  training_curves curves;
};

adapt_result adversarial_adapt(model& source_model, const features::window_dataset& source,
                               const features::window_dataset& target, const train_config& cfg);

// Stage 3: predictions of F(Mt(Xt)) over a sample range, row-major [samples x lots].
std::vector<double> assemble_predict(encoder& enc, neural::layer_stack& regressor,
                                     const features::feature_tensor& x, const sample_range& range);
std::vector<double> model_predict_range(model& m, const features::feature_tensor& x,
                                        const sample_range& range);

// Discriminator accuracy over held-out codes from both domains.
double discriminator_accuracy(neural::layer_stack& disc, encoder& source_enc, encoder& target_enc,
                              const features::feature_tensor& source_x, const sample_range& sr,
                              const features::feature_tensor& target_x, const sample_range& tr,
                              discriminator_head head);

// Historical average baseline keyed by (lot, day-of-week, minute-of-day).
class ha_model {
public:
  ha_model(const features::occupancy_grid& grid, std::size_t history_steps);

  // mean occupancy of the matching weekly slot, else the lot's global mean;
  // throws error("NoHistory") for a lot with no history at all
  double predict(int lot_id, minute_t t) const;

private:
  struct slot_stat {
    double sum = 0;
    std::size_t n = 0;
  };
  std::map<int, std::map<std::pair<int, int>, slot_stat>> weekly_;
  std::map<int, slot_stat> global_;
};

// Few-shot parameter transfer: continue RMSE training from source weights.
training_curves parameter_transfer(model& m, const features::window_dataset& target_labeled,
                                   const train_config& cfg);

// adversarial losses on explicit code batches (the Eq. 2 terms); exposed for
// direct checking against hand-rolled evaluations
double adversarial_d_loss(neural::layer_stack& disc, const std::vector<neural::tensor>& src_codes,
                          const std::vector<neural::tensor>& tgt_codes, discriminator_head head);
double adversarial_m_loss(neural::layer_stack& disc, const std::vector<neural::tensor>& tgt_codes,
                          discriminator_head head);

void write_curves_csv(const std::string& path, const training_curves& curves);

}  // namespace fadacs::adapt
