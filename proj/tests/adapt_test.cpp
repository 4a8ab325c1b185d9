#include "doctest.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fadacs/adapt.hpp"
#include "fadacs/eval.hpp"
#include "fadacs/synth.hpp"
#include "fadacs/timeutil.hpp"

using namespace fadacs;
using namespace fadacs::adapt;

namespace {

// noiseless dataset whose target simply repeats the last occupancy value
features::window_dataset copy_task_dataset(std::uint64_t seed, std::size_t n_lots,
                                           int days, double noise = 0.0) {
  synth::synth_config cfg;
  cfg.seed = seed;
  cfg.n_lots = static_cast<int>(n_lots);
  cfg.days = days;
  cfg.noise_std = noise;
  cfg.spatial_corr = 0.3;
  auto d = synth::generate_domain(cfg, synth::domain::source);
  auto ctx = features::build_context(d.grid, d.lots, d.pois, d.weather);
  auto ds = features::assemble_windows(d.grid, ctx, d.lots, 6, 1);
  auto stats = features::fit_normalization(ds.features, ds.train_end);
  features::apply_normalization(ds.features, stats);
  return ds;
}

features::window_dataset constant_target_dataset(std::size_t n_samples, std::size_t n_lots,
                                                 double value) {
  features::window_dataset ds;
  ds.features.n_samples = n_samples;
  ds.features.lookback = 6;
  ds.features.n_lots = n_lots;
  ds.features.n_channels = 4;
  ds.features.channel_names = {"a", "b", "c", "d"};
  ds.features.values.assign(n_samples * 6 * n_lots * 4, 0.0);
  prng rng(3);
  for (auto& v : ds.features.values) v = rng.uniform();
  ds.targets.n_samples = n_samples;
  ds.targets.n_lots = n_lots;
  ds.targets.horizon = 1;
  ds.targets.values.assign(n_samples * n_lots, value);
  ds.train_end = n_samples * 7 / 10;
  ds.val_end = n_samples * 85 / 100;
  for (std::size_t s = 0; s < n_samples; ++s) ds.sample_times.push_back(static_cast<minute_t>(s));
  return ds;
}

model_config tiny_convlstm(const features::window_dataset& ds, std::size_t hidden = 6,
                           std::size_t code = 6) {
  model_config mc;
  mc.kind = encoder_kind::convlstm;
  mc.in_channels = ds.features.n_channels;
  mc.lookback = ds.features.lookback;
  mc.n_lots = ds.features.n_lots;
  mc.hidden = hidden;
  mc.code_channels = code;
  mc.kernel = 3;
  mc.disc_hidden = 16;
  return mc;
}

std::vector<double> snapshot_params(model& m) {
  std::vector<double> out;
  for (auto p : m.params()) out.insert(out.end(), p.value->data.begin(), p.value->data.end());
  return out;
}

}  // namespace

TEST_SUITE("adapt") {

TEST_CASE("rmse loss value and gradient") {
  std::vector<double> pred{0.5, 0.7}, truth{0.5, 0.5};
  std::vector<double> grad;
  double j = rmse_loss(pred, truth, &grad);
  CHECK(j == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));
  // d sqrt(mean((p-y)^2)) / dp_i = (p_i - y_i) / (n j)
  CHECK(grad[0] == doctest::Approx(0.0));
  CHECK(grad[1] == doctest::Approx(0.2 / (2 * j)).epsilon(1e-12));
  CHECK_THROWS_AS(rmse_loss({}, {}, nullptr), error);
}

TEST_CASE("zero-epoch training returns the initialization unchanged") {
  auto ds = constant_target_dataset(40, 3, 0.3);
  auto m = build_model(tiny_convlstm(ds), 11);
  auto before = snapshot_params(m);
  train_config tc;
  tc.epochs = 0;
  auto curves = pretrain_source(m, ds, tc);
  CHECK(curves.epochs.empty());
  CHECK(snapshot_params(m) == before);
}

TEST_CASE("constant-target fixture converges to the constant") {
  auto ds = constant_target_dataset(60, 3, 0.3);
  auto m = build_model(tiny_convlstm(ds, 4, 4), 5);
  train_config tc;
  tc.epochs = 60;
  tc.batch_size = 16;
  tc.lr = 3e-3;
  tc.patience = 60;
  tc.seed = 5;
  auto curves = pretrain_source(m, ds, tc);
  REQUIRE(!curves.epochs.empty());
  auto preds = model_predict_range(m, ds.features, {ds.val_end, ds.features.n_samples});
  for (double p : preds) CHECK(std::abs(p - 0.3) < 0.02);
}

TEST_CASE("training reduces loss on the copy task and stays deterministic") {
  auto ds = copy_task_dataset(21, 4, 2);
  auto m1 = build_model(tiny_convlstm(ds), 9);
  auto m2 = build_model(tiny_convlstm(ds), 9);
  train_config tc;
  tc.epochs = 8;
  tc.batch_size = 16;
  tc.batches_per_epoch = 12;
  tc.seed = 9;
  auto c1 = pretrain_source(m1, ds, tc);
  auto c2 = pretrain_source(m2, ds, tc);
  CHECK(c1.epochs.back().val_loss < c1.epochs.front().val_loss);
  // same seed and config: identical trajectories, bit for bit
  REQUIRE(c1.epochs.size() == c2.epochs.size());
  for (std::size_t i = 0; i < c1.epochs.size(); ++i) {
    CHECK(c1.epochs[i].train_loss == c2.epochs[i].train_loss);
    CHECK(c1.epochs[i].val_loss == c2.epochs[i].val_loss);
  }
  CHECK(snapshot_params(m1) == snapshot_params(m2));
}

TEST_CASE("divergence is reported rather than silently looping") {
  auto ds = constant_target_dataset(30, 2, 0.5);
  for (auto& v : ds.features.values) v *= 1e12;  // force non-finite activations upstream
  auto m = build_model(tiny_convlstm(ds), 3);
  train_config tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  // the sigmoid head keeps predictions bounded, so poison a target instead
  ds.targets.values[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(pretrain_source(m, ds, tc), doctest::Contains("Divergence"), error);
}

TEST_CASE("uniform discriminator reproduces the analytic adversarial losses") {
  model_config mc;
  mc.code_channels = 4;
  mc.disc_hidden = 8;
  auto disc = build_discriminator(mc, 3);
  // zero every parameter: both logits equal, so D reports log(0.5) for each class
  for (auto p : disc.params()) p.value->fill(0.0);
  prng rng(4);
  std::vector<neural::tensor> src, tgt;
  for (int i = 0; i < 8; ++i) {
    neural::tensor c({4});
    for (auto& v : c.data) v = rng.normal();
    (i % 2 ? src : tgt).push_back(c);
  }
  double d_loss = adversarial_d_loss(disc, src, tgt, mc.head);
  double m_loss = adversarial_m_loss(disc, tgt, mc.head);
  CHECK(d_loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(m_loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("adversarial losses match a hand-rolled log/exp evaluation") {
  model_config mc;
  mc.code_channels = 3;
  mc.disc_hidden = 5;
  auto disc = build_discriminator(mc, 17);
  prng rng(18);
  std::vector<neural::tensor> src, tgt;
  for (int i = 0; i < 4; ++i) {
    neural::tensor a({3}), b({3});
    for (auto& v : a.data) v = rng.normal();
    for (auto& v : b.data) v = rng.normal();
    src.push_back(a);
    tgt.push_back(b);
  }
  // hand evaluation: explicit softmax on the final logits
  auto p_src_of = [&](const neural::tensor& code) {
    neural::tensor h = code;
    auto dense_at = [&](std::size_t i, const neural::tensor& x) {
      auto& d = dynamic_cast<neural::dense&>(disc.at(i));
      neural::tensor y({d.weight.shape[0]});
      for (std::size_t r = 0; r < d.weight.shape[0]; ++r) {
        double acc = d.bias[r];
        for (std::size_t c = 0; c < d.weight.shape[1]; ++c)
          acc += d.weight.at2(r, c) * x[c];
        y[r] = acc;
      }
      return y;
    };
    h = dense_at(0, h);
    for (auto& v : h.data) v = std::max(0.0, v);
    h = dense_at(2, h);
    for (auto& v : h.data) v = std::max(0.0, v);
    h = dense_at(4, h);
    double e0 = std::exp(h[0]), e1 = std::exp(h[1]);
    return e0 / (e0 + e1);
  };
  double want_d = 0, want_m = 0;
  for (const auto& c : src) want_d -= std::log(p_src_of(c)) / 4.0;
  for (const auto& c : tgt) want_d -= std::log(1.0 - p_src_of(c)) / 4.0;
  for (const auto& c : tgt) want_m -= std::log(p_src_of(c)) / 4.0;
  CHECK(std::abs(adversarial_d_loss(disc, src, tgt, mc.head) - want_d) < 1e-12);
  CHECK(std::abs(adversarial_m_loss(disc, tgt, mc.head) - want_m) < 1e-12);
}

TEST_CASE("indistinguishable domains keep the discriminator near chance") {
  // identical distributions and Mt == Ms: after adaptation epochs the held-out
  // accuracy must sit in the statistical band around 0.5
  synth::synth_config cfg;
  cfg.seed = 31;
  cfg.n_lots = 5;
  cfg.days = 3;
  cfg.shift = 0.0;
  auto src_d = synth::generate_domain(cfg, synth::domain::source);
  auto tgt_d = synth::generate_domain(cfg, synth::domain::target);
  auto mk = [&](const synth::synth_domain& d) {
    auto ctx = features::build_context(d.grid, d.lots, d.pois, d.weather);
    auto ds = features::assemble_windows(d.grid, ctx, d.lots, 6, 1);
    return ds;
  };
  auto src = mk(src_d);
  auto tgt = mk(tgt_d);
  auto stats = features::fit_normalization(src.features, src.train_end);
  features::apply_normalization(src.features, stats);
  features::apply_normalization(tgt.features, stats);

  auto m = build_model(tiny_convlstm(src, 4, 4), 31);
  train_config tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.batches_per_epoch = 10;
  tc.seed = 31;
  auto res = adversarial_adapt(m, src, tgt, tc);
  double acc = discriminator_accuracy(res.discriminator, *m.enc, *res.target_encoder,
                                      src.features, {src.train_end, src.val_end}, tgt.features,
                                      {tgt.train_end, tgt.val_end}, m.cfg.head);
  // >= 1000 held-out codes with 5 lots per sample
  CHECK((src.val_end - src.train_end + tgt.val_end - tgt.train_end) * 5 >= 1000);
  CHECK(acc >= 0.4);
  CHECK(acc <= 0.6);
}

TEST_CASE("source encoder and regressor are byte-frozen through adaptation") {
  auto src = copy_task_dataset(41, 3, 2);
  auto tgt = copy_task_dataset(43, 3, 1);
  auto m = build_model(tiny_convlstm(src, 4, 4), 41);
  auto save = [&](const std::string& path) {
    auto params = m.params();
    neural::save_checkpoint(path, params, "{}");
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  std::string before = save("frozen_before_test.ckpt");
  train_config tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  tc.batches_per_epoch = 6;
  tc.seed = 41;
  auto res = adversarial_adapt(m, src, tgt, tc);
  std::string after = save("frozen_after_test.ckpt");
  CHECK(before == after);
  std::remove("frozen_before_test.ckpt");
  std::remove("frozen_after_test.ckpt");
}

TEST_CASE("assemble_predict equals stage-1 predictions and stays in (0,1)") {
  auto ds = copy_task_dataset(51, 3, 1);
  auto m = build_model(tiny_convlstm(ds, 4, 4), 51);
  sample_range r{0, 20};
  auto direct = model_predict_range(m, ds.features, r);
  auto assembled = assemble_predict(*m.enc, m.regressor, ds.features, r);
  CHECK(direct == assembled);
  for (double p : direct) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  CHECK_THROWS_AS(assemble_predict(*m.enc, m.regressor, ds.features,
                                   {0, ds.features.n_samples + 5}),
                  error);
}

TEST_CASE("historical average: weekly slot mean with global fallback") {
  features::occupancy_grid grid;
  grid.interval_min = 5;
  grid.lot_ids = {7};
  // two Mondays 09:00 with 0.2 and 0.4, plus one Tuesday value 0.9
  minute_t monday1 = to_minute(timeutil::to_seconds({2017, 2, 6, 9, 0, 0}));
  minute_t tuesday = to_minute(timeutil::to_seconds({2017, 2, 7, 9, 0, 0}));
  minute_t monday2 = to_minute(timeutil::to_seconds({2017, 2, 13, 9, 0, 0}));
  grid.timestamps = {monday1, tuesday, monday2};
  grid.values = {0.2, 0.9, 0.4};
  ha_model ha(grid, 3);
  minute_t monday3 = to_minute(timeutil::to_seconds({2017, 2, 20, 9, 0, 0}));
  CHECK(ha.predict(7, monday3) == doctest::Approx(0.3).epsilon(1e-12));
  // unseen weekly slot falls back to the lot's global mean
  minute_t friday = to_minute(timeutil::to_seconds({2017, 2, 24, 14, 0, 0}));
  CHECK(ha.predict(7, friday) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_WITH_AS(ha.predict(99, monday3), doctest::Contains("NoHistory"), error);
}

TEST_CASE("historical average on constant history predicts the constant") {
  features::occupancy_grid grid;
  grid.interval_min = 5;
  grid.lot_ids = {1};
  for (int i = 0; i < 200; ++i) {
    grid.timestamps.push_back(to_minute(timeutil::to_seconds({2017, 2, 6, 0, 0, 0})) + i * 5);
    grid.values.push_back(0.42);
  }
  ha_model ha(grid, 200);
  CHECK(ha.predict(1, grid.timestamps[0] + 100000) == doctest::Approx(0.42));
}

TEST_CASE("parameter transfer: zero epochs is identity; matched domains stay close") {
  auto src = copy_task_dataset(61, 3, 2);
  auto m = build_model(tiny_convlstm(src, 4, 4), 61);
  train_config tc;
  tc.epochs = 6;
  tc.batch_size = 16;
  tc.batches_per_epoch = 10;
  tc.seed = 61;
  auto curves = pretrain_source(m, src, tc);
  double src_val = curves.epochs[curves.best_epoch - 1].val_loss;

  model clone = m;
  train_config zero = tc;
  zero.epochs = 0;
  parameter_transfer(clone, src, zero);
  CHECK(snapshot_params(clone) == snapshot_params(m));

  // fine-tune on the same distribution: best val loss cannot degrade > 5%
  auto tgt = copy_task_dataset(61, 3, 2);
  model tuned = m;
  train_config ft = tc;
  ft.epochs = 3;
  auto ft_curves = parameter_transfer(tuned, tgt, ft);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : ft_curves.epochs) best = std::min(best, e.val_loss);
  CHECK(best <= src_val * 1.05);
}

TEST_CASE("few-shot window shorter than lookback+horizon fails upstream") {
  synth::synth_config cfg;
  cfg.seed = 71;
  cfg.n_lots = 2;
  cfg.days = 0;
  auto d = synth::generate_domain(cfg, synth::domain::target);
  auto ctx = features::build_context(d.grid, d.lots, d.pois, d.weather);
  CHECK_THROWS_WITH_AS(features::assemble_windows(d.grid, ctx, d.lots, 6, 1),
                       doctest::Contains("SeriesTooShort"), error);
}

TEST_CASE("lstm and spatial-1 convlstm train identically when weights match") {
  auto ds = copy_task_dataset(81, 1, 1);  // single lot -> spatial axis of 1
  model_config base = tiny_convlstm(ds, 5, 4);
  base.kernel = 1;
  auto conv_model = build_model(base, 81);
  model_config lc = base;
  lc.kind = encoder_kind::lstm;
  auto lstm_model = build_model(lc, 82);

  // mirror every weight into the lstm twin; peepholes stay zero and frozen so
  // the two parameterizations remain structurally identical through training
  auto cp = conv_model.params();
  auto lp = lstm_model.params();
  REQUIRE(cp.size() == lp.size() + 3);
  std::map<std::string, neural::param_ref> by_name;
  for (auto& p : cp) by_name[p.name] = p;
  auto is_peephole = [](const std::string& name) {
    return name.find(".w_ci") != std::string::npos || name.find(".w_cf") != std::string::npos ||
           name.find(".w_co") != std::string::npos;
  };
  for (auto& p : lp) {
    std::string key = p.name == "encoder.proj.weight" ? "encoder.proj.kernel" : p.name;
    auto it = by_name.find(key);
    REQUIRE(it != by_name.end());
    REQUIRE(p.value->size() == it->second.value->size());
    p.value->data = it->second.value->data;
  }
  for (auto& p : cp)
    if (is_peephole(p.name)) p.value->fill(0.0);

  // identical fixed batches, Adam over everything except the frozen peepholes
  auto run = [&](model& m) {
    auto all = m.params();
    std::vector<neural::param_ref> trainable;
    for (auto& p : all)
      if (!is_peephole(p.name)) trainable.push_back(p);
    neural::adam_state opt;
    std::vector<double> losses;
    const std::size_t L = ds.targets.n_lots;
    for (int epoch = 0; epoch < 2; ++epoch) {
      for (std::size_t lo = 0; lo + 8 <= 64; lo += 8) {
        std::vector<double> preds, truths, grad;
        for (std::size_t s = lo; s < lo + 8; ++s) {
          auto p = m.predict([&] {
            neural::tensor x({ds.features.lookback, ds.features.n_channels, L});
            for (std::size_t t = 0; t < ds.features.lookback; ++t)
              for (std::size_t ch = 0; ch < ds.features.n_channels; ++ch)
                x.data[(t * ds.features.n_channels + ch) * L] = ds.features.at(s, t, 0, ch);
            return x;
          }());
          preds.push_back(p[0]);
          truths.push_back(ds.targets.at(s, 0));
        }
        losses.push_back(rmse_loss(preds, truths, &grad));
        neural::zero_grads(all);
        for (std::size_t si = 0; si < 8; ++si) {
          std::size_t s = lo + si;
          neural::tensor x({ds.features.lookback, ds.features.n_channels, L});
          for (std::size_t t = 0; t < ds.features.lookback; ++t)
            for (std::size_t ch = 0; ch < ds.features.n_channels; ++ch)
              x.data[(t * ds.features.n_channels + ch) * L] = ds.features.at(s, t, 0, ch);
          neural::tensor codes = m.enc->encode(x);
          neural::tensor code({m.cfg.code_channels});
          for (std::size_t k = 0; k < m.cfg.code_channels; ++k) code[k] = codes.data[k];
          m.regressor.forward(code);
          neural::tensor gp({1});
          gp[0] = grad[si];
          neural::tensor gc = m.regressor.backward(gp);
          neural::tensor gcodes({m.cfg.code_channels, L});
          for (std::size_t k = 0; k < m.cfg.code_channels; ++k) gcodes.data[k] = gc[k];
          m.enc->backward(gcodes);
        }
        neural::adam_update(trainable, opt);
      }
    }
    return losses;
  };
  auto l_conv = run(conv_model);
  auto l_lstm = run(lstm_model);
  REQUIRE(l_conv.size() == l_lstm.size());
  for (std::size_t i = 0; i < l_conv.size(); ++i)
    CHECK(std::abs(l_conv[i] - l_lstm[i]) < 1e-9);
  // same batch, one epoch apart: training moved the loss, so the comparison
  // is not vacuous
  CHECK(l_conv[8] < l_conv[0]);
}

TEST_CASE("mode collapse warning fires when D accuracy pins at 1") {
  // constant inputs per domain give two point clusters in code space, so a
  // healthy D classifies every batch perfectly once fitted
  auto src = constant_target_dataset(40, 2, 0.2);
  auto tgt = constant_target_dataset(40, 2, 0.8);
  for (auto& v : src.features.values) v = 0.2;
  for (auto& v : tgt.features.values) v = 50.0;
  auto m = build_model(tiny_convlstm(src, 3, 3), 91);
  train_config tc;
  tc.epochs = 6;
  tc.batch_size = 8;
  tc.batches_per_epoch = 4;
  tc.patience = 2;
  tc.lr = 1e-2;
  tc.d_steps_per_g_step = 4;
  tc.seed = 91;
  auto res = adversarial_adapt(m, src, tgt, tc);
  CHECK(res.curves.mode_collapse_warning);
}

}  // TEST_SUITE
