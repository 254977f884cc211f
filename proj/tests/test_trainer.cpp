#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "meteocast/data.hpp"
#include "meteocast/errors.hpp"
#include "meteocast/model.hpp"
#include "meteocast/rng.hpp"
#include "meteocast/timeutil.hpp"
#include "meteocast/trainer.hpp"

using namespace meteo;

namespace {

HParams tiny_config() {
  HParams h;
  h.n_past = 6;
  h.n_future = 4;
  h.units_per_direction = 3;
  h.n_bilstm_layers = 2;
  h.dropout_rate = 0.0;
  h.batch_size = 8;
  return h;
}

// Hourly series whose features are smooth functions of calendar time,
// starting 2021-01-01.
SeriesTable smooth_series(std::size_t n_rows) {
  SeriesTable s;
  s.latitude = 38.0;
  s.longitude = 23.7;
  const std::int64_t t0 = hours_from_civil(2021, 1, 1, 0);
  for (std::size_t i = 0; i < n_rows; ++i) {
    const std::int64_t t = t0 + static_cast<std::int64_t>(i);
    const double hod = static_cast<double>(hour_of_day(t));
    const double ang = 2.0 * std::numbers::pi * hod / 24.0;
    SeriesRow row;
    row.t = t;
    row.values[0] = 15.0 + 6.0 * std::sin(ang);
    row.values[1] = 300.0 + 150.0 * std::cos(ang);
    row.values[2] = 55.0 + 20.0 * std::sin(ang + 1.0);
    s.rows.push_back(row);
  }
  return s;
}

struct Fixture {
  SeriesTable series;
  std::array<Scaler, kNumFeatures> scalers;
  WindowSet windows;
  ForecastNet net;
};

Fixture smooth_fixture(std::size_t n_rows, const HParams& h, std::uint64_t seed) {
  Fixture f;
  f.series = smooth_series(n_rows);
  f.scalers = fit_scalers(f.series);
  f.windows = build_windows(f.series, f.scalers, h.n_past, h.n_future);
  f.net = build_model(h, seed);
  f.net.scalers = f.scalers;
  return f;
}

std::vector<Tensor> copy_params(const ForecastNet& net) {
  std::vector<Tensor> out;
  for (const Tensor* t : parameter_tensors(net)) out.push_back(*t);
  return out;
}

bool params_equal(const ForecastNet& net, const std::vector<Tensor>& snap) {
  auto ps = parameter_tensors(net);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    for (std::size_t j = 0; j < ps[i]->size(); ++j) {
      if (ps[i]->data()[j] != snap[i].data()[j]) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  ForecastNet net = build_model(tiny_config(), 5);
  auto before = copy_params(net);
  AdamState state = AdamState::zeros_like(net);
  NetGrads grads = NetGrads::zeros_like(net);
  adam_step(net, grads, state, 0.01);
  CHECK(params_equal(net, before));
  CHECK(state.t == 1);
}

TEST_CASE("first adam step is about minus lr times the gradient sign") {
  ForecastNet net = build_model(tiny_config(), 5);
  auto before = copy_params(net);
  AdamState state = AdamState::zeros_like(net);
  NetGrads grads = NetGrads::zeros_like(net);
  auto gs = gradient_tensors(grads);
  for (std::size_t i = 0; i < gs.size(); ++i) {
    for (std::size_t j = 0; j < gs[i]->size(); ++j) {
      gs[i]->data()[j] = (j % 2 == 0) ? 3.0 : -0.5;
    }
  }
  const double lr = 0.01;
  adam_step(net, grads, state, lr);
  auto ps = parameter_tensors(net);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    for (std::size_t j = 0; j < ps[i]->size(); ++j) {
      const double step = ps[i]->data()[j] - before[i].data()[j];
      const double want = (j % 2 == 0) ? -lr : lr;
      CHECK(std::abs(step - want) < 1e-8);
    }
  }
}

TEST_CASE("adam rejects a non-finite gradient naming the parameter") {
  ForecastNet net = build_model(tiny_config(), 5);
  AdamState state = AdamState::zeros_like(net);
  NetGrads grads = NetGrads::zeros_like(net);
  grads.head_bias.at(1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(adam_step(net, grads, state, 0.01),
                       doctest::Contains("head.bias"), TrainError);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.validation_fraction = 0.6;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.validation_fraction = 0.1;
  cfg.patience = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("train rejects empty or mismatched window sets") {
  HParams h = tiny_config();
  Fixture f = smooth_fixture(60, h, 9);
  TrainConfig cfg;
  WindowSet empty;
  empty.n_past = h.n_past;
  empty.n_future = h.n_future;
  CHECK_THROWS_AS(train(f.net, empty, cfg), ConfigError);

  HParams other = h;
  other.n_past = 8;
  WindowSet wrong = build_windows(f.series, f.scalers, other.n_past, other.n_future);
  CHECK_THROWS_AS(train(f.net, wrong, cfg), ConfigError);
}

TEST_CASE("max_epochs zero returns an empty history and leaves the net untouched") {
  Fixture f = smooth_fixture(80, tiny_config(), 11);
  auto before = copy_params(f.net);
  TrainConfig cfg;
  cfg.max_epochs = 0;
  TrainHistory h = train(f.net, f.windows, cfg);
  CHECK(h.epochs.empty());
  CHECK(h.best_epoch == 0);
  CHECK_FALSE(h.early_stopped);
  CHECK(params_equal(f.net, before));
}

TEST_CASE("training is reproducible for a fixed seed and sensitive to it") {
  HParams h = tiny_config();
  h.dropout_rate = 0.1;
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.seed = 7;

  Fixture a = smooth_fixture(120, h, 21);
  Fixture b = smooth_fixture(120, h, 21);
  TrainHistory ha = train(a.net, a.windows, cfg);
  TrainHistory hb = train(b.net, b.windows, cfg);
  REQUIRE(ha.epochs.size() == hb.epochs.size());
  for (std::size_t i = 0; i < ha.epochs.size(); ++i) {
    CHECK(ha.epochs[i].train_loss == hb.epochs[i].train_loss);
    CHECK(ha.epochs[i].val_loss == hb.epochs[i].val_loss);
  }
  CHECK(params_equal(a.net, copy_params(b.net)));

  Fixture c = smooth_fixture(120, h, 21);
  TrainConfig other = cfg;
  other.seed = 8;
  TrainHistory hc = train(c.net, c.windows, other);
  bool same = true;
  for (std::size_t i = 0; i < std::min(ha.epochs.size(), hc.epochs.size()); ++i) {
    same = same && ha.epochs[i].train_loss == hc.epochs[i].train_loss;
  }
  CHECK_FALSE(same);
}

TEST_CASE("loss decreases monotonically on a noiseless smooth target") {
  HParams h = tiny_config();
  h.batch_size = 512;  // full batch: one Adam step per epoch
  h.learning_rate = 0.002;
  Fixture f = smooth_fixture(160, h, 3);
  TrainConfig cfg;
  cfg.max_epochs = 5;
  cfg.patience = 10;
  TrainHistory hist = train(f.net, f.windows, cfg);
  REQUIRE(hist.epochs.size() == 5);
  for (std::size_t i = 1; i < hist.epochs.size(); ++i) {
    CHECK(hist.epochs[i].train_loss < hist.epochs[i - 1].train_loss);
  }
}

TEST_CASE("early stopping restores the best validation epoch") {
  HParams h = tiny_config();
  h.learning_rate = 0.05;  // deliberately jumpy so validation loss oscillates
  Fixture f = smooth_fixture(140, h, 17);
  TrainConfig cfg;
  cfg.max_epochs = 60;
  cfg.patience = 3;
  TrainHistory hist = train(f.net, f.windows, cfg);
  REQUIRE_FALSE(hist.epochs.empty());

  std::size_t argmin = 0;
  for (std::size_t i = 1; i < hist.epochs.size(); ++i) {
    if (hist.epochs[i].val_loss < hist.epochs[argmin].val_loss) argmin = i;
  }
  CHECK(hist.best_epoch == hist.epochs[argmin].epoch);
  if (hist.epochs.size() < cfg.max_epochs) CHECK(hist.early_stopped);

  // Recomputing the validation loss of the restored net reproduces the
  // recorded best exactly.
  const std::size_t count = f.windows.count();
  const std::size_t n_val = static_cast<std::size_t>(std::floor(count * cfg.validation_fraction));
  const std::size_t n_train = count - std::max<std::size_t>(n_val, 1);
  const std::size_t T = h.window_len();
  double sum = 0.0;
  RngStream unused(0);
  for (std::size_t w = n_train; w < count; ++w) {
    Tensor one({1, T, kNumChannels});
    Tensor target({1, h.n_future, kNumFeatures});
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < kNumChannels; ++c)
        one.at3(0, t, c) = f.windows.inputs.at3(w, t, c);
    for (std::size_t k = 0; k < h.n_future; ++k)
      for (std::size_t c = 0; c < kNumFeatures; ++c)
        target.at3(0, k, c) = f.windows.targets.at3(w, k, c);
    ForwardResult r = forward(f.net, one, false, unused);
    sum += loss_mae(r, target);
  }
  const double recomputed = sum / static_cast<double>(count - n_train);
  CHECK(recomputed == doctest::Approx(hist.epochs[hist.best_epoch - 1].val_loss).epsilon(1e-12));
}

TEST_CASE("on_epoch callback sees every epoch in order") {
  Fixture f = smooth_fixture(100, tiny_config(), 2);
  TrainConfig cfg;
  cfg.max_epochs = 4;
  std::vector<std::size_t> seen;
  cfg.on_epoch = [&](std::size_t epoch, double, double) { seen.push_back(epoch); };
  TrainHistory hist = train(f.net, f.windows, cfg);
  REQUIRE(seen.size() == hist.epochs.size());
  for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == i + 1);
}

TEST_CASE("evaluate of a training-mean predictor equals mean absolute deviation") {
  HParams h = tiny_config();
  Fixture f = smooth_fixture(70, h, 1);

  // Zero every parameter, then set the head bias to the scaled feature
  // means: the net now predicts the mean in physical units everywhere.
  std::array<double, kNumFeatures> mean{};
  std::size_t n = 0;
  for (const auto& row : f.series.rows) {
    for (std::size_t c = 0; c < kNumFeatures; ++c) mean[c] += *row.values[c];
    ++n;
  }
  for (std::size_t c = 0; c < kNumFeatures; ++c) mean[c] /= static_cast<double>(n);
  for (Tensor* t : parameter_tensors(f.net)) t->fill(0.0);
  for (std::size_t c = 0; c < kNumFeatures; ++c) {
    f.net.head.bias.at(c) = apply_minmax(f.scalers[c], mean[c]);
  }

  MetricsReport rep = evaluate(f.net, f.windows);
  CHECK(rep.window_count == f.windows.count());

  // Brute-force oracle straight off the stored targets.
  std::array<double, kNumFeatures> want{};
  Tensor per_step({h.n_future, kNumFeatures});
  for (std::size_t w = 0; w < f.windows.count(); ++w) {
    for (std::size_t k = 0; k < h.n_future; ++k) {
      for (std::size_t c = 0; c < kNumFeatures; ++c) {
        const double truth = invert_minmax(f.scalers[c], f.windows.targets.at3(w, k, c));
        per_step.at2(k, c) += std::abs(truth - mean[c]);
      }
    }
  }
  for (std::size_t k = 0; k < h.n_future; ++k)
    for (std::size_t c = 0; c < kNumFeatures; ++c)
      per_step.at2(k, c) /= static_cast<double>(f.windows.count());
  for (std::size_t c = 0; c < kNumFeatures; ++c) {
    double acc = 0.0;
    for (std::size_t k = 0; k < h.n_future; ++k) acc += per_step.at2(k, c);
    want[c] = acc / static_cast<double>(h.n_future);
    CHECK(std::abs(rep.mae[c] - want[c]) < 1e-9);
    for (std::size_t k = 0; k < h.n_future; ++k) {
      CHECK(std::abs(rep.per_timestep.at2(k, c) - per_step.at2(k, c)) < 1e-9);
    }
  }
}

TEST_CASE("evaluate mae equals the mean of its per-timestep column") {
  Fixture f = smooth_fixture(90, tiny_config(), 33);
  MetricsReport rep = evaluate(f.net, f.windows);
  for (std::size_t c = 0; c < kNumFeatures; ++c) {
    double acc = 0.0;
    for (std::size_t k = 0; k < f.windows.n_future; ++k) acc += rep.per_timestep.at2(k, c);
    CHECK(std::abs(rep.mae[c] - acc / static_cast<double>(f.windows.n_future)) < 1e-9);
  }
}

TEST_CASE("evaluate matches a per-window brute force on a small subset") {
  HParams h = tiny_config();
  h.batch_size = 4;  // force multiple batches
  Fixture f = smooth_fixture(70, h, 55);
  REQUIRE(f.windows.count() >= 10);
  MetricsReport rep = evaluate(f.net, f.windows);

  Tensor per_step({h.n_future, kNumFeatures});
  RngStream unused(0);
  const std::size_t T = h.window_len();
  for (std::size_t w = 0; w < f.windows.count(); ++w) {
    Tensor one({1, T, kNumChannels});
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < kNumChannels; ++c)
        one.at3(0, t, c) = f.windows.inputs.at3(w, t, c);
    ForwardResult r = forward(f.net, one, false, unused);
    for (std::size_t k = 0; k < h.n_future; ++k) {
      for (std::size_t c = 0; c < kNumFeatures; ++c) {
        const double pred = invert_minmax(f.scalers[c], r.predictions.at3(0, T - h.n_future + k, c));
        const double truth = invert_minmax(f.scalers[c], f.windows.targets.at3(w, k, c));
        per_step.at2(k, c) += std::abs(pred - truth);
      }
    }
  }
  for (std::size_t k = 0; k < h.n_future; ++k) {
    for (std::size_t c = 0; c < kNumFeatures; ++c) {
      CHECK(std::abs(rep.per_timestep.at2(k, c) -
                     per_step.at2(k, c) / static_cast<double>(f.windows.count())) < 1e-9);
    }
  }
}

TEST_CASE("evaluate rejects windows built with different scalers") {
  Fixture f = smooth_fixture(70, tiny_config(), 5);
  f.net.scalers[0].max += 0.5;
  CHECK_THROWS_AS(evaluate(f.net, f.windows), ConfigError);
}

TEST_CASE("evaluate reports dataset statistics of the targets") {
  Fixture f = smooth_fixture(80, tiny_config(), 5);
  MetricsReport rep = evaluate(f.net, f.windows);
  for (std::size_t c = 0; c < kNumFeatures; ++c) {
    CHECK(rep.data_min[c] >= f.scalers[c].min - 1e-9);
    CHECK(rep.data_max[c] <= f.scalers[c].max + 1e-9);
    CHECK(rep.data_mean[c] > rep.data_min[c]);
    CHECK(rep.data_mean[c] < rep.data_max[c]);
    CHECK(rep.data_std[c] > 0.0);
    CHECK(rep.mae_over_std[c] == doctest::Approx(rep.mae[c] / rep.data_std[c]));
  }
}

TEST_CASE("lead series from a perfect predictor coincides with truth") {
  HParams h = tiny_config();
  // Constant series plus identity scalers make a constant-bias net exact.
  SeriesTable s;
  s.latitude = 0.0;
  s.longitude = 0.0;
  const std::int64_t t0 = hours_from_civil(2022, 3, 1, 0);
  for (std::size_t i = 0; i < 40; ++i) {
    SeriesRow row;
    row.t = t0 + static_cast<std::int64_t>(i);
    row.values = {0.37, 0.61, 0.25};
    s.rows.push_back(row);
  }
  std::array<Scaler, kNumFeatures> ident = {Scaler{"temp_c", 0.0, 1.0},
                                            Scaler{"irrad_wm2", 0.0, 1.0},
                                            Scaler{"relhum_pct", 0.0, 1.0}};
  WindowSet ws = build_windows(s, ident, h.n_past, h.n_future);
  REQUIRE(ws.count() > 0);

  ForecastNet net = build_model(h, 1);
  net.scalers = ident;
  for (Tensor* t : parameter_tensors(net)) t->fill(0.0);
  net.head.bias.at(0) = 0.37;
  net.head.bias.at(1) = 0.61;
  net.head.bias.at(2) = 0.25;

  MetricsReport rep = evaluate(net, ws);
  for (std::size_t c = 0; c < kNumFeatures; ++c) CHECK(rep.mae[c] < 1e-12);

  LeadSeries ls = extract_lead_time_series(net, ws, {1, 3, 4});
  for (std::size_t i = 1; i < ls.times.size(); ++i) CHECK(ls.times[i] == ls.times[i - 1] + 1);
  CHECK(ls.times.front() == t0 + static_cast<std::int64_t>(h.n_past));
  CHECK(ls.times.back() == s.rows.back().t);
  for (std::size_t li = 0; li < ls.leads.size(); ++li) {
    for (std::size_t i = 0; i < ls.times.size(); ++i) {
      for (std::size_t c = 0; c < kNumFeatures; ++c) {
        const double p = ls.predicted.at3(li, i, c);
        if (std::isfinite(p)) {
          CHECK(p == doctest::Approx(ls.truth.at2(i, c)).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("lead series marks uncovered hours as NaN and covered ones correctly") {
  HParams h = tiny_config();
  Fixture f = smooth_fixture(20, h, 3);  // 20 rows, T=10: 11 windows
  REQUIRE(f.windows.count() == 11);
  LeadSeries ls = extract_lead_time_series(f.net, f.windows, {1, 4});

  const std::int64_t first_origin = f.windows.origins.front();
  // Hour span covered by any future step: [first_origin+6, first_origin+19].
  CHECK(ls.times.size() == 14);
  for (std::size_t li = 0; li < 2; ++li) {
    const int lead = ls.leads[li];
    for (std::size_t i = 0; i < ls.times.size(); ++i) {
      const std::int64_t t = ls.times[i];
      // Window with origin t - n_past - (lead-1) must exist for coverage.
      const std::int64_t o = t - static_cast<std::int64_t>(h.n_past) - (lead - 1);
      const bool covered =
          o >= first_origin && o <= f.windows.origins.back();
      CHECK(std::isfinite(ls.predicted.at3(li, i, 0)) == covered);
    }
  }
  // Truth rows echo the raw series.
  for (std::size_t i = 0; i < ls.times.size(); ++i) {
    const std::size_t row = static_cast<std::size_t>(ls.times[i] - f.series.rows[0].t);
    for (std::size_t c = 0; c < kNumFeatures; ++c) {
      CHECK(ls.truth.at2(i, c) == doctest::Approx(*f.series.rows[row].values[c]).epsilon(1e-10));
    }
  }
}

TEST_CASE("lead series rejects out-of-range leads") {
  Fixture f = smooth_fixture(30, tiny_config(), 3);
  CHECK_THROWS_AS(extract_lead_time_series(f.net, f.windows, {0}), ConfigError);
  CHECK_THROWS_AS(extract_lead_time_series(f.net, f.windows, {5}), ConfigError);
}

TEST_CASE("day-before persistence is exact on a 24-hour periodic series") {
  SeriesTable s = smooth_series(200);
  PersistenceReport rep = persistence_mae(s, 22, 48, PersistenceMode::kDayBefore);
  CHECK(rep.pairs > 0);
  for (std::size_t c = 0; c < kNumFeatures; ++c) CHECK(rep.mae[c] < 1e-9);
}

TEST_CASE("last-value persistence error grows with lead on an AR(1) series") {
  SeriesTable s;
  s.latitude = 0.0;
  s.longitude = 0.0;
  RngStream rng(99);
  const double rho = 0.9;
  double x = 0.0, y = 0.0, z = 0.0;
  const std::int64_t t0 = hours_from_civil(2020, 1, 1, 0);
  for (std::size_t i = 0; i < 4000; ++i) {
    x = rho * x + rng.next_normal();
    y = rho * y + rng.next_normal();
    z = rho * z + rng.next_normal();
    SeriesRow row;
    row.t = t0 + static_cast<std::int64_t>(i);
    row.values = {10.0 + x, 100.0 + 10.0 * y, 50.0 + z};
    s.rows.push_back(row);
  }
  PersistenceReport rep = persistence_mae(s, 4, 8, PersistenceMode::kLastValue);
  for (std::size_t c = 0; c < kNumFeatures; ++c) {
    for (std::size_t k = 1; k < 8; ++k) {
      CHECK(rep.per_timestep.at2(k, c) >= rep.per_timestep.at2(k - 1, c) - 1e-9);
    }
  }
}

TEST_CASE("persistence skips missing values and counts them") {
  SeriesTable s = smooth_series(120);
  s.rows[30].values[1] = std::nullopt;
  PersistenceReport rep = persistence_mae(s, 10, 12, PersistenceMode::kDayBefore);
  CHECK(rep.skipped > 0);
  for (std::size_t c = 0; c < kNumFeatures; ++c) CHECK(std::isfinite(rep.mae[c]));
}
