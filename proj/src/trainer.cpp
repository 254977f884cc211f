#include "meteocast/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "meteocast/errors.hpp"
#include "meteocast/rng.hpp"

namespace meteo {

AdamState AdamState::zeros_like(const ForecastNet& net) {
  AdamState s;
  for (const Tensor* t : parameter_tensors(net)) {
    s.m.emplace_back(t->shape());
    s.v.emplace_back(t->shape());
  }
  return s;
}

void adam_step(ForecastNet& net, const NetGrads& grads, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
  auto params = parameter_tensors(net);
  auto gs = gradient_tensors(grads);
  if (params.size() != gs.size() || params.size() != state.m.size()) {
    throw ShapeError("adam_step: parameter/gradient/state tensor counts disagree");
  }
  auto names = parameter_names(net);
  for (std::size_t i = 0; i < gs.size(); ++i) {
    if (!gs[i]->all_finite()) {
      throw TrainError("non-finite gradient for " + names[i]);
    }
  }

  state.t += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data();
    const double* g = gs[i]->data();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    const std::size_t n = params[i]->size();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

void TrainConfig::validate() const {
  if (!(validation_fraction > 0.0 && validation_fraction < 0.5)) {
    throw ConfigError("validation_fraction must lie in (0, 0.5), got " +
                      std::to_string(validation_fraction));
  }
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

namespace {

void fill_batch(const WindowSet& ws, const std::vector<std::size_t>& order, std::size_t begin,
                std::size_t end, Tensor& batch, Tensor& targets) {
  const std::size_t B = end - begin;
  const std::size_t T = ws.n_past + ws.n_future;
  batch = Tensor({B, T, kNumChannels});
  targets = Tensor({B, ws.n_future, kNumFeatures});
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t w = order[begin + b];
    std::memcpy(batch.data() + b * T * kNumChannels, ws.inputs.data() + w * T * kNumChannels,
                T * kNumChannels * sizeof(double));
    std::memcpy(targets.data() + b * ws.n_future * kNumFeatures,
                ws.targets.data() + w * ws.n_future * kNumFeatures,
                ws.n_future * kNumFeatures * sizeof(double));
  }
}

double dataset_loss(const ForecastNet& net, const WindowSet& ws,
                    const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
                    int n_threads) {
  const std::size_t B = net.hparams.batch_size;
  RngStream unused(0);
  double sum = 0.0;
  std::size_t n = 0;
  Tensor batch, targets;
  for (std::size_t at = begin; at < end; at += B) {
    const std::size_t stop = std::min(end, at + B);
    fill_batch(ws, order, at, stop, batch, targets);
    ForwardResult r = forward(net, batch, false, unused, nullptr, n_threads);
    sum += loss_mae(r, targets) * static_cast<double>(stop - at);
    n += stop - at;
  }
  return sum / static_cast<double>(n);
}

std::vector<Tensor> snapshot_params(const ForecastNet& net) {
  std::vector<Tensor> out;
  for (const Tensor* t : parameter_tensors(net)) out.push_back(*t);
  return out;
}

void restore_params(ForecastNet& net, const std::vector<Tensor>& snap) {
  auto params = parameter_tensors(net);
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = snap[i];
}

}  // namespace

TrainHistory train(ForecastNet& net, const WindowSet& windows, const TrainConfig& cfg) {
  cfg.validate();
  if (windows.count() == 0) throw ConfigError("train: empty window set");
  if (windows.n_past != net.hparams.n_past || windows.n_future != net.hparams.n_future) {
    throw ConfigError("train: windows built for n_past=" + std::to_string(windows.n_past) +
                      "/n_future=" + std::to_string(windows.n_future) +
                      " but model expects n_past=" + std::to_string(net.hparams.n_past) +
                      "/n_future=" + std::to_string(net.hparams.n_future));
  }

  TrainHistory history;
  if (cfg.max_epochs == 0) return history;

  const std::size_t count = windows.count();
  if (count < 2) throw ConfigError("train: need at least 2 windows to hold out validation");
  std::size_t n_val = static_cast<std::size_t>(
      std::floor(static_cast<double>(count) * cfg.validation_fraction));
  n_val = std::clamp<std::size_t>(n_val, 1, count - 1);
  const std::size_t n_train = count - n_val;

  std::vector<std::size_t> train_idx(n_train), val_idx(n_val);
  std::iota(train_idx.begin(), train_idx.end(), 0);
  std::iota(val_idx.begin(), val_idx.end(), n_train);

  RngStream rng(cfg.seed);
  AdamState adam = AdamState::zeros_like(net);
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_params = snapshot_params(net);
  std::size_t bad_epochs = 0;

  const std::size_t B = net.hparams.batch_size;
  Tensor batch, targets;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(train_idx);
    double train_sum = 0.0;
    for (std::size_t at = 0; at < n_train; at += B) {
      const std::size_t stop = std::min(n_train, at + B);
      fill_batch(windows, train_idx, at, stop, batch, targets);
      ForwardCaches caches;
      ForwardResult result = forward(net, batch, true, rng, &caches, cfg.n_threads);
      const double batch_loss = loss_mae(result, targets);
      if (!std::isfinite(batch_loss)) throw TrainError("non-finite training loss");
      train_sum += batch_loss * static_cast<double>(stop - at);
      Tensor up = loss_mae_grad(result, targets);
      NetGrads grads = backward(net, caches, up, false, cfg.n_threads);
      adam_step(net, grads, adam, net.hparams.learning_rate);
    }
    const double train_loss = train_sum / static_cast<double>(n_train);
    const double val_loss = dataset_loss(net, windows, val_idx, 0, n_val, cfg.n_threads);
    history.epochs.push_back(EpochStats{epoch, train_loss, val_loss});
    if (cfg.on_epoch) cfg.on_epoch(epoch, train_loss, val_loss);

    if (val_loss < best_val) {
      best_val = val_loss;
      best_params = snapshot_params(net);
      history.best_epoch = epoch;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= cfg.patience) {
        history.early_stopped = true;
        break;
      }
    }
  }
  restore_params(net, best_params);
  return history;
}

MetricsReport evaluate(const ForecastNet& net, const WindowSet& windows, int n_threads) {
  if (windows.count() == 0) throw ConfigError("evaluate: empty window set");
  if (windows.scalers != scaler_hash(net.scalers)) {
    throw ConfigError("evaluate: windows were built with different scalers than the model's");
  }
  if (windows.n_past != net.hparams.n_past || windows.n_future != net.hparams.n_future) {
    throw ConfigError("evaluate: window sizes do not match the model");
  }

  const std::size_t count = windows.count();
  const std::size_t F = windows.n_future;
  const std::size_t T = windows.n_past + F;
  const std::size_t B = net.hparams.batch_size;

  MetricsReport rep;
  rep.window_count = count;
  rep.per_timestep = Tensor({F, kNumFeatures});
  std::array<double, kNumFeatures> sum{}, sumsq{};
  std::array<double, kNumFeatures> lo, hi;
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  std::size_t n_stat = 0;

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  RngStream unused(0);
  Tensor batch, targets;
  for (std::size_t at = 0; at < count; at += B) {
    const std::size_t stop = std::min(count, at + B);
    fill_batch(windows, order, at, stop, batch, targets);
    ForwardResult r = forward(net, batch, false, unused, nullptr, n_threads);
    for (std::size_t b = 0; b < stop - at; ++b) {
      for (std::size_t k = 0; k < F; ++k) {
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
          const double pred = invert_minmax(net.scalers[f], r.predictions.at3(b, T - F + k, f));
          const double truth = invert_minmax(net.scalers[f], targets.at3(b, k, f));
          rep.per_timestep.at2(k, f) += std::abs(pred - truth);
          sum[f] += truth;
          sumsq[f] += truth * truth;
          lo[f] = std::min(lo[f], truth);
          hi[f] = std::max(hi[f], truth);
        }
      }
      ++n_stat;
    }
  }

  for (std::size_t k = 0; k < F; ++k) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      rep.per_timestep.at2(k, f) /= static_cast<double>(count);
    }
  }
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    double acc = 0.0;
    for (std::size_t k = 0; k < F; ++k) acc += rep.per_timestep.at2(k, f);
    rep.mae[f] = acc / static_cast<double>(F);
    const double n = static_cast<double>(n_stat) * static_cast<double>(F);
    rep.data_mean[f] = sum[f] / n;
    const double var = std::max(0.0, sumsq[f] / n - rep.data_mean[f] * rep.data_mean[f]);
    rep.data_std[f] = std::sqrt(var);
    rep.data_min[f] = lo[f];
    rep.data_max[f] = hi[f];
    rep.mae_over_std[f] = rep.data_std[f] > 0.0 ? rep.mae[f] / rep.data_std[f]
                                                : std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

LeadSeries extract_lead_time_series(const ForecastNet& net, const WindowSet& windows,
                                    const std::vector<int>& leads, int n_threads) {
  if (windows.count() == 0) throw ConfigError("extract_lead_time_series: empty window set");
  if (windows.scalers != scaler_hash(net.scalers)) {
    throw ConfigError("extract_lead_time_series: scaler mismatch");
  }
  const std::size_t F = windows.n_future;
  for (int lead : leads) {
    if (lead < 1 || static_cast<std::size_t>(lead) > F) {
      throw ConfigError("lead " + std::to_string(lead) + " outside [1, " + std::to_string(F) +
                        "]");
    }
  }

  const std::size_t count = windows.count();
  const std::size_t T = windows.n_past + F;
  std::int64_t first = std::numeric_limits<std::int64_t>::max();
  std::int64_t last = std::numeric_limits<std::int64_t>::min();
  for (std::int64_t o : windows.origins) {
    first = std::min(first, o + static_cast<std::int64_t>(windows.n_past));
    last = std::max(last, o + static_cast<std::int64_t>(T) - 1);
  }
  const std::size_t n_times = static_cast<std::size_t>(last - first + 1);

  LeadSeries out;
  out.leads = leads;
  out.times.resize(n_times);
  for (std::size_t i = 0; i < n_times; ++i) out.times[i] = first + static_cast<std::int64_t>(i);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.truth = Tensor::full({n_times, kNumFeatures}, nan);
  out.predicted = Tensor::full({leads.size(), n_times, kNumFeatures}, nan);

  const std::size_t B = net.hparams.batch_size;
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  RngStream unused(0);
  Tensor batch, targets;
  for (std::size_t at = 0; at < count; at += B) {
    const std::size_t stop = std::min(count, at + B);
    fill_batch(windows, order, at, stop, batch, targets);
    ForwardResult r = forward(net, batch, false, unused, nullptr, n_threads);
    for (std::size_t b = 0; b < stop - at; ++b) {
      const std::size_t w = at + b;
      const std::int64_t future0 = windows.origins[w] + static_cast<std::int64_t>(windows.n_past);
      for (std::size_t k = 0; k < F; ++k) {
        const std::size_t row = static_cast<std::size_t>(future0 - first) + k;
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
          out.truth.at2(row, f) = invert_minmax(net.scalers[f], targets.at3(b, k, f));
        }
        for (std::size_t li = 0; li < leads.size(); ++li) {
          if (static_cast<std::size_t>(leads[li]) == k + 1) {
            for (std::size_t f = 0; f < kNumFeatures; ++f) {
              out.predicted.at3(li, row, f) =
                  invert_minmax(net.scalers[f], r.predictions.at3(b, T - F + k, f));
            }
          }
        }
      }
    }
  }
  return out;
}

PersistenceReport persistence_mae(const SeriesTable& s, std::size_t n_past, std::size_t n_future,
                                  PersistenceMode mode) {
  if (n_past < 1 || n_future < 1) throw ConfigError("persistence_mae: window sizes must be positive");
  const std::size_t T = n_past + n_future;
  PersistenceReport rep;
  rep.per_timestep = Tensor({n_future, kNumFeatures});
  Tensor counts({n_future, kNumFeatures});
  const std::size_t n = s.rows.size();
  if (n < T) return rep;

  for (std::size_t r0 = 0; r0 + T <= n; ++r0) {
    for (std::size_t k = 0; k < n_future; ++k) {
      const std::size_t target_idx = r0 + n_past + k;
      const std::size_t back = mode == PersistenceMode::kLastValue ? k + 1 : 24;
      if (target_idx < back) {
        rep.skipped += kNumFeatures;
        continue;
      }
      const std::size_t source_idx = target_idx - back;
      if (s.rows[target_idx].t - s.rows[source_idx].t != static_cast<std::int64_t>(back)) {
        rep.skipped += kNumFeatures;
        continue;
      }
      bool counted = false;
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        const auto& target = s.rows[target_idx].values[f];
        const auto& source = s.rows[source_idx].values[f];
        if (!target || !source) {
          ++rep.skipped;
          continue;
        }
        rep.per_timestep.at2(k, f) += std::abs(*target - *source);
        counts.at2(k, f) += 1.0;
        counted = true;
      }
      if (counted) ++rep.pairs;
    }
  }
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < n_future; ++k) {
      if (counts.at2(k, f) > 0.0) {
        rep.per_timestep.at2(k, f) /= counts.at2(k, f);
        acc += rep.per_timestep.at2(k, f);
        ++used;
      }
    }
    rep.mae[f] = used > 0 ? acc / static_cast<double>(used) : 0.0;
  }
  return rep;
}

}  // namespace meteo
