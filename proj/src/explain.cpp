#include "meteocast/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "meteocast/errors.hpp"
#include "meteocast/rng.hpp"

namespace meteo {

namespace {

std::vector<std::size_t> resolve_timesteps(const ForecastNet& net, const IgTarget& target) {
  const std::size_t T = net.hparams.window_len();
  if (target.variable >= kNumFeatures) {
    throw ConfigError("target variable " + std::to_string(target.variable) + " outside [0, 3)");
  }
  std::vector<std::size_t> steps = target.timesteps;
  if (steps.empty()) {
    steps.resize(net.hparams.n_future);
    for (std::size_t i = 0; i < steps.size(); ++i) steps[i] = net.hparams.n_past + i;
  }
  for (std::size_t t : steps) {
    if (t >= T) {
      throw ConfigError("target timestep " + std::to_string(t) + " outside [0, " +
                        std::to_string(T) + ")");
    }
  }
  return steps;
}

void check_input_shape(const ForecastNet& net, const Tensor& x, const char* what) {
  const std::size_t T = net.hparams.window_len();
  if (x.shape().size() != 2 || x.shape()[0] != T || x.shape()[1] != kNumChannels) {
    throw ShapeError(std::string(what) + " must have shape [" + std::to_string(T) + ", " +
                     std::to_string(kNumChannels) + "], got " + x.shape_str());
  }
}

}  // namespace

double ig_target_value(const ForecastNet& net, const Tensor& x, const IgTarget& target) {
  check_input_shape(net, x, "input");
  const std::vector<std::size_t> steps = resolve_timesteps(net, target);
  const std::size_t T = net.hparams.window_len();
  Tensor batch({1, T, kNumChannels});
  std::memcpy(batch.data(), x.data(), x.size() * sizeof(double));
  RngStream unused(0);
  ForwardResult r = forward(net, batch, false, unused);
  double acc = 0.0;
  for (std::size_t t : steps) acc += r.predictions.at3(0, t, target.variable);
  return acc / static_cast<double>(steps.size());
}

Attribution integrated_gradients(const ForecastNet& net, const Tensor& x, const Tensor& baseline,
                                 const IgTarget& target, std::size_t steps) {
  check_input_shape(net, x, "input");
  check_input_shape(net, baseline, "baseline");
  if (steps < 8) throw ConfigError("integrated gradients needs at least 8 path steps");
  const std::vector<std::size_t> out_steps = resolve_timesteps(net, target);
  const std::size_t T = net.hparams.window_len();
  const std::size_t m = steps;

  // All m midpoints as one batch.
  Tensor batch({m, T, kNumChannels});
  for (std::size_t k = 0; k < m; ++k) {
    const double alpha = (static_cast<double>(k) + 0.5) / static_cast<double>(m);
    double* row = batch.data() + k * T * kNumChannels;
    for (std::size_t i = 0; i < T * kNumChannels; ++i) {
      row[i] = baseline.at(i) + alpha * (x.at(i) - baseline.at(i));
    }
  }

  RngStream unused(0);
  ForwardCaches caches;
  forward(net, batch, false, unused, &caches);

  Tensor upstream({m, T, kNumFeatures});
  const double weight = 1.0 / static_cast<double>(out_steps.size());
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t t : out_steps) upstream.at3(k, t, target.variable) = weight;
  }
  NetGrads grads = backward(net, caches, upstream, true);

  for (std::size_t k = 0; k < m; ++k) {
    const double* row = grads.input.data() + k * T * kNumChannels;
    for (std::size_t i = 0; i < T * kNumChannels; ++i) {
      if (!std::isfinite(row[i])) {
        throw NumericError("non-finite gradient at path step " + std::to_string(k + 1) + " of " +
                           std::to_string(m));
      }
    }
  }

  Attribution att;
  att.variable = target.variable;
  att.timesteps = out_steps;
  att.values = Tensor({T, kNumChannels});
  for (std::size_t i = 0; i < T * kNumChannels; ++i) {
    double avg = 0.0;
    for (std::size_t k = 0; k < m; ++k) avg += grads.input.at(k * T * kNumChannels + i);
    avg /= static_cast<double>(m);
    att.values.at(i) = (x.at(i) - baseline.at(i)) * avg;
  }
  bool zero_baseline = true;
  for (std::size_t i = 0; i < baseline.size() && zero_baseline; ++i) {
    zero_baseline = baseline.at(i) == 0.0;
  }
  att.baseline = zero_baseline ? "zero" : "custom";
  return att;
}

Tensor integrated_gradients_generic(const Tensor& x, const Tensor& baseline, std::size_t steps,
                                    const std::function<Tensor(const Tensor&)>& gradient) {
  if (x.shape() != baseline.shape()) {
    throw ShapeError("input " + x.shape_str() + " and baseline " + baseline.shape_str() +
                     " differ");
  }
  if (steps < 1) throw ConfigError("integrated gradients needs at least 1 path step");
  Tensor avg(x.shape());
  Tensor point(x.shape());
  for (std::size_t k = 0; k < steps; ++k) {
    const double alpha = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < x.size(); ++i) {
      point.at(i) = baseline.at(i) + alpha * (x.at(i) - baseline.at(i));
    }
    Tensor g = gradient(point);
    if (g.shape() != x.shape()) throw ShapeError("gradient shape " + g.shape_str() + " mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) avg.at(i) += g.at(i);
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.at(i) = (x.at(i) - baseline.at(i)) * avg.at(i) / static_cast<double>(steps);
  }
  return out;
}

AttributionSummary aggregate_attributions(const std::vector<Attribution>& attributions) {
  if (attributions.empty()) throw ConfigError("no attributions to aggregate");
  const auto& shape = attributions.front().values.shape();
  for (const Attribution& a : attributions) {
    if (a.values.shape() != shape) {
      throw ShapeError("attribution shapes differ: " + a.values.shape_str());
    }
    if (a.variable >= kNumFeatures) throw ConfigError("attribution with invalid target variable");
  }
  const std::size_t T = shape[0];

  AttributionSummary s;
  for (const Attribution& a : attributions) {
    if (s.samples[a.variable] == 0) {
      s.curves[a.variable] = Tensor({T, kNumChannels});
      s.curves_signed[a.variable] = Tensor({T, kNumChannels});
    }
    s.samples[a.variable] += 1;
    for (std::size_t i = 0; i < T * kNumChannels; ++i) {
      s.curves[a.variable].at(i) += std::abs(a.values.at(i));
      s.curves_signed[a.variable].at(i) += a.values.at(i);
    }
  }

  s.overall = Tensor({kNumChannels});
  std::size_t targets_present = 0;
  for (std::size_t v = 0; v < kNumFeatures; ++v) {
    if (s.samples[v] == 0) continue;
    ++targets_present;
    const double n = static_cast<double>(s.samples[v]);
    for (std::size_t i = 0; i < T * kNumChannels; ++i) {
      s.curves[v].at(i) /= n;
      s.curves_signed[v].at(i) /= n;
    }
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      double acc = 0.0;
      for (std::size_t t = 0; t < T; ++t) acc += s.curves[v].at2(t, c);
      s.overall.at(c) += acc / static_cast<double>(T);
    }
  }
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    s.overall.at(c) /= static_cast<double>(targets_present);
  }
  return s;
}

AttentionProfile extract_attention_profile(const ForecastNet& net, const WindowSet& windows,
                                           int n_threads) {
  if (windows.count() == 0) throw ConfigError("attention profile of an empty window set");
  if (windows.n_past != net.hparams.n_past || windows.n_future != net.hparams.n_future) {
    throw ConfigError("attention profile: window sizes do not match the model");
  }
  const std::size_t T = net.hparams.window_len();
  const std::size_t count = windows.count();
  const std::size_t B = net.hparams.batch_size;

  AttentionProfile profile;
  profile.mean.assign(T, 0.0);
  profile.std.assign(T, 0.0);
  profile.samples = count;

  RngStream unused(0);
  for (std::size_t at = 0; at < count; at += B) {
    const std::size_t stop = std::min(count, at + B);
    Tensor batch({stop - at, T, kNumChannels});
    std::memcpy(batch.data(), windows.inputs.data() + at * T * kNumChannels,
                (stop - at) * T * kNumChannels * sizeof(double));
    ForwardResult r = forward(net, batch, false, unused, nullptr, n_threads);
    for (std::size_t b = 0; b < stop - at; ++b) {
      for (std::size_t t = 0; t < T; ++t) {
        const double w = r.attention_weights.at2(b, t);
        profile.mean[t] += w;
        profile.std[t] += w * w;
      }
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    profile.mean[t] /= static_cast<double>(count);
    const double var = std::max(0.0, profile.std[t] / static_cast<double>(count) -
                                         profile.mean[t] * profile.mean[t]);
    profile.std[t] = std::sqrt(var);
  }
  return profile;
}

}  // namespace meteo
