#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "meteocast/data.hpp"
#include "meteocast/model.hpp"

namespace meteo {

// Mini-batch training with Adam, seeded shuffling, chronological
// validation split, and early stopping; plus the evaluation suite that
// produces per-feature and per-timestep test metrics.

struct AdamState {
  std::vector<Tensor> m;  // first moments, one per parameter tensor
  std::vector<Tensor> v;  // second moments
  std::size_t t = 0;      // completed steps
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros_like(const ForecastNet& net);
};

/// One bias-corrected Adam update over every parameter tensor, in the
/// fixed parameter order. Throws TrainError naming the parameter if its
/// gradient is non-finite.
void adam_step(ForecastNet& net, const NetGrads& grads, AdamState& state, double lr);

struct TrainConfig {
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  int n_threads = 1;
  // Called after each epoch when set; useful for progress logging.
  std::function<void(std::size_t epoch, double train_loss, double val_loss)> on_epoch;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
  bool early_stopped = false;
};

/// Trains net in place. Windows are split chronologically: the final
/// validation_fraction of them (by origin order) form the validation set.
/// After the loop the parameters of the best-validation epoch are
/// restored. max_epochs=0 returns an empty history with net untouched.
TrainHistory train(ForecastNet& net, const WindowSet& windows, const TrainConfig& cfg);

struct MetricsReport {
  std::array<double, kNumFeatures> mae{};        // physical units
  Tensor per_timestep;                           // [n_future, 3], physical units
  std::array<double, kNumFeatures> data_min{};   // test target statistics
  std::array<double, kNumFeatures> data_max{};
  std::array<double, kNumFeatures> data_mean{};
  std::array<double, kNumFeatures> data_std{};
  std::array<double, kNumFeatures> mae_over_std{};
  std::size_t window_count = 0;
};

/// Inference over every window, inverse-scaled to physical units before
/// any error is taken. The windows must have been built with the net's
/// own scalers (hash-checked).
MetricsReport evaluate(const ForecastNet& net, const WindowSet& windows, int n_threads = 1);

struct LeadSeries {
  std::vector<int> leads;
  std::vector<std::int64_t> times;  // consecutive wall-clock hours
  Tensor truth;      // [n_times, 3], physical units (NaN where uncovered)
  Tensor predicted;  // [n_leads, n_times, 3], NaN where no window supplies that lead
};

/// For each requested lead L and each covered hour t, the prediction for t
/// issued L hours ahead (from the window whose L-th future step lands on
/// t), next to the ground truth.
LeadSeries extract_lead_time_series(const ForecastNet& net, const WindowSet& windows,
                                    const std::vector<int>& leads, int n_threads = 1);

/// Persistence baselines on the raw series, averaged over the same
/// (origin, lead) pairs as stride-1 windows of the given sizes.
/// kLastValue repeats the final observation of the past block for every
/// lead; kDayBefore predicts each target hour with the observation 24
/// hours before it. Pairs whose source or target value is missing are
/// skipped per feature.
enum class PersistenceMode { kLastValue, kDayBefore };

struct PersistenceReport {
  std::array<double, kNumFeatures> mae{};          // physical units
  Tensor per_timestep;                             // [n_future, 3]
  std::size_t pairs = 0;                           // evaluated (origin, lead) pairs
  std::size_t skipped = 0;
};
PersistenceReport persistence_mae(const SeriesTable& s, std::size_t n_past, std::size_t n_future,
                                  PersistenceMode mode = PersistenceMode::kDayBefore);

}  // namespace meteo
