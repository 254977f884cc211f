#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "meteocast/model.hpp"
#include "meteocast/tensor.hpp"

namespace meteo {

// Integrated Gradients attribution over model inputs, the aggregations
// used for the importance reports, and attention-weight profiling.

struct IgTarget {
  std::size_t variable = 0;            // output feature index
  std::vector<std::size_t> timesteps;  // prediction steps to average; empty = all future steps
};

struct Attribution {
  Tensor values;  // [n_past+n_future, 7]
  std::size_t variable = 0;
  std::vector<std::size_t> timesteps;  // resolved target steps
  std::string baseline;                // "zero" or "custom"
};

/// Midpoint-rule path integral of the model gradient from baseline to x,
/// both in scaled model space: IG_i = (x_i-b_i) * (1/m) * sum over the m
/// midpoints of dF/dx_i, where F is the mean of the target variable's
/// scaled predictions over the target timesteps. The sum of all entries
/// approaches F(x) - F(baseline) as m grows (completeness).
/// Requires steps >= 8. Non-finite gradients name the failing path step.
Attribution integrated_gradients(const ForecastNet& net, const Tensor& x, const Tensor& baseline,
                                 const IgTarget& target, std::size_t steps = 64);

/// The scalar F above, for completeness checks and reports.
double ig_target_value(const ForecastNet& net, const Tensor& x, const IgTarget& target);

/// The same path rule over an arbitrary gradient function; exact for
/// linear functions at any step count.
Tensor integrated_gradients_generic(const Tensor& x, const Tensor& baseline, std::size_t steps,
                                    const std::function<Tensor(const Tensor&)>& gradient);

struct AttributionSummary {
  Tensor overall;  // [7] mean |IG| over samples and timesteps, averaged across targets
  std::array<Tensor, kNumFeatures> curves;         // per target: [T, 7] mean |IG|
  std::array<Tensor, kNumFeatures> curves_signed;  // per target: [T, 7] mean IG
  std::array<std::size_t, kNumFeatures> samples{}; // attributions seen per target
};

/// Groups attributions by target variable and averages. Every attribution
/// must share one input shape; an empty input is a ConfigError. Targets
/// without samples get empty curves and are excluded from the overall
/// average.
AttributionSummary aggregate_attributions(const std::vector<Attribution>& attributions);

struct AttentionProfile {
  std::vector<double> mean;  // per input timestep, averaged over samples
  std::vector<double> std;   // population std per timestep
  std::size_t samples = 0;
};

/// Mean and spread of the attention weight vector across all windows.
/// Each per-sample vector lies on the simplex, so the mean sums to 1.
AttentionProfile extract_attention_profile(const ForecastNet& net, const WindowSet& windows,
                                           int n_threads = 1);

}  // namespace meteo
