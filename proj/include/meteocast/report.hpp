#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "meteocast/explain.hpp"
#include "meteocast/trainer.hpp"

namespace meteo {

// Plot-data CSV builders and a small static SVG renderer behind the
// report command. All output is produced with fixed formatting so
// identical inputs give identical bytes.

extern const std::array<const char*, kNumChannels> kChannelNames;

/// Per-timestep MAE: timestep (lead 1..n_future) plus one column per
/// meteorological feature, physical units.
std::string csv_per_timestep_mae(const MetricsReport& report);

/// Truth and per-lead predictions over the covered hours. NaN entries
/// (hours a lead does not reach) become empty fields.
std::string csv_lead_series(const LeadSeries& series);

/// Attention profile over input timesteps numbered -n_past+1 .. n_future,
/// zero being the last historical step, with mean and std columns.
std::string csv_attention_profile(const AttentionProfile& profile, std::size_t n_past);

/// Overall input-channel importance, one row per channel.
std::string csv_overall_importance(const AttributionSummary& summary);

/// Importance of every input channel per input timestep for one target
/// variable, timesteps numbered as in the attention profile.
std::string csv_importance_curves(const AttributionSummary& summary, std::size_t variable,
                                  std::size_t n_past);

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;  // non-finite points break the polyline
  std::string color = "#1f77b4";
};

struct SvgChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<SvgSeries> series;
  int width = 960;
  int height = 480;
};

/// Standalone SVG document with axes, ticks, legend, and one polyline per
/// series. Throws ConfigError when no finite point exists.
std::string render_line_chart(const SvgChart& chart);

/// Standalone SVG bar chart; values must be finite and labels must match.
std::string render_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                             const std::vector<double>& values, int width = 960, int height = 480);

}  // namespace meteo
