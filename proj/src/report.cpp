#include "meteocast/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "meteocast/errors.hpp"
#include "meteocast/timeutil.hpp"

namespace meteo {

const std::array<const char*, kNumChannels> kChannelNames = {
    "temp_c", "irrad_wm2", "relhum_pct", "month_sin", "month_cos", "solh_sin", "solh_cos"};

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string pix(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Relative input-timestep label: steps 0..T-1 map to -n_past+1..n_future,
/// zero being the last historical step.
long long relative_step(std::size_t index, std::size_t n_past) {
  return static_cast<long long>(index) - static_cast<long long>(n_past) + 1;
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range padded(double lo, double hi) {
  if (lo > hi) throw ConfigError("svg chart: no finite data points");
  if (lo == hi) {
    const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
    return {lo - pad, hi + pad};
  }
  const double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad};
}

}  // namespace

std::string csv_per_timestep_mae(const MetricsReport& report) {
  if (report.per_timestep.rank() != 2 || report.per_timestep.dim(1) != kNumFeatures) {
    throw ShapeError("per-timestep MAE table must be [n_future, 3]");
  }
  std::string out = "timestep,mae_temp_c,mae_irrad_wm2,mae_relhum_pct\n";
  for (std::size_t k = 0; k < report.per_timestep.dim(0); ++k) {
    out += std::to_string(k + 1);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      out += ',';
      out += num(report.per_timestep.at2(k, f));
    }
    out += '\n';
  }
  return out;
}

std::string csv_lead_series(const LeadSeries& series) {
  if (series.truth.rank() != 2 || series.predicted.rank() != 3 ||
      series.predicted.dim(0) != series.leads.size() ||
      series.predicted.dim(1) != series.times.size()) {
    throw ShapeError("lead series tensors do not match their index vectors");
  }
  std::string out = "utc_timestamp";
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    out += ",truth_";
    out += kChannelNames[f];
  }
  for (int lead : series.leads) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      out += ",pred_lead";
      out += std::to_string(lead);
      out += '_';
      out += kChannelNames[f];
    }
  }
  out += '\n';
  for (std::size_t i = 0; i < series.times.size(); ++i) {
    out += format_iso_hour(series.times[i]);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      out += ',';
      const double v = series.truth.at2(i, f);
      if (std::isfinite(v)) out += num(v);
    }
    for (std::size_t l = 0; l < series.leads.size(); ++l) {
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        out += ',';
        const double v = series.predicted.at3(l, i, f);
        if (std::isfinite(v)) out += num(v);
      }
    }
    out += '\n';
  }
  return out;
}

std::string csv_attention_profile(const AttentionProfile& profile, std::size_t n_past) {
  if (profile.mean.size() != profile.std.size() || profile.mean.empty()) {
    throw ShapeError("attention profile mean and std must be equal-length and non-empty");
  }
  if (n_past == 0 || n_past >= profile.mean.size()) {
    throw ConfigError("attention profile: n_past must split the timesteps");
  }
  std::string out = "timestep,attention_mean,attention_std\n";
  for (std::size_t i = 0; i < profile.mean.size(); ++i) {
    out += std::to_string(relative_step(i, n_past));
    out += ',';
    out += num(profile.mean[i]);
    out += ',';
    out += num(profile.std[i]);
    out += '\n';
  }
  return out;
}

std::string csv_overall_importance(const AttributionSummary& summary) {
  if (summary.overall.rank() != 1 || summary.overall.dim(0) != kNumChannels) {
    throw ShapeError("overall importance must have one value per input channel");
  }
  std::string out = "channel,importance\n";
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    out += kChannelNames[c];
    out += ',';
    out += num(summary.overall.at(c));
    out += '\n';
  }
  return out;
}

std::string csv_importance_curves(const AttributionSummary& summary, std::size_t variable,
                                  std::size_t n_past) {
  if (variable >= kNumFeatures) throw ConfigError("importance curves: unknown target variable");
  const Tensor& curve = summary.curves[variable];
  if (curve.rank() != 2 || curve.dim(1) != kNumChannels) {
    throw ShapeError("importance curve must be [timesteps, channels]");
  }
  if (n_past == 0 || n_past >= curve.dim(0)) {
    throw ConfigError("importance curves: n_past must split the timesteps");
  }
  std::string out = "timestep";
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    out += ',';
    out += kChannelNames[c];
  }
  out += '\n';
  for (std::size_t i = 0; i < curve.dim(0); ++i) {
    out += std::to_string(relative_step(i, n_past));
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      out += ',';
      out += num(curve.at2(i, c));
    }
    out += '\n';
  }
  return out;
}

std::string render_line_chart(const SvgChart& chart) {
  if (chart.series.empty()) throw ConfigError("svg chart: no series");
  double xlo = std::numeric_limits<double>::infinity();
  double xhi = -xlo;
  double ylo = xlo;
  double yhi = -xlo;
  for (const SvgSeries& s : chart.series) {
    if (s.x.size() != s.y.size()) throw ShapeError("svg chart: series x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  }
  const Range xr = padded(xlo, xhi);
  const Range yr = padded(ylo, yhi);

  const double left = 74.0;
  const double right = static_cast<double>(chart.width) - 20.0;
  const double top = 44.0;
  const double bottom = static_cast<double>(chart.height) - 52.0;
  const auto sx = [&](double v) {
    return left + (v - xr.lo) / (xr.hi - xr.lo) * (right - left);
  };
  const auto sy = [&](double v) {
    return bottom - (v - yr.lo) / (yr.hi - yr.lo) * (bottom - top);
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(chart.width) +
         "\" height=\"" + std::to_string(chart.height) + "\" viewBox=\"0 0 " +
         std::to_string(chart.width) + " " + std::to_string(chart.height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + pix((left + right) / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         xml_escape(chart.title) + "</text>\n";

  const int n_ticks = 5;
  for (int i = 0; i <= n_ticks; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / n_ticks;
    const double px = sx(fx);
    svg += "<line x1=\"" + pix(px) + "\" y1=\"" + pix(bottom) + "\" x2=\"" + pix(px) + "\" y2=\"" +
           pix(top) + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + pix(px) + "\" y=\"" + pix(bottom + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           tick_label(fx) + "</text>\n";
    const double fy = yr.lo + (yr.hi - yr.lo) * i / n_ticks;
    const double py = sy(fy);
    svg += "<line x1=\"" + pix(left) + "\" y1=\"" + pix(py) + "\" x2=\"" + pix(right) + "\" y2=\"" +
           pix(py) + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + pix(left - 6) + "\" y=\"" + pix(py + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + tick_label(fy) +
           "</text>\n";
  }
  svg += "<line x1=\"" + pix(left) + "\" y1=\"" + pix(bottom) + "\" x2=\"" + pix(right) +
         "\" y2=\"" + pix(bottom) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + pix(left) + "\" y1=\"" + pix(bottom) + "\" x2=\"" + pix(left) +
         "\" y2=\"" + pix(top) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg += "<text x=\"" + pix((left + right) / 2) + "\" y=\"" + pix(bottom + 38) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
         xml_escape(chart.x_label) + "</text>\n";
  svg += "<text x=\"18\" y=\"" + pix((top + bottom) / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 18 " +
         pix((top + bottom) / 2) + ")\">" + xml_escape(chart.y_label) + "</text>\n";

  for (const SvgSeries& s : chart.series) {
    std::string points;
    const auto flush = [&]() {
      if (!points.empty()) {
        svg += "<polyline fill=\"none\" stroke=\"" + xml_escape(s.color) +
               "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
        points.clear();
      }
    };
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        flush();
        continue;
      }
      if (!points.empty()) points += ' ';
      points += pix(sx(s.x[i])) + "," + pix(sy(s.y[i]));
    }
    flush();
  }

  double ly = top + 6;
  for (const SvgSeries& s : chart.series) {
    svg += "<line x1=\"" + pix(right - 150) + "\" y1=\"" + pix(ly) + "\" x2=\"" +
           pix(right - 126) + "\" y2=\"" + pix(ly) + "\" stroke=\"" + xml_escape(s.color) +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + pix(right - 120) + "\" y=\"" + pix(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + xml_escape(s.label) + "</text>\n";
    ly += 16;
  }
  svg += "</svg>\n";
  return svg;
}

std::string render_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                             const std::vector<double>& values, int width, int height) {
  if (labels.empty() || labels.size() != values.size()) {
    throw ShapeError("svg bars: labels and values must be non-empty and equal-length");
  }
  double hi = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("svg bars: non-finite value");
    hi = std::max(hi, v);
  }
  if (hi == 0.0) hi = 1.0;

  const double left = 74.0;
  const double right = static_cast<double>(width) - 20.0;
  const double top = 44.0;
  const double bottom = static_cast<double>(height) - 52.0;
  const double slot = (right - left) / static_cast<double>(labels.size());

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) +
         " " + std::to_string(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + pix((left + right) / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         xml_escape(title) + "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fy = hi * 1.05 * i / 5;
    const double py = bottom - fy / (hi * 1.05) * (bottom - top);
    svg += "<line x1=\"" + pix(left) + "\" y1=\"" + pix(py) + "\" x2=\"" + pix(right) + "\" y2=\"" +
           pix(py) + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + pix(left - 6) + "\" y=\"" + pix(py + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + tick_label(fy) +
           "</text>\n";
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double x0 = left + slot * static_cast<double>(i) + slot * 0.15;
    const double w = slot * 0.7;
    const double h = values[i] / (hi * 1.05) * (bottom - top);
    svg += "<rect x=\"" + pix(x0) + "\" y=\"" + pix(bottom - h) + "\" width=\"" + pix(w) +
           "\" height=\"" + pix(h) + "\" fill=\"#1f77b4\"/>\n";
    svg += "<text x=\"" + pix(x0 + w / 2) + "\" y=\"" + pix(bottom + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           xml_escape(labels[i]) + "</text>\n";
  }
  svg += "<line x1=\"" + pix(left) + "\" y1=\"" + pix(bottom) + "\" x2=\"" + pix(right) +
         "\" y2=\"" + pix(bottom) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace meteo
