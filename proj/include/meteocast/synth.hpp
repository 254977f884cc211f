#pragma once

#include <array>
#include <cstdint>

#include "meteocast/data.hpp"

namespace meteo {

// Seeded synthetic weather analog: per channel, a month-step annual
// component plus a solar-hour diurnal component (both exactly linear in
// the cyclical input encodings) on top of stationary AR(1) noise.
// Temperature and humidity innovations are anti-correlated.

struct SynthChannel {
  double base = 0.0;
  double annual_sin = 0.0;   // coefficient on sin(2 pi month / 12)
  double annual_cos = 0.0;
  double diurnal_sin = 0.0;  // coefficient on sin(2 pi solar_hour / 24)
  double diurnal_cos = 0.0;
  double noise_sigma = 1.0;  // AR(1) innovation std
};

struct SynthConfig {
  double latitude = 38.0;
  double longitude = 23.7;
  int start_year = 2019;
  std::size_t n_years = 5;
  std::uint64_t seed = 0;
  double rho = 0.9;        // AR(1) coefficient, shared by all channels
  double coupling = 0.6;   // anti-correlation of humidity and temperature innovations
  std::array<SynthChannel, kNumFeatures> channels = {
      SynthChannel{18.0, -3.0, -7.3, -3.0, -5.2, 0.9},    // temperature, deg C analog
      SynthChannel{600.0, -25.0, -55.0, 0.0, -240.0, 20.0},  // irradiance analog
      SynthChannel{50.0, 3.0, 7.0, 8.66, 5.0, 2.2},       // humidity analog
  };

  void validate() const;
};

/// Hourly rows over n_years whole calendar years from January 1 of
/// start_year. Deterministic for a fixed config. AR states start in
/// their stationary distribution, so the series has no warm-up
/// transient. No values are missing.
SeriesTable generate_synthetic_series(const SynthConfig& cfg);

/// The deterministic (noise-free) component of one channel at hour t,
/// for the given config.
double synthetic_deterministic(const SynthConfig& cfg, std::size_t channel, std::int64_t t);

/// Best achievable mean absolute error over leads 1..n_leads for AR(1)
/// noise: the optimal predictor leaves a centered Gaussian residual at
/// lead L with variance sigma^2 * sum_{j<L} rho^(2j), whose MAE is
/// sqrt(2/pi) times its std.
double analytic_mae_floor(double rho, double sigma_innovation, std::size_t n_leads);

}  // namespace meteo
