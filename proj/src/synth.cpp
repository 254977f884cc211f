#include "meteocast/synth.hpp"

#include <cmath>

#include "meteocast/errors.hpp"
#include "meteocast/rng.hpp"

namespace meteo {

void SynthConfig::validate() const {
  if (latitude < -90.0 || latitude > 90.0 || longitude < -180.0 || longitude > 180.0) {
    throw ConfigError("synthetic series: coordinates out of range");
  }
  if (n_years == 0) throw ConfigError("synthetic series: n_years must be positive");
  if (!(rho > -1.0 && rho < 1.0)) {
    throw ConfigError("synthetic series: rho must lie in (-1, 1)");
  }
  if (!(coupling >= -1.0 && coupling <= 1.0)) {
    throw ConfigError("synthetic series: coupling must lie in [-1, 1]");
  }
  for (const SynthChannel& ch : channels) {
    if (!(ch.noise_sigma >= 0.0)) {
      throw ConfigError("synthetic series: noise_sigma must be non-negative");
    }
  }
}

double synthetic_deterministic(const SynthConfig& cfg, std::size_t channel, std::int64_t t) {
  const SynthChannel& ch = cfg.channels.at(channel);
  const auto [msin, mcos] = encode_cyclical(static_cast<double>(month_of(t)), 12);
  const double solh = solar_hour(static_cast<double>(hour_of_day(t)), cfg.longitude);
  const auto [ssin, scos] = encode_cyclical(solh, 24);
  return ch.base + ch.annual_sin * msin + ch.annual_cos * mcos + ch.diurnal_sin * ssin +
         ch.diurnal_cos * scos;
}

SeriesTable generate_synthetic_series(const SynthConfig& cfg) {
  cfg.validate();

  const std::int64_t t0 = hours_from_civil(cfg.start_year, 1, 1, 0);
  const std::int64_t t_end =
      hours_from_civil(cfg.start_year + static_cast<int>(cfg.n_years), 1, 1, 0);

  RngStream rng(cfg.seed);
  const double rho = cfg.rho;
  // Start each AR state in its stationary distribution so the first rows
  // are statistically identical to the rest.
  const double stationary_scale = 1.0 / std::sqrt(1.0 - rho * rho);
  std::array<double, kNumFeatures> state{};
  {
    const double g_temp = rng.next_normal();
    const double g_irr = rng.next_normal();
    const double g_hum = rng.next_normal();
    const double mix = -cfg.coupling * g_temp + std::sqrt(1.0 - cfg.coupling * cfg.coupling) * g_hum;
    state[0] = cfg.channels[0].noise_sigma * stationary_scale * g_temp;
    state[1] = cfg.channels[1].noise_sigma * stationary_scale * g_irr;
    state[2] = cfg.channels[2].noise_sigma * stationary_scale * mix;
  }

  SeriesTable table;
  table.latitude = cfg.latitude;
  table.longitude = cfg.longitude;
  table.rows.reserve(static_cast<std::size_t>(t_end - t0));
  for (std::int64_t t = t0; t < t_end; ++t) {
    if (t > t0) {
      const double g_temp = rng.next_normal();
      const double g_irr = rng.next_normal();
      const double g_hum = rng.next_normal();
      const double mix =
          -cfg.coupling * g_temp + std::sqrt(1.0 - cfg.coupling * cfg.coupling) * g_hum;
      state[0] = rho * state[0] + cfg.channels[0].noise_sigma * g_temp;
      state[1] = rho * state[1] + cfg.channels[1].noise_sigma * g_irr;
      state[2] = rho * state[2] + cfg.channels[2].noise_sigma * mix;
    }
    SeriesRow row;
    row.t = t;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      row.values[f] = synthetic_deterministic(cfg, f, t) + state[f];
    }
    table.rows.push_back(row);
  }
  return table;
}

double analytic_mae_floor(double rho, double sigma_innovation, std::size_t n_leads) {
  if (!(rho > -1.0 && rho < 1.0)) throw ConfigError("analytic_mae_floor: rho must lie in (-1, 1)");
  if (!(sigma_innovation >= 0.0)) {
    throw ConfigError("analytic_mae_floor: sigma_innovation must be non-negative");
  }
  if (n_leads == 0) throw ConfigError("analytic_mae_floor: n_leads must be positive");
  const double kGaussMae = std::sqrt(2.0 / M_PI);
  double acc = 0.0;
  double var_ratio = 0.0;  // sum_{j<L} rho^(2j)
  double pow_term = 1.0;
  for (std::size_t lead = 1; lead <= n_leads; ++lead) {
    var_ratio += pow_term;
    pow_term *= rho * rho;
    acc += kGaussMae * sigma_innovation * std::sqrt(var_ratio);
  }
  return acc / static_cast<double>(n_leads);
}

}  // namespace meteo
