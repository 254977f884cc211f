#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "meteocast/errors.hpp"
#include "meteocast/rng.hpp"
#include "meteocast/synth.hpp"
#include "meteocast/timeutil.hpp"

using namespace meteo;

namespace {

std::vector<double> residuals(const SeriesTable& s, const SynthConfig& cfg, std::size_t f) {
  std::vector<double> out;
  out.reserve(s.rows.size());
  for (const SeriesRow& r : s.rows) {
    out.push_back(*r.values[f] - synthetic_deterministic(cfg, f, r.t));
  }
  return out;
}

double mean(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("generator covers whole calendar years with complete hourly rows") {
  SynthConfig cfg;
  cfg.n_years = 5;  // 2019..2023 includes one leap year
  const SeriesTable s = generate_synthetic_series(cfg);
  CHECK(s.rows.size() == (4 * 8760 + 8784));
  CHECK(s.latitude == cfg.latitude);
  CHECK(s.longitude == cfg.longitude);
  CHECK(s.rows.front().t == hours_from_civil(2019, 1, 1, 0));
  for (std::size_t i = 0; i < s.rows.size(); ++i) {
    REQUIRE(s.rows[i].complete());
    if (i > 0) REQUIRE(s.rows[i].t == s.rows[i - 1].t + 1);
  }
}

TEST_CASE("generator is deterministic per seed") {
  SynthConfig cfg;
  cfg.n_years = 1;
  const SeriesTable a = generate_synthetic_series(cfg);
  const SeriesTable b = generate_synthetic_series(cfg);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      REQUIRE(*a.rows[i].values[f] == *b.rows[i].values[f]);
    }
  }

  cfg.seed = 1;
  const SeriesTable c = generate_synthetic_series(cfg);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    if (*a.rows[i].values[0] != *c.rows[i].values[0]) ++differing;
  }
  CHECK(differing > a.rows.size() / 2);
}

TEST_CASE("zero noise reduces to the deterministic component exactly") {
  SynthConfig cfg;
  cfg.n_years = 1;
  for (auto& ch : cfg.channels) ch.noise_sigma = 0.0;
  const SeriesTable s = generate_synthetic_series(cfg);
  for (const SeriesRow& r : s.rows) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      REQUIRE(*r.values[f] == synthetic_deterministic(cfg, f, r.t));
    }
  }
}

TEST_CASE("deterministic component is linear in the cyclical encodings") {
  // Reconstruct each channel from the window encodings by solving for the
  // five coefficients at five timestamps, then check every other hour.
  SynthConfig cfg;
  const std::int64_t t0 = hours_from_civil(2019, 1, 1, 0);
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const SynthChannel& ch = cfg.channels[f];
    for (std::int64_t t = t0; t < t0 + 24 * 400; t += 7) {
      const auto [msin, mcos] = encode_cyclical(static_cast<double>(month_of(t)), 12);
      const auto [ssin, scos] =
          encode_cyclical(solar_hour(static_cast<double>(hour_of_day(t)), cfg.longitude), 24);
      const double expected = ch.base + ch.annual_sin * msin + ch.annual_cos * mcos +
                              ch.diurnal_sin * ssin + ch.diurnal_cos * scos;
      REQUIRE(synthetic_deterministic(cfg, f, t) == expected);
    }
  }
}

TEST_CASE("residuals recover the AR(1) parameters") {
  SynthConfig cfg;
  cfg.n_years = 5;
  cfg.seed = 7;
  const SeriesTable s = generate_synthetic_series(cfg);
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const std::vector<double> res = residuals(s, cfg, f);
    // Lag-1 autocorrelation close to rho.
    std::vector<double> head(res.begin(), res.end() - 1);
    std::vector<double> tail(res.begin() + 1, res.end());
    CHECK(correlation(head, tail) == doctest::Approx(cfg.rho).epsilon(0.02));
    // Innovation std close to noise_sigma.
    std::vector<double> innov;
    for (std::size_t i = 1; i < res.size(); ++i) innov.push_back(res[i] - cfg.rho * res[i - 1]);
    double ss = 0.0;
    for (double e : innov) ss += e * e;
    const double sigma_hat = std::sqrt(ss / static_cast<double>(innov.size()));
    CHECK(sigma_hat == doctest::Approx(cfg.channels[f].noise_sigma).epsilon(0.03));
  }
}

TEST_CASE("temperature and humidity innovations are anti-correlated") {
  SynthConfig cfg;
  cfg.n_years = 5;
  cfg.seed = 11;
  const SeriesTable s = generate_synthetic_series(cfg);
  const std::vector<double> temp = residuals(s, cfg, 0);
  const std::vector<double> irr = residuals(s, cfg, 1);
  const std::vector<double> hum = residuals(s, cfg, 2);
  CHECK(correlation(temp, hum) == doctest::Approx(-cfg.coupling).epsilon(0.1));
  CHECK(std::abs(correlation(temp, irr)) < 0.05);
}

TEST_CASE("analytic floor matches hand-computed values") {
  const double g = std::sqrt(2.0 / M_PI);
  // One lead: plain Gaussian MAE.
  CHECK(analytic_mae_floor(0.0, 1.5, 1) == doctest::Approx(g * 1.5).epsilon(1e-14));
  // rho 0 keeps every lead at the one-step floor.
  CHECK(analytic_mae_floor(0.0, 2.0, 48) == doctest::Approx(g * 2.0).epsilon(1e-14));
  // rho 0.5, two leads: mean of sqrt(1) and sqrt(1.25).
  CHECK(analytic_mae_floor(0.5, 1.0, 2) ==
        doctest::Approx(g * (1.0 + std::sqrt(1.25)) / 2.0).epsilon(1e-14));
  // Scales linearly in sigma.
  CHECK(analytic_mae_floor(0.9, 3.0, 48) == doctest::Approx(3.0 * analytic_mae_floor(0.9, 1.0, 48)).epsilon(1e-14));
  // More leads never lowers the floor.
  CHECK(analytic_mae_floor(0.9, 1.0, 48) > analytic_mae_floor(0.9, 1.0, 24));
}

TEST_CASE("analytic floor matches a Monte Carlo oracle") {
  // Simulate the optimal predictor directly: conditioned on the state at
  // the forecast origin, the lead-L residual is the accumulated
  // innovation sum. Average |residual| over many seeded trajectories.
  const double rho = 0.9;
  const double sigma = 1.3;
  const std::size_t n_leads = 48;
  RngStream rng(123);
  const std::size_t n_paths = 20000;
  std::vector<double> acc(n_leads, 0.0);
  for (std::size_t p = 0; p < n_paths; ++p) {
    double residual = 0.0;
    for (std::size_t lead = 0; lead < n_leads; ++lead) {
      residual = rho * residual + sigma * rng.next_normal();
      acc[lead] += std::abs(residual);
    }
  }
  double mc = 0.0;
  for (double a : acc) mc += a / static_cast<double>(n_paths);
  mc /= static_cast<double>(n_leads);
  CHECK(analytic_mae_floor(rho, sigma, n_leads) == doctest::Approx(mc).epsilon(0.01));
}

TEST_CASE("day-before persistence on the synthetic series sits near its analytic value") {
  // The diurnal part repeats every 24 hours and the annual part is
  // constant within a month, so persistence error is almost purely the
  // noise difference x(t) - x(t-24), whose std is
  // sigma_x * sqrt(2 (1 - rho^24)).
  SynthConfig cfg;
  cfg.n_years = 3;
  cfg.seed = 21;
  const SeriesTable s = generate_synthetic_series(cfg);
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const std::vector<double> res = residuals(s, cfg, f);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 24; i < res.size(); ++i) {
      acc += std::abs(res[i] - res[i - 24]);
      ++n;
    }
    const double sigma_x = cfg.channels[f].noise_sigma / std::sqrt(1.0 - cfg.rho * cfg.rho);
    const double expected =
        std::sqrt(2.0 / M_PI) * sigma_x * std::sqrt(2.0 * (1.0 - std::pow(cfg.rho, 24)));
    CHECK(acc / static_cast<double>(n) == doctest::Approx(expected).epsilon(0.04));
  }
}

TEST_CASE("invalid configs are rejected") {
  SynthConfig cfg;
  cfg.n_years = 0;
  CHECK_THROWS_AS(generate_synthetic_series(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.rho = 1.0;
  CHECK_THROWS_AS(generate_synthetic_series(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.latitude = 91.0;
  CHECK_THROWS_AS(generate_synthetic_series(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.channels[1].noise_sigma = -1.0;
  CHECK_THROWS_AS(generate_synthetic_series(cfg), ConfigError);
  CHECK_THROWS_AS(analytic_mae_floor(1.0, 1.0, 48), ConfigError);
  CHECK_THROWS_AS(analytic_mae_floor(0.5, -1.0, 48), ConfigError);
  CHECK_THROWS_AS(analytic_mae_floor(0.5, 1.0, 0), ConfigError);
}
