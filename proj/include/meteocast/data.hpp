#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "meteocast/tensor.hpp"
#include "meteocast/timeutil.hpp"

namespace meteo {

// Hourly meteorological series handling: cleaning, cyclical encodings,
// min-max scaling, and sliding-window extraction with future masking.

inline constexpr std::size_t kNumChannels = 7;
inline constexpr std::size_t kNumFeatures = 3;

/// Channel order inside every model input window.
enum Channel : std::size_t {
  kChTemp = 0,
  kChIrrad = 1,
  kChRelhum = 2,
  kChMonthSin = 3,
  kChMonthCos = 4,
  kChSolhSin = 5,
  kChSolhCos = 6,
};

extern const std::array<const char*, kNumFeatures> kFeatureNames;  // temp_c, irrad_wm2, relhum_pct

struct SeriesRow {
  std::int64_t t = 0;  // UTC hours since epoch
  std::array<std::optional<double>, kNumFeatures> values;  // temp °C, irrad W/m², relhum %

  bool complete() const {
    return values[0].has_value() && values[1].has_value() && values[2].has_value();
  }
};

struct SeriesTable {
  double latitude = 0.0;
  double longitude = 0.0;
  std::vector<SeriesRow> rows;  // strictly increasing, 1-hour spacing after cleaning
};

struct CleanReport {
  std::size_t interpolated = 0;   // values filled by linear interpolation
  std::size_t still_missing = 0;  // values left missing (gap too long or at an edge)
  std::size_t clamped = 0;        // relhum clamped to [0,100] or irrad floored at 0
  // Unrepaired runs as (feature index, start timestamp, length in hours).
  std::vector<std::tuple<std::size_t, std::int64_t, std::size_t>> gaps;
};

/// Linear interpolation across gaps of at most max_gap_hours per channel;
/// longer runs stay missing and are listed in the report. Bounds enforced
/// afterwards: relhum in [0,100], irrad >= 0.
SeriesTable clean_series(const SeriesTable& s, std::size_t max_gap_hours, CleanReport* report = nullptr);

/// (sin, cos) of 2*pi*t/period.
std::pair<double, double> encode_cyclical(double t, int period);

/// Mean local solar time in [0,24): UTC decimal hour + longitude/15, wrapped.
double solar_hour(double utc_decimal_hour, double longitude_deg);

struct Scaler {
  std::string feature;
  double min = 0.0;
  double max = 1.0;
};

/// Min-max fit; requires at least two distinct values.
Scaler fit_minmax(std::string feature, const std::vector<double>& values);

double apply_minmax(const Scaler& s, double v);
double invert_minmax(const Scaler& s, double v);

/// Fits one scaler per meteorological feature from the complete rows of a
/// (training) table.
std::array<Scaler, kNumFeatures> fit_scalers(const SeriesTable& train);

/// Order-sensitive hash of feature names and min/max bytes; stored in
/// window sets and checkpoints to catch train/test scaler mismatches.
std::uint64_t scaler_hash(const std::array<Scaler, kNumFeatures>& scalers);

struct WindowSet {
  Tensor inputs;   // [count, n_past+n_future, 7]
  Tensor targets;  // [count, n_future, 3], scaled true values
  std::vector<std::int64_t> origins;  // timestamp of each window's first timestep
  std::size_t n_past = 0;
  std::size_t n_future = 0;
  std::size_t dropped = 0;  // windows lost to unrepaired gaps
  std::uint64_t scalers = 0;  // scaler_hash of the scalers used to build

  std::size_t count() const { return origins.size(); }
  std::uint64_t checksum() const;
};

/// Stride-1 windows over every contiguous complete segment. Channels 0-2
/// are scaled and zeroed over the final n_future steps; channels 3-6 are
/// the cyclical encodings of calendar month and solar hour.
WindowSet build_windows(const SeriesTable& s, const std::array<Scaler, kNumFeatures>& scalers,
                        std::size_t n_past, std::size_t n_future);

/// Copy of windows [begin, end); sizes and scaler hash carry over.
WindowSet window_range(const WindowSet& ws, std::size_t begin, std::size_t end);

/// Single inference input [1, n_past+n_future, 7] whose past block is the
/// final n_past rows of the table (required complete and hourly-contiguous)
/// and whose future block extends beyond the table's end: meteorological
/// channels zero, cyclical channels from the continuing timestamps.
/// Returns the input and the timestamp of the first forecast hour.
std::pair<Tensor, std::int64_t> build_forecast_input(
    const SeriesTable& s, const std::array<Scaler, kNumFeatures>& scalers, std::size_t n_past,
    std::size_t n_future);

// CSV schema: optional "# latitude: <v>" / "# longitude: <v>" comment lines,
// then header utc_timestamp,temp_c,irrad_wm2,relhum_pct; ISO-8601 hours;
// missing values empty.
void save_series_csv(const std::string& path, const SeriesTable& s);
SeriesTable load_series_csv(const std::string& path);

// Versioned binary window cache embedding the generating config hash.
void save_window_cache(const std::string& path, const WindowSet& ws, std::uint64_t config_hash);
WindowSet load_window_cache(const std::string& path, std::uint64_t expected_config_hash);

}  // namespace meteo
