#pragma once

#include <string>

#include "meteocast/data.hpp"
#include "meteocast/timeutil.hpp"

namespace meteo {

// Client for the NASA POWER hourly point endpoint. Requests are chunked
// by calendar year and raw responses are cached on disk, so a completed
// fetch can be repeated offline.

inline constexpr const char* kDefaultPowerEndpoint = "https://power.larc.nasa.gov";

struct FetchOptions {
  std::string endpoint = kDefaultPowerEndpoint;
  std::string cache_dir;  // empty disables the response cache
  int max_retries = 3;    // attempts per chunk before giving up
};

/// One row per hour of [start, end] (inclusive dates, UTC). Provider fill
/// values (anything below -900) become missing. start > end yields an
/// empty table. Transport failures raise NetworkError after max_retries
/// attempts; malformed payloads raise ParseError with a byte offset.
SeriesTable fetch_power_hourly(double latitude, double longitude, const Date& start,
                               const Date& end, const FetchOptions& opts = {});

/// The cache file a chunk request would use; exposed for cache management.
std::string power_cache_filename(double latitude, double longitude, const Date& start,
                                 const Date& end);

}  // namespace meteo
