#include "meteocast/power_api.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "meteocast/errors.hpp"

namespace meteo {

namespace {

constexpr double kFillThreshold = -900.0;
constexpr const char* kParameters[kNumFeatures] = {"T2M", "ALLSKY_SFC_SW_DWN", "RH2M"};

struct Endpoint {
  std::string scheme_host_port;
  std::string path_prefix;  // "" or "/something", no trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint must include a scheme, got \"" + url + "\"");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  if (path_start == std::string::npos) {
    e.scheme_host_port = url;
  } else {
    e.scheme_host_port = url.substr(0, path_start);
    e.path_prefix = url.substr(path_start);
    while (!e.path_prefix.empty() && e.path_prefix.back() == '/') e.path_prefix.pop_back();
  }
  return e;
}

std::string chunk_path(const Endpoint& ep, double lat, double lon, const Date& start,
                       const Date& end) {
  std::ostringstream out;
  out << ep.path_prefix << "/api/temporal/hourly/point?parameters=T2M,ALLSKY_SFC_SW_DWN,RH2M"
      << "&community=RE&longitude=" << lon << "&latitude=" << lat
      << "&start=" << format_date_compact(start) << "&end=" << format_date_compact(end)
      << "&format=JSON&time-standard=UTC";
  return out.str();
}

std::string http_get_with_retries(const Endpoint& ep, const std::string& path, int max_retries) {
  if (max_retries < 1) throw ConfigError("max_retries must be at least 1");
  std::string last_failure;
  for (int attempt = 1; attempt <= max_retries; ++attempt) {
    httplib::Client client(ep.scheme_host_port);
    client.set_connection_timeout(30, 0);
    client.set_read_timeout(120, 0);
    httplib::Result res = client.Get(path);
    if (!res) {
      last_failure = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 500) {
      last_failure = "server status " + std::to_string(res->status);
    } else if (res->status != 200) {
      throw NetworkError("POWER request failed with status " + std::to_string(res->status) +
                         " for " + ep.scheme_host_port + path);
    } else {
      return res->body;
    }
    if (attempt < max_retries) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100 * attempt));
    }
  }
  throw NetworkError("POWER request failed after " + std::to_string(max_retries) +
                     " attempts (" + last_failure + ") for " + ep.scheme_host_port + path);
}

/// Parses one chunk response and appends one row per hour of [start, end].
void append_chunk_rows(const std::string& body, const Date& start, const Date& end,
                       SeriesTable& table) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("POWER response is not valid JSON at byte " + std::to_string(e.byte) + ": " +
                     e.what());
  }
  const auto properties = doc.find("properties");
  if (properties == doc.end() || !properties->is_object()) {
    throw ParseError("POWER response lacks a \"properties\" object");
  }
  const auto parameter = properties->find("parameter");
  if (parameter == properties->end() || !parameter->is_object()) {
    throw ParseError("POWER response lacks \"properties.parameter\"");
  }
  const nlohmann::json* maps[kNumFeatures];
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const auto it = parameter->find(kParameters[f]);
    if (it == parameter->end() || !it->is_object()) {
      throw ParseError(std::string("POWER response lacks \"properties.parameter.") +
                       kParameters[f] + "\"");
    }
    maps[f] = &*it;
  }

  const std::int64_t first = date_start_hour(start);
  const std::int64_t last = date_start_hour(end) + 23;
  for (std::int64_t t = first; t <= last; ++t) {
    const CivilTime ct = civil_from_hours(t);
    char key[16];
    std::snprintf(key, sizeof(key), "%04d%02u%02u%02u", ct.year, ct.month, ct.day, ct.hour);
    SeriesRow row;
    row.t = t;
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const auto it = maps[f]->find(key);
      if (it == maps[f]->end()) continue;
      if (!it->is_number()) {
        throw ParseError(std::string("non-numeric value for ") + kParameters[f] + " at " + key);
      }
      const double v = it->get<double>();
      if (v >= kFillThreshold) row.values[f] = v;
    }
    table.rows.push_back(row);
  }
}

}  // namespace

std::string power_cache_filename(double latitude, double longitude, const Date& start,
                                 const Date& end) {
  std::ostringstream out;
  out << "power_" << latitude << "_" << longitude << "_" << format_date_compact(start) << "_"
      << format_date_compact(end) << ".json";
  return out.str();
}

SeriesTable fetch_power_hourly(double latitude, double longitude, const Date& start,
                               const Date& end, const FetchOptions& opts) {
  if (!(latitude >= -90.0 && latitude <= 90.0)) {
    throw ConfigError("latitude " + std::to_string(latitude) + " outside [-90, 90]");
  }
  if (!(longitude >= -180.0 && longitude <= 180.0)) {
    throw ConfigError("longitude " + std::to_string(longitude) + " outside [-180, 180]");
  }

  SeriesTable table;
  table.latitude = latitude;
  table.longitude = longitude;
  if (date_start_hour(start) > date_start_hour(end)) return table;

  const Endpoint ep = split_endpoint(opts.endpoint);
  if (!opts.cache_dir.empty()) {
    std::filesystem::create_directories(opts.cache_dir);
  }

  for (int year = start.year; year <= end.year; ++year) {
    const Date chunk_start = year == start.year ? start : Date{year, 1, 1};
    const Date chunk_end = year == end.year ? end : Date{year, 12, 31};

    std::string body;
    std::filesystem::path cache_file;
    if (!opts.cache_dir.empty()) {
      cache_file = std::filesystem::path(opts.cache_dir) /
                   power_cache_filename(latitude, longitude, chunk_start, chunk_end);
      if (std::filesystem::exists(cache_file)) {
        std::ifstream in(cache_file, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        body = buf.str();
      }
    }
    const bool from_cache = !body.empty();
    if (!from_cache) {
      body = http_get_with_retries(ep, chunk_path(ep, latitude, longitude, chunk_start, chunk_end),
                                   opts.max_retries);
    }
    append_chunk_rows(body, chunk_start, chunk_end, table);
    if (!from_cache && !cache_file.empty()) {
      std::ofstream out(cache_file, std::ios::binary);
      out.write(body.data(), static_cast<std::streamsize>(body.size()));
    }
  }
  return table;
}

}  // namespace meteo
