#include "meteocast/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "meteocast/errors.hpp"
#include "meteocast/hash.hpp"

namespace meteo {

const std::array<const char*, kNumFeatures> kFeatureNames = {"temp_c", "irrad_wm2", "relhum_pct"};

namespace {

void write_raw(std::ofstream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void read_raw(std::ifstream& in, void* data, std::size_t n, const char* field) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(std::string("window cache truncated while reading ") + field);
  }
}

}  // namespace

SeriesTable clean_series(const SeriesTable& s, std::size_t max_gap_hours, CleanReport* report) {
  CleanReport local;
  CleanReport& rep = report ? *report : local;
  rep = CleanReport{};

  SeriesTable out;
  out.latitude = s.latitude;
  out.longitude = s.longitude;
  if (s.rows.empty()) return out;

  for (std::size_t i = 1; i < s.rows.size(); ++i) {
    if (s.rows[i].t <= s.rows[i - 1].t) {
      throw ParseError("series rows not strictly increasing at " +
                       format_iso_hour(s.rows[i].t));
    }
  }

  // Materialize the full hourly grid; absent rows become all-missing.
  const std::int64_t t0 = s.rows.front().t, t1 = s.rows.back().t;
  out.rows.resize(static_cast<std::size_t>(t1 - t0 + 1));
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    out.rows[i].t = t0 + static_cast<std::int64_t>(i);
  }
  for (const SeriesRow& r : s.rows) {
    out.rows[static_cast<std::size_t>(r.t - t0)].values = r.values;
  }

  const std::size_t n = out.rows.size();
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    std::size_t i = 0;
    while (i < n) {
      if (out.rows[i].values[f].has_value()) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < n && !out.rows[j].values[f].has_value()) ++j;
      const std::size_t len = j - i;
      const bool interior = i > 0 && j < n;
      if (interior && len <= max_gap_hours) {
        const double a = *out.rows[i - 1].values[f];
        const double b = *out.rows[j].values[f];
        for (std::size_t k = 0; k < len; ++k) {
          const double frac = static_cast<double>(k + 1) / static_cast<double>(len + 1);
          out.rows[i + k].values[f] = a + (b - a) * frac;
        }
        rep.interpolated += len;
      } else {
        rep.still_missing += len;
        rep.gaps.emplace_back(f, out.rows[i].t, len);
      }
      i = j;
    }
  }

  for (SeriesRow& r : out.rows) {
    if (r.values[kChIrrad] && *r.values[kChIrrad] < 0.0) {
      r.values[kChIrrad] = 0.0;
      ++rep.clamped;
    }
    if (r.values[kChRelhum]) {
      const double v = *r.values[kChRelhum];
      const double c = std::clamp(v, 0.0, 100.0);
      if (c != v) {
        r.values[kChRelhum] = c;
        ++rep.clamped;
      }
    }
  }
  return out;
}

std::pair<double, double> encode_cyclical(double t, int period) {
  if (period <= 0) {
    throw ConfigError("cyclical period must be positive, got " + std::to_string(period));
  }
  const double angle = 2.0 * std::numbers::pi * t / static_cast<double>(period);
  return {std::sin(angle), std::cos(angle)};
}

double solar_hour(double utc_decimal_hour, double longitude_deg) {
  double h = std::fmod(utc_decimal_hour + longitude_deg / 15.0, 24.0);
  if (h < 0.0) h += 24.0;
  return h;
}

Scaler fit_minmax(std::string feature, const std::vector<double>& values) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value while fitting " + feature);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (values.empty() || !(hi > lo)) {
    throw ConfigError("cannot fit min-max scaler for " + feature +
                      ": need at least two distinct values");
  }
  return Scaler{std::move(feature), lo, hi};
}

double apply_minmax(const Scaler& s, double v) { return (v - s.min) / (s.max - s.min); }

double invert_minmax(const Scaler& s, double v) { return s.min + v * (s.max - s.min); }

std::array<Scaler, kNumFeatures> fit_scalers(const SeriesTable& train) {
  std::array<Scaler, kNumFeatures> out;
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    std::vector<double> values;
    values.reserve(train.rows.size());
    for (const SeriesRow& r : train.rows) {
      if (r.values[f]) values.push_back(*r.values[f]);
    }
    out[f] = fit_minmax(kFeatureNames[f], values);
  }
  return out;
}

std::uint64_t scaler_hash(const std::array<Scaler, kNumFeatures>& scalers) {
  std::uint64_t h = kFnv64Offset;
  for (const Scaler& s : scalers) {
    fnv1a_accumulate(h, s.feature.data(), s.feature.size());
    const unsigned char sep = 0;
    fnv1a_accumulate(h, &sep, 1);
    fnv1a_accumulate(h, &s.min, sizeof(double));
    fnv1a_accumulate(h, &s.max, sizeof(double));
  }
  return h;
}

std::uint64_t WindowSet::checksum() const {
  std::uint64_t h = kFnv64Offset;
  fnv1a_accumulate(h, &n_past, sizeof(n_past));
  fnv1a_accumulate(h, &n_future, sizeof(n_future));
  fnv1a_accumulate(h, origins.data(), origins.size() * sizeof(std::int64_t));
  fnv1a_accumulate(h, inputs.data(), inputs.size() * sizeof(double));
  fnv1a_accumulate(h, targets.data(), targets.size() * sizeof(double));
  return h;
}

WindowSet build_windows(const SeriesTable& s, const std::array<Scaler, kNumFeatures>& scalers,
                        std::size_t n_past, std::size_t n_future) {
  if (n_past < 1 || n_future < 1) {
    throw ConfigError("window sizes must be positive: n_past=" + std::to_string(n_past) +
                      " n_future=" + std::to_string(n_future));
  }
  const std::size_t T = n_past + n_future;
  const std::size_t n = s.rows.size();

  // Maximal runs of complete rows at exact hourly spacing.
  std::vector<std::pair<std::size_t, std::size_t>> segments;  // [begin, end)
  std::size_t i = 0;
  while (i < n) {
    if (!s.rows[i].complete()) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < n && s.rows[j].complete() && s.rows[j].t == s.rows[j - 1].t + 1) ++j;
    segments.emplace_back(i, j);
    i = j;
  }

  std::size_t count = 0;
  for (auto [b, e] : segments) {
    const std::size_t len = e - b;
    if (len >= T) count += len - T + 1;
  }

  WindowSet ws;
  ws.n_past = n_past;
  ws.n_future = n_future;
  ws.scalers = scaler_hash(scalers);
  const std::size_t possible = n >= T ? n - T + 1 : 0;
  ws.dropped = possible - count;
  if (count == 0) return ws;

  ws.inputs = Tensor({count, T, kNumChannels});
  ws.targets = Tensor({count, n_future, kNumFeatures});
  ws.origins.reserve(count);

  std::size_t w = 0;
  for (auto [b, e] : segments) {
    const std::size_t len = e - b;
    if (len < T) continue;
    for (std::size_t r0 = b; r0 + T <= e; ++r0, ++w) {
      ws.origins.push_back(s.rows[r0].t);
      for (std::size_t k = 0; k < T; ++k) {
        const SeriesRow& row = s.rows[r0 + k];
        if (k < n_past) {
          for (std::size_t f = 0; f < kNumFeatures; ++f) {
            ws.inputs.at3(w, k, f) = apply_minmax(scalers[f], *row.values[f]);
          }
        }
        const unsigned month = month_of(row.t);
        auto [ms, mc] = encode_cyclical(static_cast<double>(month), 12);
        auto [ss, sc] = encode_cyclical(
            solar_hour(static_cast<double>(hour_of_day(row.t)), s.longitude), 24);
        ws.inputs.at3(w, k, kChMonthSin) = ms;
        ws.inputs.at3(w, k, kChMonthCos) = mc;
        ws.inputs.at3(w, k, kChSolhSin) = ss;
        ws.inputs.at3(w, k, kChSolhCos) = sc;
      }
      for (std::size_t k = 0; k < n_future; ++k) {
        const SeriesRow& row = s.rows[r0 + n_past + k];
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
          ws.targets.at3(w, k, f) = apply_minmax(scalers[f], *row.values[f]);
        }
      }
    }
  }
  return ws;
}

WindowSet window_range(const WindowSet& ws, std::size_t begin, std::size_t end) {
  if (begin > end || end > ws.count()) {
    throw ConfigError("window_range [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") outside [0, " + std::to_string(ws.count()) + ")");
  }
  WindowSet out;
  out.n_past = ws.n_past;
  out.n_future = ws.n_future;
  out.scalers = ws.scalers;
  const std::size_t count = end - begin;
  if (count == 0) return out;
  const std::size_t T = ws.n_past + ws.n_future;
  out.inputs = Tensor({count, T, kNumChannels});
  out.targets = Tensor({count, ws.n_future, kNumFeatures});
  out.origins.assign(ws.origins.begin() + static_cast<std::ptrdiff_t>(begin),
                     ws.origins.begin() + static_cast<std::ptrdiff_t>(end));
  std::copy(ws.inputs.data() + begin * T * kNumChannels,
            ws.inputs.data() + end * T * kNumChannels, out.inputs.data());
  std::copy(ws.targets.data() + begin * ws.n_future * kNumFeatures,
            ws.targets.data() + end * ws.n_future * kNumFeatures, out.targets.data());
  return out;
}

std::pair<Tensor, std::int64_t> build_forecast_input(
    const SeriesTable& s, const std::array<Scaler, kNumFeatures>& scalers, std::size_t n_past,
    std::size_t n_future) {
  if (n_past < 1 || n_future < 1) throw ConfigError("window sizes must be positive");
  if (s.rows.size() < n_past) {
    throw ConfigError("forecast input needs the last " + std::to_string(n_past) +
                      " observed hours; series has " + std::to_string(s.rows.size()));
  }
  const std::size_t base = s.rows.size() - n_past;
  for (std::size_t k = 0; k < n_past; ++k) {
    const SeriesRow& row = s.rows[base + k];
    if (!row.complete()) {
      throw ConfigError("forecast input: missing value at " + format_iso_hour(row.t));
    }
    if (k > 0 && row.t != s.rows[base + k - 1].t + 1) {
      throw ConfigError("forecast input: gap before " + format_iso_hour(row.t));
    }
  }

  const std::size_t T = n_past + n_future;
  Tensor input({1, T, kNumChannels});
  const std::int64_t t0 = s.rows[base].t;
  for (std::size_t k = 0; k < T; ++k) {
    const std::int64_t t = t0 + static_cast<std::int64_t>(k);
    if (k < n_past) {
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        input.at3(0, k, f) = apply_minmax(scalers[f], *s.rows[base + k].values[f]);
      }
    }
    auto [ms, mc] = encode_cyclical(static_cast<double>(month_of(t)), 12);
    auto [ss, sc] = encode_cyclical(solar_hour(static_cast<double>(hour_of_day(t)), s.longitude), 24);
    input.at3(0, k, kChMonthSin) = ms;
    input.at3(0, k, kChMonthCos) = mc;
    input.at3(0, k, kChSolhSin) = ss;
    input.at3(0, k, kChSolhCos) = sc;
  }
  return {std::move(input), t0 + static_cast<std::int64_t>(n_past)};
}

void save_series_csv(const std::string& path, const SeriesTable& s) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", s.latitude);
  out << "# latitude: " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", s.longitude);
  out << "# longitude: " << buf << "\n";
  out << "utc_timestamp,temp_c,irrad_wm2,relhum_pct\n";
  for (const SeriesRow& r : s.rows) {
    out << format_iso_hour(r.t);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      out << ',';
      if (r.values[f]) {
        std::snprintf(buf, sizeof buf, "%.17g", *r.values[f]);
        out << buf;
      }
    }
    out << "\n";
  }
  if (!out) throw FormatError("write failure on " + path);
}

SeriesTable load_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  SeriesTable s;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      double v = 0.0;
      if (std::sscanf(line.c_str(), "# latitude: %lf", &v) == 1) s.latitude = v;
      if (std::sscanf(line.c_str(), "# longitude: %lf", &v) == 1) s.longitude = v;
      continue;
    }
    if (!header_seen) {
      if (line != "utc_timestamp,temp_c,irrad_wm2,relhum_pct") {
        throw ParseError(path + ":" + std::to_string(lineno) + ": unexpected header \"" + line +
                         "\"");
      }
      header_seen = true;
      continue;
    }
    std::array<std::string, 4> fields;
    std::size_t start = 0, idx = 0;
    for (std::size_t pos = 0; pos <= line.size(); ++pos) {
      if (pos == line.size() || line[pos] == ',') {
        if (idx >= 4) throw ParseError(path + ":" + std::to_string(lineno) + ": too many fields");
        fields[idx++] = line.substr(start, pos - start);
        start = pos + 1;
      }
    }
    if (idx != 4) throw ParseError(path + ":" + std::to_string(lineno) + ": expected 4 fields");
    SeriesRow row;
    try {
      row.t = parse_iso_hour(fields[0]);
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      const std::string& v = fields[f + 1];
      if (v.empty()) continue;
      char* end = nullptr;
      const double parsed = std::strtod(v.c_str(), &end);
      if (end != v.c_str() + v.size()) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": bad number \"" + v + "\"");
      }
      row.values[f] = parsed;
    }
    s.rows.push_back(row);
  }
  if (!header_seen) throw ParseError(path + ": missing header row");
  return s;
}

namespace {
constexpr char kWindowMagic[4] = {'M', 'W', 'I', 'N'};
constexpr std::uint32_t kWindowVersion = 1;
}  // namespace

void save_window_cache(const std::string& path, const WindowSet& ws, std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  write_raw(out, kWindowMagic, 4);
  write_raw(out, &kWindowVersion, sizeof kWindowVersion);
  const std::uint64_t meta[6] = {config_hash,
                                 ws.scalers,
                                 static_cast<std::uint64_t>(ws.n_past),
                                 static_cast<std::uint64_t>(ws.n_future),
                                 static_cast<std::uint64_t>(ws.count()),
                                 static_cast<std::uint64_t>(ws.dropped)};
  write_raw(out, meta, sizeof meta);
  write_raw(out, ws.origins.data(), ws.origins.size() * sizeof(std::int64_t));
  write_raw(out, ws.inputs.data(), ws.inputs.size() * sizeof(double));
  write_raw(out, ws.targets.data(), ws.targets.size() * sizeof(double));
  const std::uint64_t sum = ws.checksum();
  write_raw(out, &sum, sizeof sum);
  if (!out) throw FormatError("write failure on " + path);
}

WindowSet load_window_cache(const std::string& path, std::uint64_t expected_config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  char magic[4];
  read_raw(in, magic, 4, "magic");
  if (std::memcmp(magic, kWindowMagic, 4) != 0) {
    throw FormatError(path + ": bad magic, not a window cache");
  }
  std::uint32_t version = 0;
  read_raw(in, &version, sizeof version, "version");
  if (version != kWindowVersion) {
    throw FormatError(path + ": unsupported window cache version " + std::to_string(version));
  }
  std::uint64_t meta[6];
  read_raw(in, meta, sizeof meta, "header");
  if (meta[0] != expected_config_hash) {
    throw ConfigError(path + ": window cache was built with a different configuration");
  }
  WindowSet ws;
  ws.scalers = meta[1];
  ws.n_past = static_cast<std::size_t>(meta[2]);
  ws.n_future = static_cast<std::size_t>(meta[3]);
  const std::size_t count = static_cast<std::size_t>(meta[4]);
  ws.dropped = static_cast<std::size_t>(meta[5]);
  if (ws.n_past < 1 || ws.n_future < 1 || count > (std::size_t{1} << 32)) {
    throw FormatError(path + ": implausible window cache header");
  }
  ws.origins.resize(count);
  read_raw(in, ws.origins.data(), count * sizeof(std::int64_t), "origins");
  if (count > 0) {
    const std::size_t T = ws.n_past + ws.n_future;
    ws.inputs = Tensor({count, T, kNumChannels});
    ws.targets = Tensor({count, ws.n_future, kNumFeatures});
    read_raw(in, ws.inputs.data(), ws.inputs.size() * sizeof(double), "inputs");
    read_raw(in, ws.targets.data(), ws.targets.size() * sizeof(double), "targets");
  }
  std::uint64_t sum = 0;
  read_raw(in, &sum, sizeof sum, "checksum");
  if (sum != ws.checksum()) throw FormatError(path + ": checksum mismatch, cache corrupt");
  return ws;
}

}  // namespace meteo
