#pragma once

#include <cstdint>
#include <string>

namespace meteo {

// All timestamps in this project are UTC hours since the Unix epoch.
// There is no timezone handling anywhere; local solar time is derived
// from longitude, not from civil timezones.

struct CivilTime {
  int year;
  unsigned month;  // 1..12
  unsigned day;    // 1..31
  unsigned hour;   // 0..23
};

struct Date {
  int year;
  unsigned month;
  unsigned day;
};

std::int64_t hours_from_civil(int year, unsigned month, unsigned day, unsigned hour);
CivilTime civil_from_hours(std::int64_t hours);

/// Calendar month 1..12 of a UTC hour.
int month_of(std::int64_t hours);
/// Hour of day 0..23 of a UTC hour.
int hour_of_day(std::int64_t hours);

/// "2019-01-01T00:00:00Z"
std::string format_iso_hour(std::int64_t hours);
/// Accepts "YYYY-MM-DDTHH:MM:SSZ" and "YYYY-MM-DD HH:MM:SS"; minutes and
/// seconds must be zero (hourly data). Throws ParseError otherwise.
std::int64_t parse_iso_hour(const std::string& text);

std::string format_date(const Date& d);      // "YYYY-MM-DD"
std::string format_date_compact(const Date& d);  // "YYYYMMDD"
Date parse_date(const std::string& text);    // "YYYY-MM-DD"

/// First hour (00:00) of a date as UTC hours.
std::int64_t date_start_hour(const Date& d);

}  // namespace meteo
