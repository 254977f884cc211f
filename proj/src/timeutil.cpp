#include "meteocast/timeutil.hpp"

#include <chrono>
#include <cstdio>

#include "meteocast/errors.hpp"

namespace meteo {

namespace {
namespace chr = std::chrono;

chr::year_month_day ymd_of(int year, unsigned month, unsigned day) {
  const chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
  if (!ymd.ok()) {
    throw ParseError("invalid calendar date " + std::to_string(year) + "-" +
                     std::to_string(month) + "-" + std::to_string(day));
  }
  return ymd;
}
}  // namespace

std::int64_t hours_from_civil(int year, unsigned month, unsigned day, unsigned hour) {
  if (hour > 23) throw ParseError("hour out of range: " + std::to_string(hour));
  const auto days = chr::sys_days{ymd_of(year, month, day)}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 24 + static_cast<std::int64_t>(hour);
}

CivilTime civil_from_hours(std::int64_t hours) {
  std::int64_t days = hours / 24;
  std::int64_t hod = hours % 24;
  if (hod < 0) {
    hod += 24;
    days -= 1;
  }
  const chr::year_month_day ymd{chr::sys_days{chr::days{days}}};
  return CivilTime{static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                   static_cast<unsigned>(ymd.day()), static_cast<unsigned>(hod)};
}

int month_of(std::int64_t hours) { return static_cast<int>(civil_from_hours(hours).month); }

int hour_of_day(std::int64_t hours) {
  std::int64_t hod = hours % 24;
  if (hod < 0) hod += 24;
  return static_cast<int>(hod);
}

std::string format_iso_hour(std::int64_t hours) {
  const CivilTime c = civil_from_hours(hours);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02u:00:00Z", c.year, c.month, c.day, c.hour);
  return buf;
}

std::int64_t parse_iso_hour(const std::string& text) {
  int year = 0;
  unsigned month = 0, day = 0, hour = 0, minute = 0, second = 0;
  char sep = 0;
  const int fields = std::sscanf(text.c_str(), "%d-%2u-%2u%c%2u:%2u:%2u", &year, &month, &day,
                                 &sep, &hour, &minute, &second);
  if (fields < 5 || (sep != 'T' && sep != ' ')) {
    throw ParseError("cannot parse timestamp \"" + text + "\"");
  }
  if (minute != 0 || second != 0) {
    throw ParseError("timestamp \"" + text + "\" is not on an hour boundary");
  }
  return hours_from_civil(year, month, day, hour);
}

std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", d.year, d.month, d.day);
  return buf;
}

std::string format_date_compact(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d%02u%02u", d.year, d.month, d.day);
  return buf;
}

Date parse_date(const std::string& text) {
  int year = 0;
  unsigned month = 0, day = 0;
  if (std::sscanf(text.c_str(), "%d-%2u-%2u", &year, &month, &day) != 3) {
    throw ParseError("cannot parse date \"" + text + "\"");
  }
  ymd_of(year, month, day);  // range check
  return Date{year, month, day};
}

std::int64_t date_start_hour(const Date& d) { return hours_from_civil(d.year, d.month, d.day, 0); }

}  // namespace meteo
