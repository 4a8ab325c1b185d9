#pragma once

#include <optional>
#include <string>

#include "fadacs/common.hpp"

namespace fadacs::timeutil {

struct civil_datetime {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
  int hour = 0;
  int minute = 0;
  int second = 0;
};

bool valid_civil(const civil_datetime& c);

// days since 1970-01-01 for a valid civil date (proleptic Gregorian)
std::int64_t days_from_civil(int y, int m, int d);
void civil_from_days(std::int64_t z, int& y, int& m, int& d);

second_t to_seconds(const civil_datetime& c);  // throws "InvalidDate" on bad calendar values
civil_datetime from_seconds(second_t s);

// Monday = 0 ... Sunday = 6
int day_of_week(second_t s);
inline bool is_weekend(second_t s) { return day_of_week(s) >= 5; }

int minute_of_day(second_t s);

// Accepts "YYYY-MM-DD HH:MM[:SS]", "YYYY-MM-DDTHH:MM[:SS]" and
// "DD/MM/YYYY HH:MM[:SS]". Returns nullopt on malformed or impossible dates.
std::optional<second_t> parse_datetime(const std::string& text);

std::string format_minute(minute_t m);   // "YYYY-MM-DD HH:MM"
std::string format_second(second_t s);   // "YYYY-MM-DD HH:MM:SS"

second_t start_of_day(second_t s);
inline bool same_calendar_day(second_t a, second_t b) {
  return start_of_day(a) == start_of_day(b);
}
inline bool at_midnight(second_t s) { return s == start_of_day(s); }

}  // namespace fadacs::timeutil
