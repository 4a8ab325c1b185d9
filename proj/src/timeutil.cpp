#include "fadacs/timeutil.hpp"

#include <array>
#include <cstdio>

namespace fadacs::timeutil {

namespace {

bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
  static constexpr std::array<int, 12> d = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && leap(y)) return 29;
  return d[static_cast<std::size_t>(m - 1)];
}

}  // namespace

bool valid_civil(const civil_datetime& c) {
  if (c.month < 1 || c.month > 12) return false;
  if (c.day < 1 || c.day > days_in_month(c.year, c.month)) return false;
  if (c.hour < 0 || c.hour > 23) return false;
  if (c.minute < 0 || c.minute > 59) return false;
  if (c.second < 0 || c.second > 59) return false;
  return true;
}

// Howard Hinnant's civil calendar algorithms.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

second_t to_seconds(const civil_datetime& c) {
  if (!valid_civil(c)) throw error("InvalidDate", "impossible calendar value");
  return days_from_civil(c.year, c.month, c.day) * 86400 + c.hour * 3600 + c.minute * 60 +
         c.second;
}

civil_datetime from_seconds(second_t s) {
  std::int64_t days = s >= 0 ? s / 86400 : (s - 86399) / 86400;
  std::int64_t sod = s - days * 86400;
  civil_datetime c;
  civil_from_days(days, c.year, c.month, c.day);
  c.hour = static_cast<int>(sod / 3600);
  c.minute = static_cast<int>((sod % 3600) / 60);
  c.second = static_cast<int>(sod % 60);
  return c;
}

int day_of_week(second_t s) {
  std::int64_t days = s >= 0 ? s / 86400 : (s - 86399) / 86400;
  // 1970-01-01 was a Thursday (Monday=0 -> 3)
  return static_cast<int>(((days % 7) + 7 + 3) % 7);
}

int minute_of_day(second_t s) {
  second_t sod = s - start_of_day(s);
  return static_cast<int>(sod / 60);
}

second_t start_of_day(second_t s) {
  std::int64_t days = s >= 0 ? s / 86400 : (s - 86399) / 86400;
  return days * 86400;
}

namespace {

bool read_int(const std::string& t, std::size_t& i, int digits, int& out) {
  if (i + static_cast<std::size_t>(digits) > t.size()) return false;
  int v = 0;
  for (int k = 0; k < digits; ++k) {
    char c = t[i + static_cast<std::size_t>(k)];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  i += static_cast<std::size_t>(digits);
  out = v;
  return true;
}

bool expect(const std::string& t, std::size_t& i, char c) {
  if (i >= t.size() || t[i] != c) return false;
  ++i;
  return true;
}

}  // namespace

std::optional<second_t> parse_datetime(const std::string& raw) {
  std::size_t b = raw.find_first_not_of(" \t");
  std::size_t e = raw.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) return std::nullopt;
  std::string t = raw.substr(b, e - b + 1);

  civil_datetime c;
  std::size_t i = 0;
  bool slash = t.find('/') != std::string::npos && t.find('/') < 5;
  if (slash) {
    if (!read_int(t, i, 2, c.day) || !expect(t, i, '/') || !read_int(t, i, 2, c.month) ||
        !expect(t, i, '/') || !read_int(t, i, 4, c.year))
      return std::nullopt;
  } else {
    if (!read_int(t, i, 4, c.year) || !expect(t, i, '-') || !read_int(t, i, 2, c.month) ||
        !expect(t, i, '-') || !read_int(t, i, 2, c.day))
      return std::nullopt;
  }
  if (i >= t.size() || (t[i] != ' ' && t[i] != 'T')) return std::nullopt;
  ++i;
  if (!read_int(t, i, 2, c.hour) || !expect(t, i, ':') || !read_int(t, i, 2, c.minute))
    return std::nullopt;
  if (i < t.size() && t[i] == ':') {
    ++i;
    if (!read_int(t, i, 2, c.second)) return std::nullopt;
  }
  if (i != t.size()) return std::nullopt;
  if (!valid_civil(c)) return std::nullopt;
  return to_seconds(c);
}

std::string format_minute(minute_t m) {
  civil_datetime c = from_seconds(to_second(m));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d %02d:%02d", c.year, c.month, c.day, c.hour,
                c.minute);
  return buf;
}

std::string format_second(second_t s) {
  civil_datetime c = from_seconds(s);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d %02d:%02d:%02d", c.year, c.month, c.day, c.hour,
                c.minute, c.second);
  return buf;
}

}  // namespace fadacs::timeutil
