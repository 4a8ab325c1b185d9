#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace fadacs {

// Error with a stable machine-readable code ("MissingColumn", "ShapeMismatch", ...).
// The CLI maps these to JSON on stderr; library users can switch on code().
class error : public std::runtime_error {
public:
  error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

struct geo_point {
  double lon = 0.0;
  double lat = 0.0;
};

inline bool operator==(const geo_point& a, const geo_point& b) {
  return a.lon == b.lon && a.lat == b.lat;
}

// Naive local time, no timezone database: each dataset declares its own local
// clock and all timestamps in one run live on that clock.
using second_t = std::int64_t;  // seconds since 1970-01-01 00:00:00
using minute_t = std::int64_t;  // minutes since 1970-01-01 00:00

inline minute_t to_minute(second_t s) {
  // floor division, sub-minute parts truncate toward the past
  return s >= 0 ? s / 60 : (s - 59) / 60;
}

inline second_t to_second(minute_t m) { return m * 60; }

}  // namespace fadacs
