#include "doctest.h"

#include <array>

#include "fadacs/timeutil.hpp"

using namespace fadacs;
using namespace fadacs::timeutil;

TEST_SUITE("timeutil") {

TEST_CASE("civil round trip across leap years") {
  for (auto [y, m, d, h, mi, s] : {std::array<int, 6>{2017, 2, 6, 9, 0, 0},
                                   std::array<int, 6>{2020, 2, 29, 23, 55, 0},
                                   std::array<int, 6>{1999, 12, 31, 23, 59, 59},
                                   std::array<int, 6>{2000, 1, 1, 0, 0, 0}}) {
    civil_datetime c{y, m, d, h, mi, s};
    auto back = from_seconds(to_seconds(c));
    CHECK(back.year == y);
    CHECK(back.month == m);
    CHECK(back.day == d);
    CHECK(back.hour == h);
    CHECK(back.minute == mi);
    CHECK(back.second == s);
  }
}

TEST_CASE("day of week uses Monday = 0") {
  CHECK(day_of_week(to_seconds({2017, 2, 6, 9, 0, 0})) == 0);     // Monday
  CHECK(day_of_week(to_seconds({2020, 2, 29, 23, 55, 0})) == 5);  // Saturday
  CHECK(day_of_week(to_seconds({1970, 1, 1, 0, 0, 0})) == 3);     // Thursday
}

TEST_CASE("parser accepts both layouts and rejects impossible dates") {
  CHECK(parse_datetime("2017-02-06 09:30") == to_seconds({2017, 2, 6, 9, 30, 0}));
  CHECK(parse_datetime("2017-02-06T09:30:15") == to_seconds({2017, 2, 6, 9, 30, 15}));
  CHECK(parse_datetime("06/02/2017 09:30:15") == to_seconds({2017, 2, 6, 9, 30, 15}));
  CHECK_FALSE(parse_datetime("2017-02-31T10:00").has_value());
  CHECK_FALSE(parse_datetime("2017-13-01 10:00").has_value());
  CHECK_FALSE(parse_datetime("garbage").has_value());
  CHECK_FALSE(parse_datetime("2017-02-06").has_value());
}

TEST_CASE("midnight and day boundaries") {
  second_t mid = to_seconds({2017, 5, 1, 0, 0, 0});
  CHECK(at_midnight(mid));
  CHECK_FALSE(at_midnight(mid + 1));
  CHECK(same_calendar_day(mid, mid + 86399));
  CHECK_FALSE(same_calendar_day(mid, mid + 86400));
  CHECK(minute_of_day(mid + 3661) == 61);
}

TEST_CASE("minute truncation drops sub-minute parts") {
  second_t s = to_seconds({2017, 2, 6, 9, 30, 59});
  CHECK(to_minute(s) == to_minute(to_seconds({2017, 2, 6, 9, 30, 0})));
  CHECK(format_minute(to_minute(s)) == "2017-02-06 09:30");
}

}  // TEST_SUITE
