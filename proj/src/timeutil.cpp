#include "geoprobe/timeutil.hpp"

#include <cstdio>
#include <ctime>

#include "geoprobe/errors.hpp"

namespace geoprobe {

UnixSeconds parse_utc(std::string_view text) {
  const std::string s(text);
  int y, mo, d, h, mi, sec;
  char z = 0;
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c%n", &y, &mo, &d, &h, &mi, &sec, &z,
                  &consumed) != 7 ||
      z != 'Z' || consumed != static_cast<int>(s.size()) || s.size() != 20)
    throw ParseError("not a UTC timestamp: '" + s + "'");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60)
    throw ParseError("timestamp out of range: '" + s + "'");
  std::tm tm{};
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = sec;
  const UnixSeconds t = timegm(&tm);
  if (format_utc(t) != s && sec != 60) throw ParseError("invalid calendar date: '" + s + "'");
  return t;
}

std::string format_utc(UnixSeconds t) {
  const std::time_t tt = static_cast<std::time_t>(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace geoprobe
