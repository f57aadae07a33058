#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace geoprobe {

// Seconds since the Unix epoch, UTC.
using UnixSeconds = std::int64_t;

// Accepts "YYYY-MM-DDTHH:MM:SSZ" (fractional seconds are rejected).
// Throws ParseError otherwise.
UnixSeconds parse_utc(std::string_view text);
std::string format_utc(UnixSeconds t);

}  // namespace geoprobe
