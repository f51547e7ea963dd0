#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace datapool {

/// UTC instant at one-second resolution. All platform clocks and persisted
/// timestamps use this type.
using Timestamp = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

inline constexpr std::int64_t kSecondsPerDay = 86'400;

/// Parses an RFC 3339 date-time ("2026-01-31T12:00:00Z", "...+09:00").
/// Fractional seconds are truncated. Throws Error(validation) on bad input.
Timestamp parse_rfc3339(std::string_view text);

/// Formats as "YYYY-MM-DDTHH:MM:SSZ".
std::string format_rfc3339(Timestamp t);

/// Days since 1970-01-01 (floor division, so pre-epoch instants work).
std::int64_t day_number(Timestamp t);

/// "YYYY-MM-DD" for a day number.
std::string format_day(std::int64_t day);

Timestamp timestamp_from_civil(int year, unsigned month, unsigned day, int hour = 0, int minute = 0,
                               int second = 0);

inline std::int64_t to_unix(Timestamp t) { return t.time_since_epoch().count(); }
inline Timestamp from_unix(std::int64_t s) { return Timestamp{Seconds{s}}; }

}  // namespace datapool
