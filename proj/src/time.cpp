#include "datapool/time.hpp"

#include <array>
#include <charconv>
#include <cstdio>

#include "datapool/error.hpp"

namespace datapool {
namespace {

// Howard Hinnant's civil-calendar conversions.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Civil {
  std::int64_t year;
  unsigned month;
  unsigned day;
};

constexpr Civil civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

constexpr bool is_leap(std::int64_t y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

constexpr unsigned days_in_month(std::int64_t y, unsigned m) {
  constexpr std::array<unsigned, 12> kDays{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

[[noreturn]] void bad_timestamp(std::string_view text) {
  fail(ErrorKind::validation, "invalid_timestamp",
       "not an RFC 3339 timestamp: '" + std::string(text) + "'");
}

int read_digits(std::string_view text, std::size_t pos, std::size_t count) {
  if (pos + count > text.size()) bad_timestamp(text);
  int value = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    const char c = text[i];
    if (c < '0' || c > '9') bad_timestamp(text);
    value = value * 10 + (c - '0');
  }
  return value;
}

void expect(std::string_view text, std::size_t pos, char c) {
  if (pos >= text.size() || text[pos] != c) bad_timestamp(text);
}

}  // namespace

Timestamp timestamp_from_civil(int year, unsigned month, unsigned day, int hour, int minute,
                               int second) {
  const std::int64_t days = days_from_civil(year, month, day);
  return from_unix(days * kSecondsPerDay + hour * 3600 + minute * 60 + second);
}

Timestamp parse_rfc3339(std::string_view text) {
  // YYYY-MM-DDTHH:MM:SS[.frac](Z|+hh:mm|-hh:mm)
  const int year = read_digits(text, 0, 4);
  expect(text, 4, '-');
  const int month = read_digits(text, 5, 2);
  expect(text, 7, '-');
  const int day = read_digits(text, 8, 2);
  if (text.size() <= 10 || (text[10] != 'T' && text[10] != 't' && text[10] != ' ')) {
    bad_timestamp(text);
  }
  const int hour = read_digits(text, 11, 2);
  expect(text, 13, ':');
  const int minute = read_digits(text, 14, 2);
  expect(text, 16, ':');
  const int second = read_digits(text, 17, 2);
  std::size_t pos = 19;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    const std::size_t start = pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    if (pos == start) bad_timestamp(text);
  }
  if (month < 1 || month > 12 || day < 1 ||
      static_cast<unsigned>(day) > days_in_month(year, static_cast<unsigned>(month)) ||
      hour > 23 || minute > 59 || second > 60) {
    bad_timestamp(text);
  }
  int offset_seconds = 0;
  if (pos >= text.size()) bad_timestamp(text);
  if (text[pos] == 'Z' || text[pos] == 'z') {
    ++pos;
  } else if (text[pos] == '+' || text[pos] == '-') {
    const int sign = text[pos] == '+' ? 1 : -1;
    const int oh = read_digits(text, pos + 1, 2);
    expect(text, pos + 3, ':');
    const int om = read_digits(text, pos + 4, 2);
    if (oh > 23 || om > 59) bad_timestamp(text);
    offset_seconds = sign * (oh * 3600 + om * 60);
    pos += 6;
  } else {
    bad_timestamp(text);
  }
  if (pos != text.size()) bad_timestamp(text);
  // Leap second 60 folds into the next minute.
  const Timestamp local = timestamp_from_civil(year, static_cast<unsigned>(month),
                                               static_cast<unsigned>(day), hour, minute, second);
  return local - Seconds{offset_seconds};
}

std::int64_t day_number(Timestamp t) {
  const std::int64_t s = to_unix(t);
  return s >= 0 ? s / kSecondsPerDay : -((-s + kSecondsPerDay - 1) / kSecondsPerDay);
}

std::string format_day(std::int64_t day) {
  const Civil c = civil_from_days(day);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u", static_cast<long long>(c.year), c.month, c.day);
  return buf;
}

std::string format_rfc3339(Timestamp t) {
  const std::int64_t day = day_number(t);
  const std::int64_t sod = to_unix(t) - day * kSecondsPerDay;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%sT%02lld:%02lld:%02lldZ", format_day(day).c_str(),
                static_cast<long long>(sod / 3600), static_cast<long long>(sod / 60 % 60),
                static_cast<long long>(sod % 60));
  return buf;
}

}  // namespace datapool
