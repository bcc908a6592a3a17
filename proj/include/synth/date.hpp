#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace synth {

using Date = std::chrono::year_month_day;
using Timestamp = std::chrono::sys_seconds;

// "YYYY-MM-DD" (extra trailing characters such as a time part are ignored).
std::optional<Date> parse_date(std::string_view s);
std::string format_date(const Date& d);

// "YYYY-MM"
std::optional<Date> parse_month(std::string_view s);
std::string month_key(const Date& d);
Date first_of_month(const Date& d);

// ISO 8601 timestamps: "2022-03-01T10:00:00Z", "2022-03-01T10:00:00+02:00",
// "2022-03-01 10:00:00", or a bare date.
std::optional<Timestamp> parse_iso_timestamp(std::string_view s);

// RFC 822 / RFC 1123 dates as used by RSS pubDate, e.g.
// "Tue, 01 Mar 2022 10:00:00 GMT" or "01 Mar 2022 10:00:00 +0100".
std::optional<Timestamp> parse_rfc822(std::string_view s);

// Tries ISO 8601 first, then RFC 822.
std::optional<Timestamp> parse_any_timestamp(std::string_view s);

std::string format_timestamp(Timestamp t);
Timestamp timestamp_from_epoch(std::int64_t seconds);
Date date_of(Timestamp t);

Date add_days(const Date& d, int days);
int days_between(const Date& from, const Date& to);
Date add_months(const Date& d, int months);

}  // namespace synth
