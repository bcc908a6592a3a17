#include "synth/date.hpp"

#include <array>
#include <cstdio>

#include "synth/text.hpp"

namespace synth {

namespace {

using namespace std::chrono;

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int* out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  *out = v;
  return true;
}

std::optional<Date> make_date(int y, int m, int d) {
  if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  Date date{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

int month_from_name(std::string_view name) {
  static constexpr std::array<std::string_view, 12> kNames = {
      "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"};
  if (name.size() < 3) return 0;
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (iequals(name.substr(0, 3), kNames[i])) return static_cast<int>(i) + 1;
  }
  return 0;
}

}  // namespace

std::optional<Date> parse_date(std::string_view s) {
  s = trim(s);
  int y, m, d;
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  if (!read_int(s, 0, 4, &y) || !read_int(s, 5, 2, &m) || !read_int(s, 8, 2, &d)) {
    return std::nullopt;
  }
  if (s.size() > 10 && s[10] >= '0' && s[10] <= '9') return std::nullopt;
  return make_date(y, m, d);
}

std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

std::optional<Date> parse_month(std::string_view s) {
  s = trim(s);
  int y, m;
  if (s.size() != 7 || s[4] != '-') return std::nullopt;
  if (!read_int(s, 0, 4, &y) || !read_int(s, 5, 2, &m)) return std::nullopt;
  return make_date(y, m, 1);
}

std::string month_key(const Date& d) { return format_date(d).substr(0, 7); }

Date first_of_month(const Date& d) { return Date{d.year(), d.month(), day{1}}; }

std::optional<Timestamp> parse_iso_timestamp(std::string_view s) {
  s = trim(s);
  const auto date = parse_date(s.substr(0, std::min<std::size_t>(s.size(), 10)));
  if (!date) return std::nullopt;
  Timestamp t = sys_days{*date};
  if (s.size() == 10) return t;
  if (s[10] != 'T' && s[10] != 't' && s[10] != ' ') return std::nullopt;
  int hh, mm, ss = 0;
  if (!read_int(s, 11, 2, &hh) || s.size() < 16 || s[13] != ':' || !read_int(s, 14, 2, &mm)) {
    return std::nullopt;
  }
  std::size_t pos = 16;
  if (pos < s.size() && s[pos] == ':') {
    if (!read_int(s, pos + 1, 2, &ss)) return std::nullopt;
    pos += 3;
  }
  if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  // Fractional seconds are dropped.
  if (pos < s.size() && (s[pos] == '.' || s[pos] == ',')) {
    ++pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
  }
  t += hours{hh} + minutes{mm} + seconds{ss};
  if (pos == s.size()) return t;
  if (s[pos] == 'Z' || s[pos] == 'z') return pos + 1 == s.size() ? std::optional(t) : std::nullopt;
  if (s[pos] == '+' || s[pos] == '-') {
    const int sign = s[pos] == '+' ? 1 : -1;
    int oh, om = 0;
    if (!read_int(s, pos + 1, 2, &oh)) return std::nullopt;
    std::size_t q = pos + 3;
    if (q < s.size() && s[q] == ':') ++q;
    if (q < s.size() && !read_int(s, q, 2, &om)) return std::nullopt;
    return t - sign * (hours{oh} + minutes{om});
  }
  return std::nullopt;
}

std::optional<Timestamp> parse_rfc822(std::string_view s) {
  s = trim(s);
  // Optional weekday.
  if (const auto comma = s.find(','); comma != std::string_view::npos && comma < 10) {
    s = trim(s.substr(comma + 1));
  }
  const auto parts = split_whitespace(s);
  if (parts.size() < 3) return std::nullopt;
  int d, y;
  if (parts[0].size() > 2 || !read_int(parts[0], 0, parts[0].size(), &d)) return std::nullopt;
  const int m = month_from_name(parts[1]);
  if (m == 0) return std::nullopt;
  if (!read_int(parts[2], 0, parts[2].size(), &y)) return std::nullopt;
  if (parts[2].size() == 2) y += y < 50 ? 2000 : 1900;
  const auto date = make_date(y, m, d);
  if (!date) return std::nullopt;
  Timestamp t = sys_days{*date};
  if (parts.size() >= 4) {
    int hh, mm, ss = 0;
    const auto tm = parts[3];
    if (!read_int(tm, 0, 2, &hh) || tm.size() < 5 || !read_int(tm, 3, 2, &mm)) return std::nullopt;
    if (tm.size() >= 8 && !read_int(tm, 6, 2, &ss)) return std::nullopt;
    t += hours{hh} + minutes{mm} + seconds{ss};
  }
  if (parts.size() >= 5) {
    const auto zone = parts[4];
    if ((zone[0] == '+' || zone[0] == '-') && zone.size() == 5) {
      int oh, om;
      if (read_int(zone, 1, 2, &oh) && read_int(zone, 3, 2, &om)) {
        const int sign = zone[0] == '+' ? 1 : -1;
        t -= sign * (hours{oh} + minutes{om});
      }
    } else if (iequals(zone, "EST")) {
      t += hours{5};
    } else if (iequals(zone, "EDT")) {
      t += hours{4};
    } else if (iequals(zone, "PST")) {
      t += hours{8};
    } else if (iequals(zone, "PDT")) {
      t += hours{7};
    }
  }
  return t;
}

std::optional<Timestamp> parse_any_timestamp(std::string_view s) {
  if (auto t = parse_iso_timestamp(s)) return t;
  return parse_rfc822(s);
}

std::string format_timestamp(Timestamp t) {
  const auto day_point = floor<days>(t);
  const Date d{day_point};
  const hh_mm_ss<seconds> tod{t - day_point};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", format_date(d).c_str(),
                static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                static_cast<int>(tod.seconds().count()));
  return buf;
}

Timestamp timestamp_from_epoch(std::int64_t s) { return Timestamp{seconds{s}}; }

Date date_of(Timestamp t) { return Date{floor<days>(t)}; }

Date add_days(const Date& d, int n) { return Date{sys_days{d} + days{n}}; }

int days_between(const Date& from, const Date& to) {
  return static_cast<int>((sys_days{to} - sys_days{from}).count());
}

Date add_months(const Date& d, int n) {
  auto ym = year_month{d.year(), d.month()} + months{n};
  return Date{ym.year(), ym.month(), d.day()};
}

}  // namespace synth
