#include "hurricast/datetime.hpp"

#include <charconv>
#include <cstdio>

#include "hurricast/errors.hpp"

namespace hurricast {

namespace {

int parse_field(std::string_view text, std::size_t pos, std::size_t len) {
  if (pos + len > text.size()) throw FormatError("truncated timestamp '" + std::string(text) + "'");
  int v = 0;
  auto [p, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, v);
  if (ec != std::errc() || p != text.data() + pos + len) {
    throw FormatError("bad timestamp '" + std::string(text) + "'");
  }
  return v;
}

void expect(std::string_view text, std::size_t pos, std::string_view allowed) {
  if (pos >= text.size() || allowed.find(text[pos]) == std::string_view::npos) {
    throw FormatError("bad timestamp '" + std::string(text) + "'");
  }
}

}  // namespace

TimePoint parse_iso8601(std::string_view text) {
  using namespace std::chrono;
  while (!text.empty() && (text.back() == 'Z' || text.back() == ' ' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  int y = parse_field(text, 0, 4);
  expect(text, 4, "-");
  int mo = parse_field(text, 5, 2);
  expect(text, 7, "-");
  int d = parse_field(text, 8, 2);
  int h = 0, mi = 0, s = 0;
  if (text.size() > 10) {
    expect(text, 10, "T ");
    h = parse_field(text, 11, 2);
    expect(text, 13, ":");
    mi = parse_field(text, 14, 2);
    if (text.size() > 16) {
      expect(text, 16, ":");
      s = parse_field(text, 17, 2);
      if (text.size() != 19) throw FormatError("trailing characters in timestamp '" + std::string(text) + "'");
    }
  }
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) {
    throw FormatError("invalid calendar time '" + std::string(text) + "'");
  }
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

namespace {

struct Civil {
  int y, mo, d, h, mi, s;
};

Civil civil(TimePoint t) {
  using namespace std::chrono;
  auto dp = floor<days>(t);
  year_month_day ymd{dp};
  hh_mm_ss hms{t - dp};
  return {int(ymd.year()), int(unsigned(ymd.month())), int(unsigned(ymd.day())),
          int(hms.hours().count()), int(hms.minutes().count()), int(hms.seconds().count())};
}

}  // namespace

std::string format_iso8601(TimePoint t) {
  Civil c = civil(t);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", c.y, c.mo, c.d, c.h, c.mi, c.s);
  return buf;
}

std::string format_compact(TimePoint t) {
  Civil c = civil(t);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d%02d%02dT%02d%02d%02dZ", c.y, c.mo, c.d, c.h, c.mi, c.s);
  return buf;
}

int year_of(TimePoint t) { return civil(t).y; }

int day_of_year(TimePoint t) {
  using namespace std::chrono;
  auto dp = floor<days>(t);
  year_month_day ymd{dp};
  auto jan1 = sys_days{ymd.year() / January / 1};
  return static_cast<int>((dp - jan1).count()) + 1;
}

}  // namespace hurricast
