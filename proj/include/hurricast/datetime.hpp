#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace hurricast {

using TimePoint = std::chrono::sys_seconds;
using std::chrono::hours;

/// Accepts "YYYY-MM-DDTHH:MM:SS[Z]" and "YYYY-MM-DD HH:MM:SS"; seconds optional.
/// Throws FormatError.
TimePoint parse_iso8601(std::string_view text);

/// "YYYY-MM-DDTHH:MM:SSZ".
std::string format_iso8601(TimePoint t);

/// Filename-safe variant "YYYYMMDDTHHMMSSZ".
std::string format_compact(TimePoint t);

int year_of(TimePoint t);

/// 1-based day of year (1..366).
int day_of_year(TimePoint t);

}  // namespace hurricast
