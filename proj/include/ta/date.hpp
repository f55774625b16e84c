#ifndef TA_DATE_HPP
#define TA_DATE_HPP

// Calendar dates at day granularity and half-open existence intervals.

#include "ta/error.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace ta {

/// Days since 1970-01-01 (proleptic Gregorian).
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}

    static Date from_ymd(int year, unsigned month, unsigned day) {
        const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                              std::chrono::day{day}};
        if (!ymd.ok()) {
            throw ValidationError("invalid calendar date " + std::to_string(year) + "-" +
                                  std::to_string(month) + "-" + std::to_string(day));
        }
        return Date{static_cast<std::int32_t>(
            std::chrono::sys_days{ymd}.time_since_epoch().count())};
    }

    /// Accepts YYYY, YYYY-MM or YYYY-MM-DD; partial dates mean the first day of the period.
    static Date parse(std::string_view text) {
        auto fail = [&]() -> Date {
            throw ValidationError("malformed date '" + std::string(text) +
                                  "' (expected YYYY, YYYY-MM or YYYY-MM-DD)");
        };
        auto field = [&](std::size_t pos, std::size_t len) -> int {
            int v = 0;
            const char* first = text.data() + pos;
            for (std::size_t i = 0; i < len; ++i) {
                if (first[i] < '0' || first[i] > '9') fail();
            }
            std::from_chars(first, first + len, v);
            return v;
        };
        if (text.size() != 4 && text.size() != 7 && text.size() != 10) return fail();
        const int year = field(0, 4);
        unsigned month = 1;
        unsigned day = 1;
        if (text.size() >= 7) {
            if (text[4] != '-') return fail();
            month = static_cast<unsigned>(field(5, 2));
        }
        if (text.size() == 10) {
            if (text[7] != '-') return fail();
            day = static_cast<unsigned>(field(8, 2));
        }
        return from_ymd(year, month, day);
    }

    constexpr std::int32_t days() const { return days_; }

    std::chrono::year_month_day ymd() const {
        return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{days_}}};
    }

    int year() const { return static_cast<int>(ymd().year()); }

    /// Canonical YYYY-MM-DD.
    std::string iso() const {
        const auto d = ymd();
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                      static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
        return buf;
    }

    friend constexpr auto operator<=>(const Date&, const Date&) = default;

private:
    std::int32_t days_ = 0;
};

/// Existence interval [start, end); an absent end means the feature still exists.
struct TimeSpan {
    Date start;
    std::optional<Date> end;

    static TimeSpan make(Date start, std::optional<Date> end) {
        if (end && !(start < *end)) {
            throw ValidationError("time span start " + start.iso() + " is not before end " +
                                  end->iso());
        }
        return TimeSpan{start, end};
    }

    bool contains(Date d) const { return start <= d && (!end || d < *end); }

    friend bool operator==(const TimeSpan&, const TimeSpan&) = default;
};

inline bool timespan_contains(const TimeSpan& s, Date d) { return s.contains(d); }

/// Intersection of two spans, or nullopt when they share no day.
inline std::optional<TimeSpan> intersect(const TimeSpan& a, const TimeSpan& b) {
    const Date start = std::max(a.start, b.start);
    std::optional<Date> end;
    if (a.end && b.end) {
        end = std::min(*a.end, *b.end);
    } else if (a.end) {
        end = a.end;
    } else {
        end = b.end;
    }
    if (end && !(start < *end)) return std::nullopt;
    return TimeSpan{start, end};
}

} // namespace ta

#endif // TA_DATE_HPP
