#include "kneelab/common.hpp"

#include <array>
#include <charconv>
#include <cstdio>

namespace kneelab {

namespace {

// Howard Hinnant's civil-date algorithms.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

bool days_in_month_ok(int y, int m, int d) {
    static constexpr std::array<int, 12> lengths = {31, 28, 31, 30, 31, 30,
                                                    31, 31, 30, 31, 30, 31};
    if (m < 1 || m > 12 || d < 1) return false;
    int len = lengths[static_cast<std::size_t>(m - 1)];
    const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    if (m == 2 && leap) len = 29;
    return d <= len;
}

}  // namespace

Date Date::from_ymd(int year, int month, int day) {
    if (!days_in_month_ok(year, month, day)) {
        throw validation_error("invalid calendar date: " + std::to_string(year) + "-" +
                               std::to_string(month) + "-" + std::to_string(day));
    }
    return Date{days_from_civil(year, month, day)};
}

Date Date::parse(const std::string& iso) {
    int y = 0, m = 0, d = 0;
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-' ||
        std::from_chars(iso.data(), iso.data() + 4, y).ec != std::errc{} ||
        std::from_chars(iso.data() + 5, iso.data() + 7, m).ec != std::errc{} ||
        std::from_chars(iso.data() + 8, iso.data() + 10, d).ec != std::errc{}) {
        throw validation_error("malformed ISO date: \"" + iso + "\"");
    }
    return from_ymd(y, m, d);
}

std::string Date::to_string() const {
    int y, m, d;
    civil_from_days(days, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
    return buf;
}

}  // namespace kneelab
