#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace xmove {

// A UTC calendar day.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::chrono::sys_days days) : days_(days) {}
    constexpr Date(int y, unsigned m, unsigned d)
        : days_(std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m},
                                            std::chrono::day{d}}) {}

    // Parses YYYY-MM-DD. Throws ValidationError on anything else.
    static Date parse(std::string_view text);

    std::string iso() const;
    std::chrono::sys_days days() const { return days_; }

    Date operator+(int n) const { return Date{days_ + std::chrono::days{n}}; }
    Date operator-(int n) const { return Date{days_ - std::chrono::days{n}}; }
    int operator-(Date other) const { return static_cast<int>((days_ - other.days_).count()); }

    auto operator<=>(const Date&) const = default;

private:
    std::chrono::sys_days days_{};
};

}  // namespace xmove
