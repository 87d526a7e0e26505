#pragma once

#include <iosfwd>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "xmove/market_data.hpp"

namespace xmove::indicators {

// Positions where a windowed statistic has too little history hold NaN.
inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();
inline bool is_defined(double v) { return v == v; }

struct IndicatorConfig {
    int sma_fast = 7;
    int sma_slow = 21;
    double ema_alpha = 0.67;
    int ema_short_span = 12;
    int ema_long_span = 26;
    int std_window = 20;
    double bollinger_k = 2.0;
    double ma_feature_margin = 0.05;
    // Leading panel rows dropped before the frame starts.
    int warmup_rows = 25;

    void validate() const;
};

struct IndicatorRow {
    Date date;
    double ma7 = 0.0;
    double ma21 = 0.0;
    double ema = 0.0;
    double ema12 = 0.0;
    double ema26 = 0.0;
    double macd = 0.0;
    double sd20 = 0.0;
    double boll_upper = 0.0;
    double boll_lower = 0.0;
    double spread = 0.0;
    double eth_close = 0.0;
    double gold_close = 0.0;
    double ma_feature = 0.0;
};

// Indicator rows plus the panel rows they were computed at (same length,
// same dates).
struct IndicatorFrame {
    std::vector<market_data::PanelRow> bars;
    std::vector<IndicatorRow> rows;

    std::size_t size() const { return rows.size(); }
};

std::vector<double> sma(std::span<const double> series, int window);
// e[0] = x[0]; e[t] = alpha * x[t] + (1 - alpha) * e[t-1]
std::vector<double> ema(std::span<const double> series, double alpha);
// ema with alpha = 2 / (span + 1)
std::vector<double> ema_span(std::span<const double> series, int span);
std::vector<double> macd(std::span<const double> series, int short_span = 12, int long_span = 26);
// Sample standard deviation (n - 1 divisor) over a trailing window.
std::vector<double> rolling_std(std::span<const double> series, int window = 20);

struct Bands {
    std::vector<double> upper;
    std::vector<double> lower;
};
Bands bollinger(std::span<const double> center, std::span<const double> deviation, double k = 2.0);

double spread(const market_data::Candle& candle);
// 1 when the fast SMA sits strictly more than `margin` above the close.
double ma_feature(double sma_fast, double close, double margin = 0.05);

IndicatorFrame compute_indicator_frame(const market_data::AlignedPanel& panel, const IndicatorConfig& cfg = {});

void write_frame(std::ostream& out, const IndicatorFrame& frame);

}  // namespace xmove::indicators
