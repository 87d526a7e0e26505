#pragma once

// Brute-force reference computations used only by tests. They follow the
// textbook definitions directly and share no code with the library.

#include <cmath>
#include <vector>

#include "xmove/market_data.hpp"

namespace xmove::oracle {

inline double nan() { return std::nan(""); }

inline double window_mean(const std::vector<double>& x, std::size_t t, std::size_t n) {
    long double s = 0;
    for (std::size_t k = t + 1 - n; k <= t; ++k) s += x[k];
    return static_cast<double>(s / n);
}

inline double window_sample_std(const std::vector<double>& x, std::size_t t, std::size_t n) {
    long double mean = 0;
    for (std::size_t k = t + 1 - n; k <= t; ++k) mean += x[k];
    mean /= n;
    long double ss = 0;
    for (std::size_t k = t + 1 - n; k <= t; ++k) ss += (x[k] - mean) * (x[k] - mean);
    return static_cast<double>(std::sqrt(ss / (n - 1)));
}

// Closed-form expansion of the recursive EMA seeded at x0:
// e_t = sum_{k<t} a (1-a)^k x_{t-k} + (1-a)^t x_0.
inline double ema_expanded(const std::vector<double>& x, std::size_t t, double alpha) {
    long double s = 0;
    long double w = 1;
    for (std::size_t k = 0; k < t; ++k) {
        s += alpha * w * x[t - k];
        w *= (1.0L - alpha);
    }
    s += w * x[0];
    return static_cast<double>(s);
}

struct IndicatorValues {
    double ma7, ma21, ema, ema12, ema26, macd, sd20, upper, lower, spread, eth, gold, ma_feature;
};

inline IndicatorValues indicators_at(const market_data::AlignedPanel& panel, std::size_t t) {
    std::vector<double> close;
    for (const auto& r : panel.rows) close.push_back(r.candle.close);
    IndicatorValues v{};
    v.ma7 = window_mean(close, t, 7);
    v.ma21 = window_mean(close, t, 21);
    v.ema = ema_expanded(close, t, 0.67);
    v.ema12 = ema_expanded(close, t, 2.0 / 13.0);
    v.ema26 = ema_expanded(close, t, 2.0 / 27.0);
    v.macd = v.ema12 - v.ema26;
    v.sd20 = window_sample_std(close, t, 20);
    v.upper = v.ma21 + 2 * v.sd20;
    v.lower = v.ma21 - 2 * v.sd20;
    v.spread = panel.rows[t].candle.high - panel.rows[t].candle.low;
    v.eth = panel.rows[t].eth_close;
    v.gold = panel.rows[t].gold_close;
    v.ma_feature = v.ma7 > 1.05 * close[t] ? 1.0 : 0.0;
    return v;
}

}  // namespace xmove::oracle
