#include "xmove/indicators.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "xmove/csv.hpp"
#include "xmove/error.hpp"

namespace xmove::indicators {

void IndicatorConfig::validate() const {
    if (sma_fast < 1 || sma_slow < 1 || ema_short_span < 1 || ema_long_span < 1) {
        throw ConfigError("indicator windows must be >= 1");
    }
    if (std_window < 2) throw ConfigError("std window must be >= 2");
    if (!(ema_alpha > 0.0 && ema_alpha <= 1.0)) throw ConfigError("ema alpha must lie in (0, 1]");
    if (!(bollinger_k > 0.0)) throw ConfigError("bollinger k must be positive");
    if (warmup_rows < 0) throw ConfigError("warm-up rows must be >= 0");
}

std::vector<double> sma(std::span<const double> series, int window) {
    if (window < 1) throw ConfigError("sma window must be >= 1");
    const auto n = static_cast<std::size_t>(window);
    std::vector<double> out(series.size(), kUndefined);
    double sum = 0.0;
    for (std::size_t t = 0; t < series.size(); ++t) {
        sum += series[t];
        if (t >= n) sum -= series[t - n];
        if (t + 1 >= n) out[t] = sum / static_cast<double>(n);
    }
    return out;
}

std::vector<double> ema(std::span<const double> series, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("ema alpha must lie in (0, 1]");
    std::vector<double> out(series.size());
    if (series.empty()) return out;
    out[0] = series[0];
    for (std::size_t t = 1; t < series.size(); ++t) {
        out[t] = alpha * series[t] + (1.0 - alpha) * out[t - 1];
    }
    return out;
}

std::vector<double> ema_span(std::span<const double> series, int span) {
    if (span < 1) throw ConfigError("ema span must be >= 1");
    return ema(series, 2.0 / (static_cast<double>(span) + 1.0));
}

std::vector<double> macd(std::span<const double> series, int short_span, int long_span) {
    auto fast = ema_span(series, short_span);
    const auto slow = ema_span(series, long_span);
    for (std::size_t t = 0; t < fast.size(); ++t) fast[t] -= slow[t];
    return fast;
}

std::vector<double> rolling_std(std::span<const double> series, int window) {
    if (window < 2) throw ConfigError("std window must be >= 2");
    const auto n = static_cast<std::size_t>(window);
    std::vector<double> out(series.size(), kUndefined);
    for (std::size_t t = n - 1; t < series.size(); ++t) {
        const auto w = series.subspan(t + 1 - n, n);
        double mean = 0.0;
        for (double v : w) mean += v;
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (double v : w) ss += (v - mean) * (v - mean);
        out[t] = std::sqrt(ss / static_cast<double>(n - 1));
    }
    return out;
}

Bands bollinger(std::span<const double> center, std::span<const double> deviation, double k) {
    if (center.size() != deviation.size()) throw ShapeError("bollinger: length mismatch");
    Bands bands{std::vector<double>(center.size()), std::vector<double>(center.size())};
    for (std::size_t t = 0; t < center.size(); ++t) {
        bands.upper[t] = center[t] + k * deviation[t];
        bands.lower[t] = center[t] - k * deviation[t];
    }
    return bands;
}

double spread(const market_data::Candle& candle) { return candle.high - candle.low; }

double ma_feature(double sma_fast, double close, double margin) {
    return sma_fast > (1.0 + margin) * close ? 1.0 : 0.0;
}

IndicatorFrame compute_indicator_frame(const market_data::AlignedPanel& panel, const IndicatorConfig& cfg) {
    cfg.validate();
    const auto start = static_cast<std::size_t>(cfg.warmup_rows);
    const auto longest = static_cast<std::size_t>(std::max({cfg.sma_fast, cfg.sma_slow, cfg.std_window}));
    if (start + 1 < longest) throw ConfigError("warm-up shorter than the longest indicator window");
    if (panel.size() < start + 1) {
        throw InsufficientDataError("indicator frame needs at least " + std::to_string(start + 1) +
                                    " panel rows, got " + std::to_string(panel.size()));
    }

    std::vector<double> close(panel.size());
    for (std::size_t i = 0; i < panel.size(); ++i) close[i] = panel.rows[i].candle.close;

    const auto ma_fast = sma(close, cfg.sma_fast);
    const auto ma_slow = sma(close, cfg.sma_slow);
    const auto ema_main = ema(close, cfg.ema_alpha);
    const auto ema_short = ema_span(close, cfg.ema_short_span);
    const auto ema_long = ema_span(close, cfg.ema_long_span);
    const auto sd = rolling_std(close, cfg.std_window);
    const auto bands = bollinger(ma_slow, sd, cfg.bollinger_k);

    IndicatorFrame frame;
    frame.bars.assign(panel.rows.begin() + static_cast<std::ptrdiff_t>(start), panel.rows.end());
    frame.rows.reserve(frame.bars.size());
    for (std::size_t t = start; t < panel.size(); ++t) {
        const auto& bar = panel.rows[t];
        IndicatorRow row;
        row.date = bar.candle.date;
        row.ma7 = ma_fast[t];
        row.ma21 = ma_slow[t];
        row.ema = ema_main[t];
        row.ema12 = ema_short[t];
        row.ema26 = ema_long[t];
        row.macd = ema_short[t] - ema_long[t];
        row.sd20 = sd[t];
        row.boll_upper = bands.upper[t];
        row.boll_lower = bands.lower[t];
        row.spread = spread(bar.candle);
        row.eth_close = bar.eth_close;
        row.gold_close = bar.gold_close;
        row.ma_feature = ma_feature(ma_fast[t], bar.candle.close, cfg.ma_feature_margin);
        frame.rows.push_back(row);
    }
    return frame;
}

void write_frame(std::ostream& out, const IndicatorFrame& frame) {
    out << "date,ma7,ma21,ema,ema12,ema26,macd,sd20,boll_upper,boll_lower,spread,eth_close,gold_close,"
           "ma_feature\n";
    for (const auto& r : frame.rows) {
        out << r.date.iso();
        for (double v : {r.ma7, r.ma21, r.ema, r.ema12, r.ema26, r.macd, r.sd20, r.boll_upper, r.boll_lower,
                         r.spread, r.eth_close, r.gold_close, r.ma_feature}) {
            out << ',' << csv::format_double(v);
        }
        out << '\n';
    }
}

}  // namespace xmove::indicators
