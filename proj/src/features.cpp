#include "xmove/features.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "xmove/csv.hpp"
#include "xmove/error.hpp"

namespace xmove::features {

RuleTable default_rules() {
    using R = NormalizationRule;
    RuleTable rules{};
    for (auto f : {Feature::Open, Feature::High, Feature::Low, Feature::Close, Feature::AdjClose, Feature::Ma7,
                   Feature::Ma21, Feature::Ema, Feature::Ema26, Feature::Ema12, Feature::BollUpper,
                   Feature::BollLower}) {
        rules[static_cast<std::size_t>(f)] = R::VsPrevBtcClose;
    }
    for (auto f : {Feature::Volume, Feature::Eth, Feature::Gold}) {
        rules[static_cast<std::size_t>(f)] = R::VsOwnPrev;
    }
    for (auto f : {Feature::Macd, Feature::Sd20, Feature::Spread}) {
        rules[static_cast<std::size_t>(f)] = R::OverPrevBtcClose;
    }
    rules[static_cast<std::size_t>(Feature::MaFeature)] = R::Passthrough;
    return rules;
}

FeatureVector raw_features(const market_data::PanelRow& bar, const indicators::IndicatorRow& r) {
    const auto& c = bar.candle;
    return {c.open,   c.high,  c.low,   c.close,        c.adj_close,    c.volume,   r.ma7,
            r.ma21,   r.ema,   r.ema26, r.ema12,        r.macd,         r.sd20,     r.boll_upper,
            r.boll_lower, r.spread, r.ma_feature, bar.eth_close, bar.gold_close};
}

FeatureFrame normalize(const indicators::IndicatorFrame& frame, const RuleTable& rules) {
    if (frame.size() < 2) throw InsufficientDataError("normalization needs at least 2 frame rows");
    FeatureFrame out;
    out.dates.reserve(frame.size() - 1);
    out.rows.reserve(frame.size() - 1);
    auto prev = raw_features(frame.bars[0], frame.rows[0]);
    for (std::size_t t = 1; t < frame.size(); ++t) {
        const auto cur = raw_features(frame.bars[t], frame.rows[t]);
        const double prev_close = prev[static_cast<std::size_t>(Feature::Close)];
        FeatureVector norm{};
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            switch (rules[f]) {
                case NormalizationRule::VsPrevBtcClose:
                    norm[f] = (cur[f] - prev_close) / prev_close;
                    break;
                case NormalizationRule::VsOwnPrev:
                    if (prev[f] == 0.0) {
                        throw ValidationError("cannot normalize " + std::string(kFeatureNames[f]) + " on " +
                                              frame.rows[t].date.iso() + ": previous value is zero");
                    }
                    norm[f] = (cur[f] - prev[f]) / prev[f];
                    break;
                case NormalizationRule::OverPrevBtcClose:
                    norm[f] = cur[f] / prev_close;
                    break;
                case NormalizationRule::Passthrough:
                    norm[f] = cur[f];
                    break;
            }
            if (!std::isfinite(norm[f])) {
                throw ValidationError("non-finite " + std::string(kFeatureNames[f]) + " on " +
                                      frame.rows[t].date.iso());
            }
        }
        out.dates.push_back(frame.rows[t].date);
        out.rows.push_back(norm);
        prev = cur;
    }
    return out;
}

std::vector<WindowedSample> build_windows(const FeatureFrame& frame, int window) {
    if (window < 1) throw ConfigError("window must be >= 1");
    const auto w = static_cast<std::size_t>(window);
    if (frame.size() < w) {
        throw InsufficientDataError("need " + std::to_string(w) + " feature rows for one window, got " +
                                    std::to_string(frame.size()));
    }
    std::vector<WindowedSample> samples;
    samples.reserve(frame.size() - w + 1);
    for (std::size_t t = w - 1; t < frame.size(); ++t) {
        WindowedSample s{frame.dates[t], {}};
        s.x.reserve(w * kFeatureCount);
        for (std::size_t k = t + 1 - w; k <= t; ++k) s.x.insert(s.x.end(), frame.rows[k].begin(), frame.rows[k].end());
        samples.push_back(std::move(s));
    }
    return samples;
}

std::size_t LabelSet::count_true() const {
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), true));
}

LabelSet make_labels(const market_data::CandleSeries& candles, const LabelSpec& spec) {
    if (!(spec.theta > 0.0)) throw ConfigError("label threshold must be positive");
    if (candles.size() < 2) throw InsufficientDataError("labeling needs at least 2 candles");
    LabelSet labels;
    labels.dates.reserve(candles.size() - 1);
    labels.values.reserve(candles.size() - 1);
    for (std::size_t t = 1; t < candles.size(); ++t) {
        const double prev = candles[t - 1].close;
        const auto& c = candles[t];
        double move = 0.0;
        if (spec.direction == Direction::Up) {
            move = ((spec.source == LabelSource::HighLow ? c.high : c.close) - prev) / prev;
        } else {
            move = (prev - (spec.source == LabelSource::HighLow ? c.low : c.close)) / prev;
        }
        labels.dates.push_back(c.date);
        labels.values.push_back(move > spec.theta);
    }
    return labels;
}

LabelSet to_decision_dates(const LabelSet& labels, const market_data::CandleSeries& candles) {
    LabelSet out;
    std::size_t ci = 1;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        while (ci < candles.size() && candles[ci].date < labels.dates[i]) ++ci;
        if (ci >= candles.size() || candles[ci].date != labels.dates[i]) {
            throw AlignmentError("label date " + labels.dates[i].iso() + " has no preceding candle");
        }
        out.dates.push_back(candles[ci - 1].date);
        out.values.push_back(labels.values[i]);
    }
    return out;
}

ClassDistribution class_distribution(const LabelSet& labels) {
    ClassDistribution d;
    d.positives = labels.count_true();
    d.negatives = labels.size() - d.positives;
    d.true_ratio = labels.size() == 0 ? 0.0 : static_cast<double>(d.positives) / static_cast<double>(labels.size());
    return d;
}

LabelSplit split_labels(const LabelSet& labels, Date test_start, std::optional<Date> test_end) {
    LabelSplit split;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto d = labels.dates[i];
        if (d < test_start) {
            split.train.dates.push_back(d);
            split.train.values.push_back(labels.values[i]);
        } else if (!test_end || d <= *test_end) {
            split.test.dates.push_back(d);
            split.test.values.push_back(labels.values[i]);
        }
    }
    return split;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("pearson: length mismatch");
    if (x.size() < 3) throw InsufficientDataError("pearson needs at least 3 pairs");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<Correlation> pearson_correlations(const FeatureFrame& frame) {
    if (frame.size() < 4) throw InsufficientDataError("correlation table needs at least 4 feature rows");
    const std::size_t n = frame.size() - 1;
    std::vector<double> target(n);
    for (std::size_t t = 0; t < n; ++t) target[t] = frame.rows[t + 1][static_cast<std::size_t>(Feature::Close)];
    std::vector<Correlation> table;
    std::vector<double> column(n);
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        for (std::size_t t = 0; t < n; ++t) column[t] = frame.rows[t][f];
        table.push_back({kCorrelationNames[f], pearson(column, target)});
    }
    return table;
}

void write_feature_frame(std::ostream& out, const FeatureFrame& frame) {
    out << "date";
    for (auto name : kFeatureNames) out << ',' << name;
    out << '\n';
    for (std::size_t t = 0; t < frame.size(); ++t) {
        out << frame.dates[t].iso();
        for (double v : frame.rows[t]) out << ',' << csv::format_double(v);
        out << '\n';
    }
}

void write_labels(std::ostream& out, const LabelSet& labels) {
    out << "date,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out << labels.dates[i].iso() << ',' << (labels.values[i] ? 1 : 0) << '\n';
    }
}

void write_correlations(std::ostream& out, const std::vector<Correlation>& table) {
    out << "feature,pearson_r\n";
    for (const auto& c : table) {
        out << c.name << ',' << (c.r ? csv::format_double(*c.r) : std::string("undefined")) << '\n';
    }
}

}  // namespace xmove::features
