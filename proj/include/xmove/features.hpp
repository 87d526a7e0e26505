#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "xmove/indicators.hpp"
#include "xmove/market_data.hpp"

namespace xmove::features {

inline constexpr std::size_t kFeatureCount = 19;

enum class Feature : std::size_t {
    Open, High, Low, Close, AdjClose, Volume, Ma7, Ma21, Ema, Ema26, Ema12, Macd,
    Sd20, BollUpper, BollLower, Spread, MaFeature, Eth, Gold,
};

// Column names used in CSV output, in feature order.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "open", "high", "low", "close", "adj_close", "volume", "ma7", "ma21", "ema", "ema26", "ema12", "macd",
    "sd20", "boll_upper", "boll_lower", "spread", "ma_feature", "eth", "gold"};

// Display names used in the correlation table.
inline constexpr std::array<std::string_view, kFeatureCount> kCorrelationNames = {
    "Open", "High", "Low", "Close", "Adj Close", "Volume", "ma7", "ma21", "ema", "26ema", "12ema", "MACD",
    "20sd", "upper band", "lower band", "spread", "ma feature", "eth", "gold"};

enum class NormalizationRule {
    VsPrevBtcClose,    // (x_t - close_{t-1}) / close_{t-1}
    VsOwnPrev,         // (x_t - x_{t-1}) / x_{t-1}
    OverPrevBtcClose,  // x_t / close_{t-1}
    Passthrough,
};

using RuleTable = std::array<NormalizationRule, kFeatureCount>;
RuleTable default_rules();

using FeatureVector = std::array<double, kFeatureCount>;

struct FeatureFrame {
    std::vector<Date> dates;
    std::vector<FeatureVector> rows;

    std::size_t size() const { return rows.size(); }
};

// Raw (unnormalized) feature values for one frame row.
FeatureVector raw_features(const market_data::PanelRow& bar, const indicators::IndicatorRow& row);

// The first frame row is consumed as the basis and produces no output row.
FeatureFrame normalize(const indicators::IndicatorFrame& frame, const RuleTable& rules = default_rules());

struct WindowedSample {
    Date date;  // last (most recent) day in the window
    std::vector<double> x;
};

// One sample per frame row from index window-1 on; oldest day first.
std::vector<WindowedSample> build_windows(const FeatureFrame& frame, int window = 5);

enum class Direction { Up, Down };

// How the day's move is measured against the previous close.
enum class LabelSource { HighLow, CloseOnly };

struct LabelSpec {
    Direction direction = Direction::Up;
    double theta = 0.05;
    LabelSource source = LabelSource::HighLow;
};

struct LabelSet {
    std::vector<Date> dates;
    std::vector<bool> values;

    std::size_t size() const { return values.size(); }
    std::size_t count_true() const;
    std::size_t count_false() const { return size() - count_true(); }
};

// Labels every candle but the first: Up compares high_t, Down compares low_t
// against close_{t-1}; the move must exceed theta strictly.
LabelSet make_labels(const market_data::CandleSeries& candles, const LabelSpec& spec);

// Re-keys each label to the preceding candle's date, i.e. the day on which the
// forecast for that move is made.
LabelSet to_decision_dates(const LabelSet& labels, const market_data::CandleSeries& candles);

struct ClassDistribution {
    std::size_t positives = 0;
    std::size_t negatives = 0;
    double true_ratio = 0.0;
};

ClassDistribution class_distribution(const LabelSet& labels);

struct LabelSplit {
    LabelSet train;  // dates before test_start
    LabelSet test;   // dates in [test_start, test_end]
};
LabelSplit split_labels(const LabelSet& labels, Date test_start, std::optional<Date> test_end = {});

struct Correlation {
    std::string_view name;
    std::optional<double> r;  // empty when either column has zero variance
};

std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

// Correlates each feature on day t with the normalized close of day t+1.
std::vector<Correlation> pearson_correlations(const FeatureFrame& frame);

void write_feature_frame(std::ostream& out, const FeatureFrame& frame);
void write_labels(std::ostream& out, const LabelSet& labels);
void write_correlations(std::ostream& out, const std::vector<Correlation>& table);

}  // namespace xmove::features
