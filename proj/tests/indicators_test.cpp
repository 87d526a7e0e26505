#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "oracles.hpp"
#include "test_util.hpp"
#include "xmove/error.hpp"
#include "xmove/indicators.hpp"

namespace xmove::indicators {
namespace {

TEST(SmaTest, LastValueIsWindowMean) {
    const std::vector<double> x{1, 2, 3, 4, 5, 6, 7};
    EXPECT_DOUBLE_EQ(sma(x, 7).back(), 4.0);
}

TEST(SmaTest, ConstantSeries) {
    const std::vector<double> x(30, 42.5);
    const auto out = sma(x, 7);
    for (std::size_t t = 6; t < out.size(); ++t) EXPECT_DOUBLE_EQ(out[t], 42.5);
}

TEST(SmaTest, LeadingPositionsUndefined) {
    const std::vector<double> x{10, 20};
    const auto out = sma(x, 2);
    EXPECT_FALSE(is_defined(out[0]));
    EXPECT_DOUBLE_EQ(out[1], 15.0);
    EXPECT_THROW(sma(x, 0), ConfigError);
}

TEST(EmaTest, ConstantSeriesIsFixedPoint) {
    const std::vector<double> x(20, 3.0);
    for (double v : ema(x, 0.67)) EXPECT_DOUBLE_EQ(v, 3.0);
}

TEST(EmaTest, AlphaOneReproducesInput) {
    const std::vector<double> x{4, 1, 7, 2};
    EXPECT_EQ(ema(x, 1.0), x);
}

TEST(EmaTest, OneRecursionStep) {
    const std::vector<double> x{0, 1};
    const auto out = ema(x, 0.67);
    EXPECT_DOUBLE_EQ(out[0], 0.0);
    EXPECT_DOUBLE_EQ(out[1], 0.67);
    EXPECT_THROW(ema(x, 0.0), ConfigError);
    EXPECT_THROW(ema(x, 1.5), ConfigError);
}

TEST(EmaSpanTest, SpanOneIsIdentityAndSpan12Step) {
    const std::vector<double> x{0, 1};
    EXPECT_EQ(ema_span(x, 1), x);
    EXPECT_NEAR(ema_span(x, 12)[1], 2.0 / 13.0, 1e-15);
    EXPECT_NEAR(ema_span(x, 12)[1], 0.1538, 1e-4);
    EXPECT_THROW(ema_span(x, 0), ConfigError);
    const std::vector<double> c(10, 5.0);
    for (double v : ema_span(c, 26)) EXPECT_DOUBLE_EQ(v, 5.0);
}

TEST(MacdTest, ConstantIsZeroAndSinglePoint) {
    const std::vector<double> c(50, 77.0);
    for (double v : macd(c)) EXPECT_EQ(v, 0.0);
    const std::vector<double> one{12.0};
    EXPECT_EQ(macd(one), std::vector<double>{0.0});
}

TEST(MacdTest, RisingLineMatchesOracleAndTurnsPositive) {
    std::vector<double> x;
    for (int i = 0; i < 100; ++i) x.push_back(100.0 + 2.0 * i);
    const auto out = macd(x);
    for (std::size_t t = 0; t < x.size(); ++t) {
        const double expect = oracle::ema_expanded(x, t, 2.0 / 13.0) - oracle::ema_expanded(x, t, 2.0 / 27.0);
        EXPECT_NEAR(out[t], expect, 1e-9 * std::max(1.0, std::abs(expect)));
    }
    for (std::size_t t = 1; t < x.size(); ++t) EXPECT_GT(out[t], 0.0);
}

TEST(RollingStdTest, KnownWindows) {
    const std::vector<double> flat(25, 9.0);
    EXPECT_EQ(rolling_std(flat, 20).back(), 0.0);

    std::vector<double> ramp;
    for (int i = 1; i <= 20; ++i) ramp.push_back(i);
    EXPECT_NEAR(rolling_std(ramp, 20).back(), std::sqrt(35.0), 1e-12);
    EXPECT_NEAR(rolling_std(ramp, 20).back(), 5.9161, 1e-4);

    std::vector<double> alt;
    for (int i = 0; i < 20; ++i) alt.push_back(i % 2 == 0 ? 0.0 : 2.0);
    EXPECT_NEAR(rolling_std(alt, 20).back(), std::sqrt(20.0 / 19.0), 1e-12);
    EXPECT_NEAR(rolling_std(alt, 20).back(), 1.0260, 1e-4);
    EXPECT_FALSE(is_defined(rolling_std(alt, 20)[18]));
    EXPECT_THROW(rolling_std(alt, 1), ConfigError);
}

TEST(BollingerTest, Arithmetic) {
    const std::vector<double> ma{100.0}, sd{5.0}, zero{0.0};
    auto b = bollinger(ma, sd, 2.0);
    EXPECT_DOUBLE_EQ(b.upper[0], 110.0);
    EXPECT_DOUBLE_EQ(b.lower[0], 90.0);
    b = bollinger(ma, zero, 2.0);
    EXPECT_EQ(b.upper[0], 100.0);
    EXPECT_EQ(b.lower[0], 100.0);
    b = bollinger(ma, sd, 0.0);
    EXPECT_EQ(b.upper[0], 100.0);
    EXPECT_EQ(b.lower[0], 100.0);
    const std::vector<double> two{1.0, 2.0};
    EXPECT_THROW(bollinger(ma, two, 2.0), ShapeError);
}

TEST(SpreadTest, HighMinusLow) {
    market_data::Candle c{Date(2020, 1, 1), 8, 10, 7, 9, 9, 1};
    EXPECT_EQ(spread(c), 3.0);
    c.high = c.low = 7;
    EXPECT_EQ(spread(c), 0.0);
    c.high = 60000.5;
    c.low = 58000.25;
    EXPECT_EQ(spread(c), 2000.25);
}

TEST(MaFeatureTest, StrictMargin) {
    EXPECT_EQ(ma_feature(105.1, 100.0), 1.0);
    EXPECT_EQ(ma_feature(100.0, 100.0), 0.0);
    EXPECT_EQ(ma_feature(105.0, 100.0), 0.0);
}

market_data::AlignedPanel panel_of(std::size_t days, std::uint64_t seed) {
    const auto m = test::random_market(days, seed);
    return market_data::align_panel(m.btc, m.eth, m.gold);
}

TEST(IndicatorFrameTest, WarmupBoundary) {
    auto panel = panel_of(40, 1);
    panel.rows.resize(26);
    EXPECT_EQ(compute_indicator_frame(panel).size(), 1u);
    panel.rows.resize(25);
    EXPECT_THROW(compute_indicator_frame(panel), InsufficientDataError);
}

TEST(IndicatorFrameTest, ConstantPricePanel) {
    auto panel = panel_of(60, 2);
    for (auto& r : panel.rows) {
        r.candle.open = r.candle.high = r.candle.low = r.candle.close = r.candle.adj_close = 50.0;
    }
    for (const auto& row : compute_indicator_frame(panel).rows) {
        EXPECT_EQ(row.macd, 0.0);
        EXPECT_EQ(row.sd20, 0.0);
        EXPECT_EQ(row.boll_upper, row.ma21);
        EXPECT_EQ(row.boll_lower, row.ma21);
    }
}

TEST(IndicatorFrameTest, MatchesBruteForceAndHoldsInvariants) {
    const auto panel = panel_of(1000, 42);
    const auto frame = compute_indicator_frame(panel);
    ASSERT_EQ(frame.size(), panel.size() - 25);
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const auto t = i + 25;
        const auto& r = frame.rows[i];
        const auto o = oracle::indicators_at(panel, t);
        EXPECT_LT(test::rel_err(r.ma7, o.ma7), 1e-9);
        EXPECT_LT(test::rel_err(r.ma21, o.ma21), 1e-9);
        EXPECT_LT(test::rel_err(r.ema, o.ema), 1e-9);
        EXPECT_LT(test::rel_err(r.ema12, o.ema12), 1e-9);
        EXPECT_LT(test::rel_err(r.ema26, o.ema26), 1e-9);
        EXPECT_LT(test::rel_err(r.sd20, o.sd20), 1e-9);
        EXPECT_LT(test::rel_err(r.boll_upper, o.upper), 1e-9);
        EXPECT_LT(test::rel_err(r.boll_lower, o.lower), 1e-9);
        EXPECT_EQ(r.spread, o.spread);
        EXPECT_EQ(r.eth_close, o.eth);
        EXPECT_EQ(r.gold_close, o.gold);
        EXPECT_EQ(r.ma_feature, o.ma_feature);

        const double diff = r.ema12 - r.ema26;
        EXPECT_EQ(std::memcmp(&r.macd, &diff, sizeof(double)), 0);
        EXPECT_LE(r.boll_lower, r.ma21);
        EXPECT_LE(r.ma21, r.boll_upper);
        EXPECT_NEAR(r.boll_upper - r.boll_lower, 4.0 * r.sd20, 1e-9 * r.boll_upper);
        EXPECT_GE(r.spread, 0.0);
    }
}

TEST(IndicatorFrameTest, PriceShiftInvariance) {
    const auto panel = panel_of(300, 8);
    auto shifted = panel;
    const double c = 1000.0;
    for (auto& r : shifted.rows) {
        auto& k = r.candle;
        k.open += c, k.high += c, k.low += c, k.close += c, k.adj_close += c;
    }
    const auto a = compute_indicator_frame(panel);
    const auto b = compute_indicator_frame(shifted);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& x = a.rows[i];
        const auto& y = b.rows[i];
        const double tol = 1e-9 * (std::abs(y.ma21) + c);
        EXPECT_NEAR(y.sd20, x.sd20, tol);
        EXPECT_NEAR(y.spread, x.spread, tol);
        EXPECT_NEAR(y.ma7, x.ma7 + c, tol);
        EXPECT_NEAR(y.ma21, x.ma21 + c, tol);
        EXPECT_NEAR(y.ema, x.ema + c, tol);
        EXPECT_NEAR(y.boll_upper, x.boll_upper + c, tol);
        EXPECT_NEAR(y.boll_lower, x.boll_lower + c, tol);
        EXPECT_NEAR(y.macd, x.macd, tol);
    }
}

TEST(IndicatorConfigTest, RejectsBadValues) {
    IndicatorConfig cfg;
    cfg.ema_alpha = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.bollinger_k = -1;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.sma_fast = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace xmove::indicators
