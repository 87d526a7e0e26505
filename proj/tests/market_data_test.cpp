#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "test_util.hpp"
#include "xmove/error.hpp"
#include "xmove/market_data.hpp"

namespace xmove::market_data {
namespace {

TEST(LoadCandlesTest, WellFormedRowsComeBackInDateOrder) {
    std::istringstream in(
        "date,open,high,low,close,adj_close,volume\n"
        "2020-01-03,10,12,9,11,11,100\n"
        "2020-01-01,8,9,7,8.5,8.5,50\n"
        "2020-01-02,8.5,10,8,10,10,70\n");
    const auto candles = parse_candles(in);
    ASSERT_EQ(candles.size(), 3u);
    EXPECT_EQ(candles[0].date, Date(2020, 1, 1));
    EXPECT_EQ(candles[1].date, Date(2020, 1, 2));
    EXPECT_EQ(candles[2].date, Date(2020, 1, 3));
    EXPECT_DOUBLE_EQ(candles[2].high, 12.0);
}

TEST(LoadCandlesTest, HighBelowLowNamesTheDate) {
    std::istringstream in(
        "date,open,high,low,close,adj_close,volume\n"
        "2020-01-01,11,10,12,11,11,100\n");
    try {
        parse_candles(in);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("2020-01-01"), std::string::npos);
    }
}

TEST(LoadCandlesTest, MissingAdjCloseIsCopiedFromClose) {
    std::istringstream in(
        "date,open,high,low,close,volume\n"
        "2020-01-01,10,12,9,11,100\n"
        "2020-01-02,11,13,10,12.5,100\n");
    for (const auto& c : parse_candles(in)) EXPECT_EQ(c.adj_close, c.close);
}

TEST(LoadCandlesTest, MalformedRowReportsLineNumber) {
    std::istringstream in(
        "date,open,high,low,close,adj_close,volume\n"
        "2020-01-01,10,12,9,11,11,100\n"
        "2020-01-02,10,abc,9,11,11,100\n");
    try {
        parse_candles(in);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(LoadCandlesTest, DuplicateDateRejected) {
    std::istringstream in(
        "date,open,high,low,close,adj_close,volume\n"
        "2020-01-01,10,12,9,11,11,100\n"
        "2020-01-01,10,12,9,11,11,100\n");
    EXPECT_THROW(parse_candles(in), ValidationError);
}

TEST(LoadCandlesTest, CustomSchemaMapsColumns) {
    std::istringstream in(
        "Date,Open,High,Low,Close,Volume\n"
        "2020-01-01,10,12,9,11,100\n");
    CandleSchema schema{"Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"};
    const auto candles = parse_candles(in, schema);
    ASSERT_EQ(candles.size(), 1u);
    EXPECT_EQ(candles[0].adj_close, 11.0);
}

TEST(LoadCandlesTest, SerializeThenLoadIsIdentity) {
    const auto market = test::random_market(200, 7);
    std::stringstream buf;
    write_candles(buf, market.btc);
    EXPECT_EQ(parse_candles(buf), market.btc);

    std::stringstream abuf;
    write_asset_series(abuf, market.eth);
    EXPECT_EQ(parse_asset_series(abuf, "ETH").points, market.eth.points);
}

TEST(LoadAssetSeriesTest, TwoRowsLoad) {
    std::istringstream in("date,close\n2020-01-01,1500.5\n2020-01-02,1501\n");
    const auto s = parse_asset_series(in, "GOLD");
    EXPECT_EQ(s.asset_id, "GOLD");
    ASSERT_EQ(s.points.size(), 2u);
}

TEST(LoadAssetSeriesTest, NonPositivePriceRejected) {
    std::istringstream in("date,close\n2020-01-01,0\n");
    EXPECT_THROW(parse_asset_series(in, "GOLD"), ValidationError);
}

TEST(LoadAssetSeriesTest, UnsortedRowsAreSorted) {
    const auto market = test::random_market(60, 3);
    auto shuffled = market.eth.points;
    std::mt19937_64 rng(11);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::stringstream buf;
    write_asset_series(buf, AssetSeries{"ETH", shuffled});
    auto expected = shuffled;
    std::sort(expected.begin(), expected.end(), [](auto& a, auto& b) { return a.date < b.date; });
    EXPECT_EQ(parse_asset_series(buf, "ETH").points, expected);
}

TEST(AlignPanelTest, WeekendGoldCarriesFridayClose) {
    // 2020-06-01 is a Monday.
    const auto market = test::random_market(7, 5, Date(2020, 6, 1));
    ASSERT_EQ(market.gold.points.size(), 5u);
    const auto panel = align_panel(market.btc, market.eth, market.gold);
    ASSERT_EQ(panel.size(), 7u);
    const double friday = market.gold.points[4].close;
    EXPECT_EQ(panel.rows[5].gold_close, friday);
    EXPECT_EQ(panel.rows[6].gold_close, friday);
}

TEST(AlignPanelTest, IdenticalDatesKeepEveryRow) {
    const auto market = test::random_market(30, 9, Date(2020, 6, 1), true);
    EXPECT_EQ(align_panel(market.btc, market.eth, market.gold).size(), market.btc.size());
}

TEST(AlignPanelTest, LeadingBtcDatesWithoutEthAreDropped) {
    auto market = test::random_market(40, 2, Date(2020, 6, 1), true);
    market.eth.points.erase(market.eth.points.begin(), market.eth.points.begin() + 10);
    const auto panel = align_panel(market.btc, market.eth, market.gold);
    // Enumeration oracle: BTC dates on or after the first ETH and gold dates.
    std::vector<Date> expected;
    for (const auto& c : market.btc) {
        if (c.date >= market.eth.points.front().date && c.date >= market.gold.points.front().date) {
            expected.push_back(c.date);
        }
    }
    ASSERT_EQ(panel.size(), expected.size());
    EXPECT_EQ(panel.size(), 30u);
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(panel.rows[i].candle.date, expected[i]);
}

TEST(AlignPanelTest, DisjointRangesFail) {
    const auto a = test::random_market(10, 1, Date(2020, 1, 1));
    const auto b = test::random_market(10, 1, Date(2021, 1, 1));
    EXPECT_THROW(align_panel(a.btc, b.eth, b.gold), AlignmentError);
}

TEST(AlignPanelTest, GoldEqualsLatestEarlierValueByBruteForce) {
    const auto market = test::random_market(400, 17);
    const auto panel = align_panel(market.btc, market.eth, market.gold);
    Date prev{};
    for (std::size_t r = 0; r < panel.size(); ++r) {
        const auto& row = panel.rows[r];
        if (r > 0) EXPECT_LT(prev, row.candle.date);
        prev = row.candle.date;
        const PricePoint* latest = nullptr;
        for (const auto& p : market.gold.points) {
            if (p.date <= row.candle.date) latest = &p;
        }
        ASSERT_NE(latest, nullptr);
        EXPECT_EQ(row.gold_close, latest->close);
        EXPECT_TRUE(std::any_of(market.btc.begin(), market.btc.end(),
                                [&](const Candle& c) { return c.date == row.candle.date; }));
    }
}

}  // namespace
}  // namespace xmove::market_data
