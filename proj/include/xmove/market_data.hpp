#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "xmove/date.hpp"

namespace xmove::market_data {

struct Candle {
    Date date;
    double open = 0.0;
    double high = 0.0;
    double low = 0.0;
    double close = 0.0;
    double adj_close = 0.0;
    double volume = 0.0;

    bool operator==(const Candle&) const = default;
};

using CandleSeries = std::vector<Candle>;

struct PricePoint {
    Date date;
    double close = 0.0;

    bool operator==(const PricePoint&) const = default;
};

struct AssetSeries {
    std::string asset_id;  // "ETH" or "GOLD"
    std::vector<PricePoint> points;
};

struct PanelRow {
    Candle candle;
    double eth_close = 0.0;
    double gold_close = 0.0;
};

struct AlignedPanel {
    std::vector<PanelRow> rows;

    std::size_t size() const { return rows.size(); }
    CandleSeries candles() const;
};

// Header names for each BTC column. An empty adj_close means the column is
// optional: when absent from the file it is copied from close.
struct CandleSchema {
    std::string date = "date";
    std::string open = "open";
    std::string high = "high";
    std::string low = "low";
    std::string close = "close";
    std::string adj_close = "adj_close";
    std::string volume = "volume";
};

// Throws ValidationError naming the date when an invariant fails.
void validate(const Candle& candle);

CandleSeries load_candles(const std::string& path, const CandleSchema& schema = {});
CandleSeries parse_candles(std::istream& in, const CandleSchema& schema = {});
void write_candles(std::ostream& out, const CandleSeries& candles);

AssetSeries load_asset_series(const std::string& path, const std::string& asset_id);
AssetSeries parse_asset_series(std::istream& in, const std::string& asset_id);
void write_asset_series(std::ostream& out, const AssetSeries& series);

// Joins the three series on BTC dates. ETH and gold gaps are forward-filled
// from their latest earlier observation; BTC dates preceding the first ETH or
// gold observation are dropped.
AlignedPanel align_panel(const CandleSeries& btc, const AssetSeries& eth, const AssetSeries& gold);

void write_panel(std::ostream& out, const AlignedPanel& panel);

}  // namespace xmove::market_data
