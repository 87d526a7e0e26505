#include "xmove/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "xmove/csv.hpp"
#include "xmove/error.hpp"

namespace xmove::market_data {

namespace {

std::size_t require_column(const csv::Table& table, const std::string& name) {
    auto idx = table.column(name);
    if (idx == std::string::npos) throw ParseError("missing column '" + name + "'", 1);
    return idx;
}

Date parse_date_field(const std::string& text, std::size_t line) {
    try {
        return Date::parse(text);
    } catch (const ValidationError& e) {
        throw ParseError(e.what(), line);
    }
}

template <typename T>
void sort_and_reject_duplicates(std::vector<T>& items, const char* what) {
    std::stable_sort(items.begin(), items.end(),
                     [](const T& a, const T& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < items.size(); ++i) {
        if (items[i].date == items[i - 1].date) {
            throw ValidationError(std::string("duplicate ") + what + " date " + items[i].date.iso());
        }
    }
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DependencyError("cannot open '" + path + "'");
    return in;
}

}  // namespace

CandleSeries AlignedPanel::candles() const {
    CandleSeries out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(row.candle);
    return out;
}

void validate(const Candle& c) {
    const auto fail = [&](const std::string& msg) {
        return ValidationError("candle " + c.date.iso() + ": " + msg);
    };
    for (double v : {c.open, c.high, c.low, c.close, c.adj_close, c.volume}) {
        if (!std::isfinite(v)) throw fail("non-finite value");
    }
    if (c.open <= 0 || c.high <= 0 || c.low <= 0 || c.close <= 0 || c.adj_close <= 0) {
        throw fail("non-positive price");
    }
    if (c.volume < 0) throw fail("negative volume");
    if (c.low > c.high) throw fail("low above high");
    if (c.low > std::min(c.open, c.close)) throw fail("low above open/close");
    if (c.high < std::max(c.open, c.close)) throw fail("high below open/close");
}

CandleSeries parse_candles(std::istream& in, const CandleSchema& schema) {
    const auto table = csv::read(in);
    const auto date_col = require_column(table, schema.date);
    const auto open_col = require_column(table, schema.open);
    const auto high_col = require_column(table, schema.high);
    const auto low_col = require_column(table, schema.low);
    const auto close_col = require_column(table, schema.close);
    const auto volume_col = require_column(table, schema.volume);
    const auto adj_col = schema.adj_close.empty() ? std::string::npos : table.column(schema.adj_close);

    CandleSeries candles;
    candles.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto line = table.line_numbers[r];
        Candle c;
        c.date = parse_date_field(row[date_col], line);
        c.open = csv::parse_double(row[open_col], line);
        c.high = csv::parse_double(row[high_col], line);
        c.low = csv::parse_double(row[low_col], line);
        c.close = csv::parse_double(row[close_col], line);
        c.adj_close = adj_col == std::string::npos ? c.close : csv::parse_double(row[adj_col], line);
        c.volume = csv::parse_double(row[volume_col], line);
        validate(c);
        candles.push_back(c);
    }
    sort_and_reject_duplicates(candles, "candle");
    return candles;
}

CandleSeries load_candles(const std::string& path, const CandleSchema& schema) {
    auto in = open_or_throw(path);
    return parse_candles(in, schema);
}

void write_candles(std::ostream& out, const CandleSeries& candles) {
    out << "date,open,high,low,close,adj_close,volume\n";
    for (const auto& c : candles) {
        out << c.date.iso() << ',' << csv::format_double(c.open) << ',' << csv::format_double(c.high) << ','
            << csv::format_double(c.low) << ',' << csv::format_double(c.close) << ','
            << csv::format_double(c.adj_close) << ',' << csv::format_double(c.volume) << '\n';
    }
}

AssetSeries parse_asset_series(std::istream& in, const std::string& asset_id) {
    const auto table = csv::read(in);
    const auto date_col = require_column(table, "date");
    const auto close_col = require_column(table, "close");
    AssetSeries series{asset_id, {}};
    series.points.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto line = table.line_numbers[r];
        PricePoint p{parse_date_field(table.rows[r][date_col], line),
                     csv::parse_double(table.rows[r][close_col], line)};
        if (p.close <= 0) {
            throw ValidationError(asset_id + " " + p.date.iso() + ": non-positive price");
        }
        series.points.push_back(p);
    }
    sort_and_reject_duplicates(series.points, asset_id.c_str());
    return series;
}

AssetSeries load_asset_series(const std::string& path, const std::string& asset_id) {
    auto in = open_or_throw(path);
    return parse_asset_series(in, asset_id);
}

void write_asset_series(std::ostream& out, const AssetSeries& series) {
    out << "date,close\n";
    for (const auto& p : series.points) out << p.date.iso() << ',' << csv::format_double(p.close) << '\n';
}

AlignedPanel align_panel(const CandleSeries& btc, const AssetSeries& eth, const AssetSeries& gold) {
    if (btc.empty() || eth.points.empty() || gold.points.empty()) {
        throw AlignmentError("cannot align: an input series is empty");
    }
    AlignedPanel panel;
    std::size_t ei = 0, gi = 0;
    const PricePoint* last_eth = nullptr;
    const PricePoint* last_gold = nullptr;
    for (const auto& candle : btc) {
        while (ei < eth.points.size() && eth.points[ei].date <= candle.date) last_eth = &eth.points[ei++];
        while (gi < gold.points.size() && gold.points[gi].date <= candle.date) last_gold = &gold.points[gi++];
        if (last_eth == nullptr || last_gold == nullptr) continue;
        panel.rows.push_back({candle, last_eth->close, last_gold->close});
    }
    if (panel.rows.empty()) throw AlignmentError("BTC, ETH and gold date ranges do not overlap");
    return panel;
}

void write_panel(std::ostream& out, const AlignedPanel& panel) {
    out << "date,open,high,low,close,adj_close,volume,eth_close,gold_close\n";
    for (const auto& r : panel.rows) {
        const auto& c = r.candle;
        out << c.date.iso() << ',' << csv::format_double(c.open) << ',' << csv::format_double(c.high) << ','
            << csv::format_double(c.low) << ',' << csv::format_double(c.close) << ','
            << csv::format_double(c.adj_close) << ',' << csv::format_double(c.volume) << ','
            << csv::format_double(r.eth_close) << ',' << csv::format_double(r.gold_close) << '\n';
    }
}

}  // namespace xmove::market_data
