#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "xmove/date.hpp"
#include "xmove/market_data.hpp"

namespace xmove::backtest {

struct SignalSeries {
    std::vector<Date> dates;
    std::vector<bool> values;
};

struct Trade {
    Date entry_date;
    double entry_price = 0.0;
    Date exit_date;
    double exit_price = 0.0;

    double return_fraction() const { return exit_price / entry_price - 1.0; }
};

struct EquityCurve {
    std::vector<Date> dates;
    std::vector<double> values;  // starts at 1.0
};

struct BacktestResult {
    std::vector<Trade> trades;
    EquityCurve equity;
    bool trades_reported = true;  // false for buy-and-hold (Win % / trades shown as N.A.)
    std::vector<std::string> warnings;
};

struct SignalOptions {
    // When set, a signal on the planned exit day keeps the position open for
    // another day instead of being ignored.
    bool extend_hold = false;
};

// Buy at close_t on a signal while flat, sell at close_{t+1}; one action per day.
BacktestResult run_signal_strategy(const market_data::CandleSeries& candles, const SignalSeries& signals,
                                   const SignalOptions& options = {});
BacktestResult run_buy_hold(const market_data::CandleSeries& candles);
// Crossovers of SMA(fast) over SMA(slow); SMAs use the whole history, trades
// happen within [start, end], and an open position closes at the last close.
BacktestResult run_ma_cross(const market_data::CandleSeries& history, Date start, Date end, std::size_t fast = 7,
                            std::size_t slow = 21);
BacktestResult run_ma_cross(const market_data::CandleSeries& candles, std::size_t fast = 7, std::size_t slow = 21);

struct BacktestReport {
    double profit_pct = 0.0;
    std::optional<double> sharpe;   // undefined when returns have zero spread
    std::optional<double> sortino;  // +inf when there is no downside and the mean is positive
    double max_drawdown_pct = 0.0;
    std::optional<double> win_pct;
    std::optional<std::size_t> n_trades;
};

inline constexpr double kAnnualization = 365.0;

BacktestReport compute_metrics(const BacktestResult& result);
double max_drawdown_pct(const std::vector<double>& equity);

struct BuyHold {};
struct MaCross {
    std::size_t fast = 7;
    std::size_t slow = 21;
};
struct ModelSignal {
    std::vector<Date> dates;
    std::vector<double> probs;
    double tau = 0.5;
    SignalOptions options;
};

struct StrategySpec {
    std::string name;
    std::variant<BuyHold, MaCross, ModelSignal> kind;
};

struct Period {
    std::string name;
    Date start;
    Date end;  // inclusive
};

// Full test year plus the bull (days 150-350) and bear (days 315-365) windows,
// counting the test start as day 1.
std::vector<Period> default_periods(Date test_start = Date(2020, 6, 1), Date test_end = Date(2021, 5, 31));

struct StrategyRow {
    std::string strategy;
    BacktestReport report;
    BacktestResult result;
};

struct PeriodTable {
    Period period;
    std::vector<StrategyRow> rows;
};

std::vector<PeriodTable> compare_strategies(const market_data::CandleSeries& history,
                                            const std::vector<StrategySpec>& specs, const std::vector<Period>& periods);

nlohmann::json to_json(const BacktestReport& r);
nlohmann::json tables_json(const std::vector<PeriodTable>& tables);
std::string tables_text(const std::vector<PeriodTable>& tables);
nlohmann::json ledger_json(const BacktestResult& result);

}  // namespace xmove::backtest
