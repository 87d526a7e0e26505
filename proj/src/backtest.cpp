#include "xmove/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "xmove/error.hpp"
#include "xmove/indicators.hpp"

namespace xmove::backtest {

namespace {

using market_data::CandleSeries;

void check_sorted(const CandleSeries& candles) {
    for (std::size_t i = 1; i < candles.size(); ++i) {
        if (!(candles[i - 1].date < candles[i].date)) {
            throw ValidationError("candles must be sorted by date without duplicates (at " + candles[i].date.iso() +
                                  ")");
        }
    }
}

std::vector<double> closes(const CandleSeries& candles) {
    std::vector<double> out;
    out.reserve(candles.size());
    for (const auto& c : candles) out.push_back(c.close);
    return out;
}

std::size_t index_of(const CandleSeries& candles, Date d) {
    const auto it = std::lower_bound(candles.begin(), candles.end(), d,
                                     [](const market_data::Candle& c, Date x) { return c.date < x; });
    if (it == candles.end() || it->date != d) throw AlignmentError("signal date " + d.iso() + " has no candle");
    return static_cast<std::size_t>(it - candles.begin());
}

}  // namespace

BacktestResult run_signal_strategy(const CandleSeries& candles, const SignalSeries& signals,
                                   const SignalOptions& options) {
    if (signals.dates.size() != signals.values.size()) throw ShapeError("signal dates and values differ in length");
    if (candles.empty()) throw InsufficientDataError("no candles to trade on");
    check_sorted(candles);
    std::vector<bool> sig(candles.size(), false);
    for (std::size_t k = 0; k < signals.dates.size(); ++k) {
        if (signals.values[k]) sig[index_of(candles, signals.dates[k])] = true;
    }

    BacktestResult r;
    const std::size_t n = candles.size();
    r.equity.dates.reserve(n);
    r.equity.values.reserve(n);
    bool holding = false;
    Trade open;
    for (std::size_t t = 0; t < n; ++t) {
        double value = t == 0 ? 1.0 : r.equity.values.back();
        if (holding) value *= candles[t].close / candles[t - 1].close;
        r.equity.dates.push_back(candles[t].date);
        r.equity.values.push_back(value);
        if (holding) {
            if (options.extend_hold && sig[t] && t + 1 < n) continue;
            open.exit_date = candles[t].date;
            open.exit_price = candles[t].close;
            r.trades.push_back(open);
            holding = false;
            continue;  // the sale is today's action
        }
        if (!sig[t]) continue;
        if (t + 1 == n) {
            r.warnings.push_back("signal on final date " + candles[t].date.iso() + " dropped (no exit day)");
            continue;
        }
        open = Trade{candles[t].date, candles[t].close, candles[t].date, candles[t].close};
        holding = true;
    }
    return r;
}

BacktestResult run_buy_hold(const CandleSeries& candles) {
    if (candles.size() < 2) throw InsufficientDataError("buy-and-hold needs at least two candles");
    check_sorted(candles);
    BacktestResult r;
    r.trades_reported = false;
    const double first = candles.front().close;
    for (const auto& c : candles) {
        r.equity.dates.push_back(c.date);
        r.equity.values.push_back(c.close / first);
    }
    r.trades.push_back({candles.front().date, first, candles.back().date, candles.back().close});
    return r;
}

BacktestResult run_ma_cross(const CandleSeries& history, Date start, Date end, std::size_t fast, std::size_t slow) {
    if (fast == 0 || !(fast < slow)) throw ConfigError("MA cross needs 0 < fast < slow");
    check_sorted(history);
    const auto px = closes(history);
    const auto f = indicators::sma(px, static_cast<int>(fast));
    const auto s = indicators::sma(px, static_cast<int>(slow));
    std::size_t lo = history.size(), hi = 0;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (history[i].date < start || end < history[i].date) continue;
        lo = std::min(lo, i);
        hi = i;
    }
    if (lo == history.size()) throw ValidationError("period " + start.iso() + ".." + end.iso() + " has no candles");
    if (lo < slow) {
        throw InsufficientDataError("MA cross needs " + std::to_string(slow) + " candles of history before " +
                                    history[lo].date.iso());
    }

    BacktestResult r;
    bool holding = false;
    Trade open;
    for (std::size_t t = lo; t <= hi; ++t) {
        double value = t == lo ? 1.0 : r.equity.values.back();
        if (holding) value *= history[t].close / history[t - 1].close;
        r.equity.dates.push_back(history[t].date);
        r.equity.values.push_back(value);
        const bool up = f[t] > s[t] && f[t - 1] <= s[t - 1];
        const bool down = f[t] < s[t] && f[t - 1] >= s[t - 1];
        if (holding && (down || t == hi)) {
            open.exit_date = history[t].date;
            open.exit_price = history[t].close;
            r.trades.push_back(open);
            holding = false;
        } else if (!holding && up && t < hi) {
            open = Trade{history[t].date, history[t].close, history[t].date, history[t].close};
            holding = true;
        }
    }
    return r;
}

BacktestResult run_ma_cross(const CandleSeries& candles, std::size_t fast, std::size_t slow) {
    if (candles.size() <= slow) throw InsufficientDataError("MA cross needs more than " + std::to_string(slow) + " candles");
    return run_ma_cross(candles, candles[slow].date, candles.back().date, fast, slow);
}

double max_drawdown_pct(const std::vector<double>& equity) {
    double peak = -std::numeric_limits<double>::infinity(), worst = 0.0;
    for (double v : equity) {
        peak = std::max(peak, v);
        if (peak > 0.0) worst = std::max(worst, (peak - v) / peak);
    }
    return 100.0 * worst;
}

BacktestReport compute_metrics(const BacktestResult& result) {
    const auto& eq = result.equity.values;
    if (eq.empty()) throw ValidationError("empty equity curve");
    BacktestReport rep;
    rep.profit_pct = (eq.back() / eq.front() - 1.0) * 100.0;
    rep.max_drawdown_pct = max_drawdown_pct(eq);

    std::vector<double> r;
    for (std::size_t t = 1; t < eq.size(); ++t) r.push_back(eq[t] / eq[t - 1] - 1.0);
    if (!r.empty()) {
        const double n = static_cast<double>(r.size());
        double mean = 0.0;
        for (double x : r) mean += x;
        mean /= n;
        double ss = 0.0, down = 0.0;
        for (double x : r) {
            ss += (x - mean) * (x - mean);
            down += std::min(x, 0.0) * std::min(x, 0.0);
        }
        const double sd = r.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        if (sd > 0.0) rep.sharpe = mean / sd * std::sqrt(kAnnualization);
        const double dd = std::sqrt(down / n);
        if (dd > 0.0) rep.sortino = mean / dd * std::sqrt(kAnnualization);
        else if (mean > 0.0) rep.sortino = std::numeric_limits<double>::infinity();
    }

    if (result.trades_reported) {
        rep.n_trades = result.trades.size();
        if (!result.trades.empty()) {
            std::size_t wins = 0;
            for (const auto& t : result.trades) wins += t.return_fraction() > 0.0;
            rep.win_pct = 100.0 * static_cast<double>(wins) / static_cast<double>(result.trades.size());
        }
    }
    return rep;
}

std::vector<Period> default_periods(Date test_start, Date test_end) {
    if (test_end < test_start) throw ConfigError("test end precedes test start");
    return {{"full", test_start, test_end},
            {"bull", test_start + 149, std::min(test_end, test_start + 349)},
            {"bear", test_start + 314, std::min(test_end, test_start + 364)}};
}

std::vector<PeriodTable> compare_strategies(const CandleSeries& history, const std::vector<StrategySpec>& specs,
                                            const std::vector<Period>& periods) {
    check_sorted(history);
    std::vector<PeriodTable> out;
    for (const auto& p : periods) {
        CandleSeries slice;
        for (const auto& c : history) {
            if (!(c.date < p.start) && !(p.end < c.date)) slice.push_back(c);
        }
        if (slice.empty()) throw ValidationError("period '" + p.name + "' contains no candles");
        PeriodTable table{p, {}};
        for (const auto& spec : specs) {
            StrategyRow row;
            row.strategy = spec.name;
            if (std::holds_alternative<BuyHold>(spec.kind)) {
                row.result = run_buy_hold(slice);
            } else if (const auto* ma = std::get_if<MaCross>(&spec.kind)) {
                row.result = run_ma_cross(history, p.start, p.end, ma->fast, ma->slow);
            } else {
                const auto& m = std::get<ModelSignal>(spec.kind);
                if (m.dates.size() != m.probs.size()) throw ShapeError("signal dates and probabilities differ");
                SignalSeries sig;
                for (std::size_t i = 0; i < m.dates.size(); ++i) {
                    if (m.dates[i] < p.start || p.end < m.dates[i]) continue;
                    sig.dates.push_back(m.dates[i]);
                    sig.values.push_back(m.probs[i] > m.tau);
                }
                row.result = run_signal_strategy(slice, sig, m.options);
            }
            row.report = compute_metrics(row.result);
            table.rows.push_back(std::move(row));
        }
        out.push_back(std::move(table));
    }
    return out;
}

// ---- emitters

namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
    if (!v) return nullptr;
    if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
    return *v;
}

std::string opt_text(const std::optional<double>& v, int decimals = 2) {
    if (!v) return "N.A.";
    if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, *v);
    return buf;
}

}  // namespace

nlohmann::json to_json(const BacktestReport& r) {
    return {{"profit_pct", r.profit_pct},
            {"sortino", opt_json(r.sortino)},
            {"sharpe", opt_json(r.sharpe)},
            {"max_drawdown_pct", r.max_drawdown_pct},
            {"win_pct", opt_json(r.win_pct)},
            {"n_trades", r.n_trades ? nlohmann::json(*r.n_trades) : nlohmann::json(nullptr)}};
}

nlohmann::json tables_json(const std::vector<PeriodTable>& tables) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& t : tables) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& row : t.rows) {
            auto j = to_json(row.report);
            j["strategy"] = row.strategy;
            rows.push_back(j);
        }
        out.push_back({{"period", t.period.name},
                       {"start", t.period.start.iso()},
                       {"end", t.period.end.iso()},
                       {"rows", rows}});
    }
    return out;
}

std::string tables_text(const std::vector<PeriodTable>& tables) {
    std::ostringstream os;
    for (const auto& t : tables) {
        std::size_t w = 10;
        for (const auto& row : t.rows) w = std::max(w, row.strategy.size());
        os << "Backtest " << t.period.name << " (" << t.period.start.iso() << " .. " << t.period.end.iso() << ")\n";
        char line[256];
        std::snprintf(line, sizeof line, "%-*s | %9s | %8s | %7s | %14s | %6s | %13s\n", static_cast<int>(w),
                      "Strategies", "Profit %", "Sortino", "Sharpe", "Max Drawdown %", "Win%", "Num of Trades");
        os << line;
        for (const auto& row : t.rows) {
            const auto& r = row.report;
            const std::string trades = r.n_trades ? std::to_string(*r.n_trades) : "N.A.";
            std::snprintf(line, sizeof line, "%-*s | %9.1f | %8s | %7s | %14.1f | %6s | %13s\n", static_cast<int>(w),
                          row.strategy.c_str(), r.profit_pct, opt_text(r.sortino).c_str(), opt_text(r.sharpe).c_str(),
                          r.max_drawdown_pct, opt_text(r.win_pct, 1).c_str(), trades.c_str());
            os << line;
        }
        os << '\n';
    }
    return os.str();
}

nlohmann::json ledger_json(const BacktestResult& result) {
    nlohmann::json trades = nlohmann::json::array();
    for (const auto& t : result.trades) {
        trades.push_back({{"entry_date", t.entry_date.iso()},
                          {"entry_price", t.entry_price},
                          {"exit_date", t.exit_date.iso()},
                          {"exit_price", t.exit_price},
                          {"return", t.return_fraction()}});
    }
    return {{"trades", trades}, {"warnings", result.warnings}};
}

}  // namespace xmove::backtest
