#include "xmove/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

#include "xmove/csv.hpp"
#include "xmove/error.hpp"

namespace xmove::config {

namespace {

constexpr const char* kDefaults[][2] = {
    {"run.seed", "42"},
    {"run.output_dir", "out"},

    {"data.btc", ""},
    {"data.eth", ""},
    {"data.gold", ""},
    {"data.embeddings", ""},

    {"task.name", "up5"},
    {"task.label_source", "high_low"},

    {"split.test_start", "2020-06-01"},
    {"split.test_end", "2021-05-31"},
    {"split.train_end", ""},

    {"indicators.sma_fast", "7"},
    {"indicators.sma_slow", "21"},
    {"indicators.ema_alpha", "0.67"},
    {"indicators.ema_short_span", "12"},
    {"indicators.ema_long_span", "26"},
    {"indicators.std_window", "20"},
    {"indicators.bollinger_k", "2"},
    {"indicators.ma_feature_margin", "0.05"},
    {"indicators.warmup_rows", "25"},

    {"ta.window", "5"},
    {"ta.folds", "4"},
    {"ta.kernel", "rbf"},
    {"ta.degree", "3"},
    {"ta.coef0", "0"},
    {"ta.grid_c", "1,10,30,50,100,500,1000"},
    {"ta.grid_gamma", "0.1,0.5,1,10,50"},
    {"ta.tol", "0.001"},
    {"ta.max_iterations", "200000"},

    {"twitter.arch", "parallel"},
    {"twitter.embedding_dim", "768"},
    {"twitter.max_slices", "362"},
    {"twitter.filter_heights", "3,4,5"},
    {"twitter.n_filters", "100"},
    {"twitter.parallel_dense", "2048,512"},
    {"twitter.channels", "6,16,16"},
    {"twitter.pool", "2"},
    {"twitter.sequential_dense", "119,84"},
    {"twitter.dropout", "0.5"},
    {"twitter.loss", "focal"},
    {"twitter.focal_alpha", "0.25"},
    {"twitter.focal_gamma", "2"},
    {"twitter.lr", "0.001"},
    {"twitter.weight_decay", "0"},
    {"twitter.epochs", "50"},
    {"twitter.batch_size", "32"},
    {"twitter.patience", "5"},
    {"twitter.validation_fraction", "0.1"},

    {"fusion.model", "svm"},
    {"fusion.twitter_arch", "parallel"},
    {"fusion.probs", "out_of_fold"},
    {"fusion.folds", "4"},
    {"fusion.svm_c", "1"},
    {"fusion.svm_gamma", "1"},
    {"fusion.logistic_l2", "0.001"},

    {"evaluate.models", "ta,twitter_parallel,fusion"},
    {"evaluate.taus", "0.5,0.95,0.99"},

    {"backtest.strategies", "buy_hold,ma_cross,fusion"},
    {"backtest.tau", "0.5"},
    {"backtest.extend_hold", "false"},
    {"backtest.ma_fast", "7"},
    {"backtest.ma_slow", "21"},
    {"backtest.bull_start_day", "150"},
    {"backtest.bull_end_day", "350"},
    {"backtest.bear_start_day", "315"},
    {"backtest.bear_end_day", "365"},
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, const std::string& value, const char* expected) {
    throw ConfigError("config key '" + std::string(key) + "': expected " + expected + ", got '" + value + "'");
}

long long parse_int(std::string_view key, const std::string& text) {
    long long v = 0;
    const auto* end = text.data() + text.size();
    const auto [p, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || p != end || text.empty()) bad_value(key, text, "an integer");
    return v;
}

double parse_num(std::string_view key, const std::string& text) {
    try {
        return csv::parse_double(text, 0);
    } catch (const ValidationError&) {
        bad_value(key, text, "a number");
    }
}

}  // namespace

Config Config::defaults() {
    Config c;
    for (const auto& kv : kDefaults) c.values_.emplace(kv[0], kv[1]);
    return c;
}

Config Config::parse(std::istream& in, const std::string& source) {
    const Config known = defaults();
    Config c;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find_first_of("#;");
        const std::string text = trim(std::string_view(line).substr(0, hash));
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']' || text.size() < 3) {
                throw ConfigError(source + ":" + std::to_string(line_no) + ": malformed section header");
            }
            section = trim(std::string_view(text).substr(1, text.size() - 2));
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
        }
        const std::string local = trim(std::string_view(text).substr(0, eq));
        const std::string key = section.empty() ? local : section + "." + local;
        if (!known.has(key)) throw ConfigError(source + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
        c.values_[key] = trim(std::string_view(text).substr(eq + 1));
    }
    return c;
}

Config Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DependencyError("cannot open config file '" + path + "'");
    return parse(in, path);
}

Config Config::from_file(const std::string& path) {
    Config c = defaults();
    c.merge(load_file(path));
    return c;
}

bool Config::has(std::string_view key) const { return values_.find(key) != values_.end(); }

void Config::set(const std::string& key, const std::string& value) {
    static const Config known = defaults();
    if (!known.has(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
}

void Config::merge(const Config& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
}

const std::string& Config::str(std::string_view key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + std::string(key) + "'");
    return it->second;
}

double Config::num(std::string_view key) const { return parse_num(key, str(key)); }

long long Config::integer(std::string_view key) const { return parse_int(key, str(key)); }

std::size_t Config::count(std::string_view key) const {
    const long long v = integer(key);
    if (v < 0) bad_value(key, str(key), "a non-negative integer");
    return static_cast<std::size_t>(v);
}

std::uint64_t Config::u64(std::string_view key) const {
    const std::string& text = str(key);
    std::uint64_t v = 0;
    const auto* end = text.data() + text.size();
    const auto [p, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || p != end || text.empty()) bad_value(key, text, "an unsigned integer");
    return v;
}

bool Config::flag(std::string_view key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad_value(key, v, "true or false");
}

Date Config::date(std::string_view key) const {
    try {
        return Date::parse(str(key));
    } catch (const ValidationError&) {
        bad_value(key, str(key), "a YYYY-MM-DD date");
    }
}

std::vector<std::string> Config::strs(std::string_view key) const {
    std::vector<std::string> out;
    const std::string& v = str(key);
    if (trim(v).empty()) return out;
    for (const auto& part : csv::split(v, ',')) {
        auto t = trim(part);
        if (t.empty()) bad_value(key, v, "a comma-separated list without empty items");
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<double> Config::nums(std::string_view key) const {
    std::vector<double> out;
    for (const auto& s : strs(key)) out.push_back(parse_num(key, s));
    return out;
}

std::vector<std::size_t> Config::counts(std::string_view key) const {
    std::vector<std::size_t> out;
    for (const auto& s : strs(key)) {
        const long long v = parse_int(key, s);
        if (v < 0) bad_value(key, s, "non-negative integers");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::string Config::dump() const {
    std::ostringstream os;
    std::string section;
    for (const auto& [key, value] : values_) {
        const auto dot = key.find('.');
        const std::string s = key.substr(0, dot);
        if (s != section) {
            if (!section.empty()) os << '\n';
            os << '[' << s << "]\n";
            section = s;
        }
        os << key.substr(dot + 1) << " = " << value << '\n';
    }
    return os.str();
}

std::uint64_t sub_seed(std::uint64_t seed, std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : name) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t z = seed ^ h;
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace xmove::config
