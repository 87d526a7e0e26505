#include "xmove/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "xmove/error.hpp"

namespace xmove::synth {

SynthData make_synthetic(const SynthOptions& o) {
    if (o.days < 3) throw ConfigError("synthetic data needs at least 3 days");
    if (o.dim == 0 || o.max_slices == 0) throw ConfigError("embedding dim and max_slices must be positive");
    std::mt19937_64 rng(o.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    SynthData d;
    double close = 8000.0, eth = 200.0, gold = 1300.0;
    for (std::size_t i = 0; i < o.days; ++i) {
        const Date day = o.start + static_cast<int>(i);
        const double open = close;
        close = open * std::exp(o.daily_vol * gauss(rng));
        const double high = std::max(open, close) * (1.0 + 0.05 * unit(rng));
        const double low = std::min(open, close) * (1.0 - 0.05 * unit(rng));
        d.btc.push_back({day, open, high, low, close, close, 1e9 * (0.5 + unit(rng))});
        eth *= std::exp(1.2 * o.daily_vol * gauss(rng));
        d.eth.points.push_back({day, eth});
        gold *= std::exp(0.2 * o.daily_vol * gauss(rng));
        const unsigned weekday = std::chrono::weekday{day.days()}.c_encoding();
        if (weekday != 0 && weekday != 6) d.gold.points.push_back({day, gold});
    }
    if (d.gold.points.empty() || d.gold.points.front().date != o.start) {
        d.gold.points.insert(d.gold.points.begin(), {o.start, 1300.0});
    }

    d.direction.resize(o.dim);
    double norm = 0.0;
    for (auto& v : d.direction) {
        v = gauss(rng);
        norm += v * v;
    }
    for (auto& v : d.direction) v /= std::sqrt(norm);

    const auto moves = features::make_labels(d.btc, o.label);  // moves.dates[k] == btc[k + 1].date
    std::uniform_int_distribution<std::size_t> rows(1, o.max_slices);
    for (std::size_t i = 0; i < o.days; ++i) {
        double s = 0.0;
        if (i + 1 < o.days) s = (moves.values[i] ? 1.0 : -1.0) * o.signal * (0.5 + unit(rng));
        embeddings::EmbeddingStack st;
        st.date = d.btc[i].date;
        st.dim = o.dim;
        st.n_slices = rows(rng);
        st.values.resize(st.n_slices * o.dim);
        for (std::size_t r = 0; r < st.n_slices; ++r)
            for (std::size_t j = 0; j < o.dim; ++j)
                st.values[r * o.dim + j] = static_cast<float>(o.noise * gauss(rng) + s * d.direction[j]);
        d.stacks.push_back(std::move(st));
    }
    return d;
}

SynthPaths write_synthetic(const SynthData& data, const std::string& dir, const SynthOptions& options) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    SynthPaths p{(fs::path(dir) / "btc.csv").string(), (fs::path(dir) / "eth.csv").string(),
                 (fs::path(dir) / "gold.csv").string(), (fs::path(dir) / "embeddings.bin").string()};
    auto open = [](const std::string& path) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DependencyError("cannot write '" + path + "'");
        return out;
    };
    {
        auto out = open(p.btc);
        market_data::write_candles(out, data.btc);
    }
    {
        auto out = open(p.eth);
        market_data::write_asset_series(out, data.eth);
    }
    {
        auto out = open(p.gold);
        market_data::write_asset_series(out, data.gold);
    }
    embeddings::write_embedding_file(p.embeddings, data.stacks, static_cast<std::uint32_t>(options.dim),
                                     static_cast<std::uint32_t>(options.max_slices));
    return p;
}

}  // namespace xmove::synth
