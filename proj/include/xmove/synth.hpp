#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmove/embeddings.hpp"
#include "xmove/features.hpp"
#include "xmove/market_data.hpp"

namespace xmove::synth {

// Toy market plus per-day embedding stacks. Each stack carries the outcome of
// the following day's move along a hidden unit direction, scaled by `signal`
// (0 gives pure noise).
struct SynthOptions {
    std::size_t days = 300;
    Date start = Date(2019, 1, 1);
    std::size_t dim = 16;
    std::size_t max_slices = 8;
    double signal = 1.0;
    double noise = 0.5;
    double daily_vol = 0.03;
    features::LabelSpec label;
    std::uint64_t seed = 1;
};

struct SynthData {
    market_data::CandleSeries btc;
    market_data::AssetSeries eth{"ETH", {}};
    market_data::AssetSeries gold{"GOLD", {}};
    std::vector<embeddings::EmbeddingStack> stacks;
    std::vector<double> direction;
};

SynthData make_synthetic(const SynthOptions& options);

struct SynthPaths {
    std::string btc, eth, gold, embeddings;
};

// Writes btc.csv, eth.csv, gold.csv and embeddings.bin into `dir`.
SynthPaths write_synthetic(const SynthData& data, const std::string& dir, const SynthOptions& options);

}  // namespace xmove::synth
