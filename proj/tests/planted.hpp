#pragma once

// Stacks whose label is the sign of a hidden scalar written along a fixed direction.

#include <cmath>
#include <random>
#include <vector>

#include "xmove/matrix.hpp"

namespace xmove::test {

struct PlantedStacks {
    std::vector<Matrix> inputs;
    std::vector<bool> labels;
    std::vector<double> direction;
};

inline PlantedStacks planted_stacks(std::size_t n, std::size_t max_slices, std::size_t dim, std::uint64_t seed,
                                    double noise = 0.5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> mag(0.5, 1.5);
    std::uniform_int_distribution<std::size_t> rows(2, max_slices);
    PlantedStacks p;
    p.direction.resize(dim);
    double norm = 0.0;
    for (auto& v : p.direction) {
        v = gauss(rng);
        norm += v * v;
    }
    for (auto& v : p.direction) v /= std::sqrt(norm);
    for (std::size_t s = 0; s < n; ++s) {
        const bool positive = s % 2 == 0;
        const double signal = (positive ? 1.0 : -1.0) * mag(rng);
        Matrix m(max_slices, dim);
        const std::size_t used = rows(rng);
        for (std::size_t i = 0; i < used; ++i)
            for (std::size_t j = 0; j < dim; ++j) m(i, j) = noise * gauss(rng) + signal * p.direction[j];
        p.inputs.push_back(std::move(m));
        p.labels.push_back(positive);
    }
    return p;
}

}  // namespace xmove::test
