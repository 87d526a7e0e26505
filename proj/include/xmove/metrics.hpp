#pragma once

#include <cstddef>
#include <vector>

#include "xmove/error.hpp"

namespace xmove {

struct BinaryCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline BinaryCounts count_outcomes(const std::vector<bool>& predicted, const std::vector<bool>& actual) {
    if (predicted.size() != actual.size()) throw ShapeError("prediction/label length mismatch");
    BinaryCounts c;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] && actual[i]) ++c.tp;
        else if (predicted[i]) ++c.fp;
        else if (actual[i]) ++c.fn;
        else ++c.tn;
    }
    return c;
}

// Positive-class F1; 0 when undefined.
inline double positive_f1(const BinaryCounts& c) {
    const auto denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

}  // namespace xmove
