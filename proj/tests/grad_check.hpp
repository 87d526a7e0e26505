#pragma once

// Central finite-difference oracle for full-model parameter gradients.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "xmove/neural.hpp"

namespace xmove::oracle {

struct GradCheckResult {
    double max_rel = 0.0;
    std::size_t checked = 0;
    std::size_t failures = 0;
};

inline double grad_rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-5});
}

inline GradCheckResult check_model_gradients(neural::CnnModel model, const Matrix& x, bool y,
                                             const neural::LossSpec& loss, double tol = 1e-4, double step = 1e-6) {
    std::vector<double> analytic(model.params().size(), 0.0);
    neural::sample_loss(model, x, y, loss, &analytic);
    GradCheckResult r;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double saved = model.params()[i];
        model.params()[i] = saved + step;
        const double up = neural::sample_loss(model, x, y, loss);
        model.params()[i] = saved - step;
        const double down = neural::sample_loss(model, x, y, loss);
        model.params()[i] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double e = grad_rel_err(analytic[i], numeric);
        r.max_rel = std::max(r.max_rel, e);
        r.failures += e > tol;
        ++r.checked;
    }
    return r;
}

inline Matrix random_stack(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (auto& v : m.row(i)) v = n(rng);
    return m;
}

}  // namespace xmove::oracle
