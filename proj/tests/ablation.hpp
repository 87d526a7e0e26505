#pragma once

// Planted-signal ablation: day i carries a latent a_i written along one
// embedding direction and a latent b_i in one TA feature; the label is
// a_i + b_i + noise > 0. Each base model sees one latent only, so only the
// fusion model can recover the label well.

#include <cmath>
#include <random>
#include <vector>

#include "xmove/fusion.hpp"
#include "xmove/metrics.hpp"
#include "xmove/neural.hpp"
#include "xmove/svm.hpp"

namespace xmove::test {

struct AblationOptions {
    std::size_t days = 600;
    std::size_t test_days = 150;
    std::size_t dim = 16;
    std::size_t max_slices = 8;
    std::size_t ta_dims = 5;
    double label_noise = 0.1;
    double embed_noise = 0.1;
    double ta_noise = 0.05;
    int folds = 4;
    std::uint64_t seed = 2024;
    fusion::FusionSpec fusion = default_fusion();

    static fusion::FusionSpec default_fusion() {
        fusion::FusionSpec f;
        f.svm.C = 1.0;
        f.svm.kernel = svm::Rbf{1.0};
        return f;
    }
};

struct AblationData {
    std::vector<Matrix> stacks;
    Matrix ta;
    std::vector<bool> labels;
};

inline AblationData planted_days(const AblationOptions& o) {
    std::mt19937_64 rng(o.seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> rows(2, o.max_slices);
    std::vector<double> dir(o.dim);
    double norm = 0.0;
    for (auto& v : dir) {
        v = g(rng);
        norm += v * v;
    }
    for (auto& v : dir) v /= std::sqrt(norm);

    AblationData d;
    d.ta = Matrix(o.days, o.ta_dims);
    for (std::size_t i = 0; i < o.days; ++i) {
        const double a = g(rng), b = g(rng);
        d.labels.push_back(a + b + o.label_noise * g(rng) > 0.0);
        Matrix m(o.max_slices, o.dim);
        const std::size_t used = rows(rng);
        for (std::size_t r = 0; r < used; ++r)
            for (std::size_t j = 0; j < o.dim; ++j) m(r, j) = o.embed_noise * g(rng) + a * dir[j];
        d.stacks.push_back(std::move(m));
        d.ta(i, 0) = b + o.ta_noise * g(rng);
        for (std::size_t j = 1; j < o.ta_dims; ++j) d.ta(i, j) = g(rng);
    }
    return d;
}

struct AblationResult {
    double f1_ta = 0.0;
    double f1_twitter = 0.0;
    double f1_fusion = 0.0;
    std::vector<double> p_ta, p_twitter, p_fusion;  // test period
    std::vector<bool> test_labels;
    std::vector<fusion::ProbPair> train_pairs;  // out-of-fold (twitter, ta)
    std::vector<bool> train_labels;
};

inline neural::ParallelCnnSpec ablation_cnn(const AblationOptions& o) {
    neural::ParallelCnnSpec s;
    s.embedding_dim = o.dim;
    s.max_slices = o.max_slices;
    s.filter_heights = {1, 2};
    s.n_filters = 8;
    s.dense = {16};
    s.dropout = 0.2;
    return s;
}

inline neural::TrainConfig ablation_train_config(std::uint64_t seed) {
    neural::TrainConfig c;
    c.adam.lr = 3e-3;
    c.loss.kind = neural::LossKind::Bce;
    c.epochs = 40;
    c.batch_size = 16;
    c.patience = 8;
    c.seed = seed;
    return c;
}

inline AblationResult run_ablation(const AblationOptions& o) {
    const auto d = planted_days(o);
    const std::size_t n_train = o.days - o.test_days;
    std::vector<std::size_t> tr(n_train), te(o.test_days);
    for (std::size_t i = 0; i < n_train; ++i) tr[i] = i;
    for (std::size_t i = 0; i < o.test_days; ++i) te[i] = n_train + i;
    std::vector<bool> y_tr(d.labels.begin(), d.labels.begin() + static_cast<long>(n_train));
    AblationResult r;
    r.test_labels.assign(d.labels.begin() + static_cast<long>(n_train), d.labels.end());

    // TA SVM: grid search on the training period, then out-of-fold probabilities.
    const auto x_tr = d.ta.select(tr);
    const auto ys = svm::to_signed(y_tr);
    svm::Grid grid;
    grid.C = {1, 10};
    grid.gamma = {0.01, 0.1};
    const auto cv = svm::grid_search(x_tr, ys, grid, o.folds, o.seed + 1);
    const auto ta_model = svm::train_smo(x_tr, y_tr, cv.best_params);
    const auto folds = svm::stratified_folds(ys, o.folds, o.seed + 2);
    std::vector<double> ta_oof(n_train), tw_oof(n_train);

    const auto spec = ablation_cnn(o);
    auto dataset = [&](const std::vector<std::size_t>& idx) {
        neural::Dataset ds;
        ds.size = idx.size();
        for (auto i : idx) ds.labels.push_back(d.labels[i]);
        ds.input = [&d, idx](std::size_t k) { return d.stacks[idx[k]]; };
        return ds;
    };
    const auto cnn = neural::train(spec, dataset(tr), ablation_train_config(o.seed + 3));

    for (int f = 0; f < o.folds; ++f) {
        std::vector<std::size_t> in, out;
        for (std::size_t i = 0; i < n_train; ++i) (folds[i] == f ? out : in).push_back(i);
        std::vector<bool> y_in;
        for (auto i : in) y_in.push_back(d.labels[i]);
        const auto m = svm::train_smo(d.ta.select(in), y_in, cv.best_params);
        const auto c = neural::train(spec, dataset(in), ablation_train_config(o.seed + 10 + static_cast<unsigned>(f)));
        for (auto i : out) {
            ta_oof[i] = svm::predict_proba(m, d.ta.row(i));
            tw_oof[i] = neural::predict_proba_nn(c.model, d.stacks[i]);
        }
    }

    std::vector<fusion::ProbPair> pairs;
    for (std::size_t i = 0; i < n_train; ++i) pairs.push_back(fusion::build_fusion_input(tw_oof[i], ta_oof[i]));
    const auto fm = fusion::fit_fusion(pairs, y_tr, o.fusion);
    r.train_pairs = pairs;
    r.train_labels = y_tr;

    for (auto i : te) {
        r.p_ta.push_back(svm::predict_proba(ta_model, d.ta.row(i)));
        r.p_twitter.push_back(neural::predict_proba_nn(cnn.model, d.stacks[i]));
        r.p_fusion.push_back(fusion::fusion_predict_proba(fm, fusion::build_fusion_input(r.p_twitter.back(),
                                                                                         r.p_ta.back())));
    }
    auto f1 = [&](const std::vector<double>& p) {
        return positive_f1(count_outcomes(fusion::apply_threshold(p, 0.5), r.test_labels));
    };
    r.f1_ta = f1(r.p_ta);
    r.f1_twitter = f1(r.p_twitter);
    r.f1_fusion = f1(r.p_fusion);
    return r;
}

}  // namespace xmove::test
