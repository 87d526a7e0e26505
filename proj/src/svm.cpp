#include "xmove/svm.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xmove/error.hpp"
#include "xmove/metrics.hpp"

namespace xmove::svm {

namespace {

constexpr double kTau = 1e-12;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_finite(const Matrix& x) {
    for (double v : x.data()) {
        if (!std::isfinite(v)) throw ValidationError("SVM input contains non-finite values");
    }
}

}  // namespace

void validate(const KernelSpec& kernel) {
    std::visit(overloaded{
                   [](const Rbf& k) {
                       if (!(k.gamma > 0)) throw ConfigError("RBF gamma must be positive");
                   },
                   [](const Polynomial& k) {
                       if (!(k.gamma > 0)) throw ConfigError("polynomial gamma must be positive");
                       if (k.degree < 1) throw ConfigError("polynomial degree must be >= 1");
                   },
                   [](const Linear&) {},
               },
               kernel);
}

std::string describe(const KernelSpec& kernel) {
    std::ostringstream os;
    std::visit(overloaded{
                   [&](const Rbf& k) { os << "RBF, gamma = " << k.gamma; },
                   [&](const Polynomial& k) {
                       os << "polynomial, degree = " << k.degree << ", gamma = " << k.gamma;
                       if (k.coef0 != 0.0) os << ", coef0 = " << k.coef0;
                   },
                   [&](const Linear&) { os << "linear"; },
               },
               kernel);
    return os.str();
}

double kernel_eval(const KernelSpec& kernel, std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("kernel arguments differ in dimension");
    return std::visit(overloaded{
                          [&](const Rbf& k) {
                              double d2 = 0.0;
                              for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
                              return std::exp(-k.gamma * d2);
                          },
                          [&](const Polynomial& k) { return std::pow(k.gamma * dot(x, y) + k.coef0, k.degree); },
                          [&](const Linear&) { return dot(x, y); },
                      },
                      kernel);
}

void SvmParams::validate() const {
    if (!(C > 0)) throw ConfigError("SVM C must be positive");
    if (!(tol > 0)) throw ConfigError("SVM tolerance must be positive");
    if (max_iterations == 0) throw ConfigError("SVM iteration cap must be positive");
    svm::validate(kernel);
}

std::vector<int> to_signed(const std::vector<bool>& labels) {
    std::vector<int> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] ? 1 : -1;
    return y;
}

SmoResult train_smo_full(const Matrix& x, std::span<const int> y, const SvmParams& params) {
    params.validate();
    const std::size_t n = x.rows();
    if (y.size() != n) throw ShapeError("SVM: label count differs from sample count");
    if (n < 2) throw TrainingError("SVM training needs at least 2 samples");
    check_finite(x);
    std::size_t pos = 0;
    for (int v : y) {
        if (v != 1 && v != -1) throw ValidationError("SVM labels must be +1 or -1");
        pos += v == 1;
    }
    if (pos == 0 || pos == n) throw TrainingError("SVM training needs both classes");

    // Q_ij = y_i y_j K(x_i, x_j), kept whole: training sets here are a few
    // thousand rows at most.
    std::vector<double> q(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double v = y[i] * y[j] * kernel_eval(params.kernel, x.row(i), x.row(j));
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }

    const double C = params.C;
    std::vector<double> alpha(n, 0.0);
    std::vector<double> grad(n, -1.0);  // Q alpha - e
    auto upper = [&](std::size_t t) { return alpha[t] >= C; };
    auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

    std::size_t iter = 0;
    double gap = std::numeric_limits<double>::infinity();
    bool converged = false;
    for (; iter < params.max_iterations; ++iter) {
        // Maximal violating pair.
        double gmax = -std::numeric_limits<double>::infinity();
        double gmax2 = -std::numeric_limits<double>::infinity();
        std::size_t i = n, j = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (y[t] == 1) {
                if (!upper(t) && -grad[t] > gmax) gmax = -grad[t], i = t;
                if (!lower(t) && grad[t] > gmax2) gmax2 = grad[t], j = t;
            } else {
                if (!lower(t) && grad[t] > gmax) gmax = grad[t], i = t;
                if (!upper(t) && -grad[t] > gmax2) gmax2 = -grad[t], j = t;
            }
        }
        gap = gmax + gmax2;
        if (i == n || j == n || gap < params.tol) {
            converged = true;
            break;
        }

        const double* qi = &q[i * n];
        const double* qj = &q[j * n];
        const double old_i = alpha[i];
        const double old_j = alpha[j];
        if (y[i] != y[j]) {
            double quad = qi[i] + qj[j] + 2.0 * qi[j];
            if (quad <= 0) quad = kTau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0) {
                if (alpha[j] < 0) alpha[j] = 0, alpha[i] = diff;
            } else {
                if (alpha[i] < 0) alpha[i] = 0, alpha[j] = -diff;
            }
            if (diff > 0) {
                if (alpha[i] > C) alpha[i] = C, alpha[j] = C - diff;
            } else {
                if (alpha[j] > C) alpha[j] = C, alpha[i] = C + diff;
            }
        } else {
            double quad = qi[i] + qj[j] - 2.0 * qi[j];
            if (quad <= 0) quad = kTau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) alpha[i] = C, alpha[j] = sum - C;
            } else {
                if (alpha[j] < 0) alpha[j] = 0, alpha[i] = sum;
            }
            if (sum > C) {
                if (alpha[j] > C) alpha[j] = C, alpha[i] = sum - C;
            } else {
                if (alpha[i] < 0) alpha[i] = 0, alpha[j] = sum;
            }
        }
        const double di = alpha[i] - old_i;
        const double dj = alpha[j] - old_j;
        for (std::size_t t = 0; t < n; ++t) grad[t] += qi[t] * di + qj[t] * dj;
    }

    // Offset: mean of y_t G_t over free vectors, else the midpoint of the
    // feasible interval.
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * grad[t];
        if (upper(t)) {
            if (y[t] == -1) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (lower(t)) {
            if (y[t] == 1) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;

    SmoResult result;
    auto& model = result.model;
    model.kernel = params.kernel;
    model.dim = x.cols();
    model.bias = -rho;
    model.converged = converged;
    model.kkt_gap = gap;
    model.iterations = iter;
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] > 0.0) {
            model.support_vectors.append_row(x.row(t));
            model.dual_coefs.push_back(y[t] * alpha[t]);
        }
    }
    if (model.support_vectors.cols() == 0) model.support_vectors = Matrix(0, x.cols());
    result.alphas = std::move(alpha);
    return result;
}

SvmModel train_smo(const Matrix& x, std::span<const int> y, const SvmParams& params) {
    return train_smo_full(x, y, params).model;
}

SvmModel train_smo(const Matrix& x, const std::vector<bool>& labels, const SvmParams& params) {
    const auto y = to_signed(labels);
    return train_smo(x, y, params);
}

double decision(const SvmModel& model, std::span<const double> x) {
    if (x.size() != model.dim) throw ShapeError("SVM input dimension mismatch");
    double s = model.bias;
    for (std::size_t i = 0; i < model.dual_coefs.size(); ++i) {
        s += model.dual_coefs[i] * kernel_eval(model.kernel, model.support_vectors.row(i), x);
    }
    return s;
}

std::vector<double> decision(const SvmModel& model, const Matrix& x) {
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = decision(model, x.row(i));
    return out;
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double predict_proba(const SvmModel& model, std::span<const double> x) { return sigmoid(decision(model, x)); }

double max_kkt_residual(const SvmModel& model, const Matrix& x, std::span<const int> y,
                        std::span<const double> alphas, double C) {
    double worst = 0.0;
    for (std::size_t t = 0; t < x.rows(); ++t) {
        const double margin = y[t] * decision(model, x.row(t));
        double v = 0.0;
        if (alphas[t] <= 0.0) v = std::max(0.0, 1.0 - margin);
        else if (alphas[t] >= C) v = std::max(0.0, margin - 1.0);
        else v = std::abs(margin - 1.0);
        worst = std::max(worst, v);
    }
    return worst;
}

std::vector<int> stratified_folds(std::span<const int> y, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("cross-validation needs at least 2 folds");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < y.size(); ++i) (y[i] == 1 ? pos : neg).push_back(i);
    if (pos.size() < static_cast<std::size_t>(k) || neg.size() < static_cast<std::size_t>(k)) {
        throw TrainingError("cannot build " + std::to_string(k) + " stratified folds: minority class has " +
                            std::to_string(std::min(pos.size(), neg.size())) + " samples");
    }
    std::mt19937_64 rng(seed);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    std::vector<int> fold(y.size());
    std::size_t slot = 0;
    for (const auto* group : {&pos, &neg}) {
        for (auto idx : *group) fold[idx] = static_cast<int>(slot++ % static_cast<std::size_t>(k));
    }
    return fold;
}

CvReport grid_search(const Matrix& x, std::span<const int> y, const Grid& grid, int k, std::uint64_t seed,
                     const SvmParams& base) {
    if (grid.C.empty() || grid.gamma.empty()) throw ConfigError("grid search needs a non-empty grid");
    auto cs = grid.C;
    auto gammas = grid.gamma;
    std::sort(cs.begin(), cs.end());
    std::sort(gammas.begin(), gammas.end());

    const auto fold = stratified_folds(y, k, seed);
    struct Split {
        Matrix x_train, x_val;
        std::vector<int> y_train;
        std::vector<bool> y_val;
    };
    std::vector<Split> splits(static_cast<std::size_t>(k));
    for (int f = 0; f < k; ++f) {
        std::vector<std::size_t> tr, va;
        for (std::size_t i = 0; i < y.size(); ++i) (fold[i] == f ? va : tr).push_back(i);
        auto& s = splits[static_cast<std::size_t>(f)];
        s.x_train = x.select(tr);
        s.x_val = x.select(va);
        for (auto i : tr) s.y_train.push_back(y[i]);
        for (auto i : va) s.y_val.push_back(y[i] == 1);
    }

    CvReport report;
    report.seed = seed;
    report.folds = k;
    for (double c : cs) {
        for (double g : gammas) {
            SvmParams params = base;
            params.C = c;
            if (grid.family == KernelFamily::Rbf) params.kernel = Rbf{g};
            else params.kernel = Polynomial{grid.degree, g, grid.coef0};
            GridPoint point{c, g, 0.0, {}};
            for (const auto& s : splits) {
                const auto model = train_smo(s.x_train, s.y_train, params);
                std::vector<bool> pred(s.x_val.rows());
                for (std::size_t i = 0; i < s.x_val.rows(); ++i) pred[i] = decision(model, s.x_val.row(i)) > 0.0;
                point.fold_f1.push_back(positive_f1(count_outcomes(pred, s.y_val)));
            }
            point.mean_f1 = std::accumulate(point.fold_f1.begin(), point.fold_f1.end(), 0.0) /
                            static_cast<double>(point.fold_f1.size());
            report.points.push_back(std::move(point));
        }
    }
    for (std::size_t p = 1; p < report.points.size(); ++p) {
        if (report.points[p].mean_f1 > report.points[report.best].mean_f1) report.best = p;
    }
    report.best_params = base;
    report.best_params.C = report.points[report.best].C;
    const double g = report.points[report.best].gamma;
    if (grid.family == KernelFamily::Rbf) report.best_params.kernel = Rbf{g};
    else report.best_params.kernel = Polynomial{grid.degree, g, grid.coef0};
    return report;
}

namespace {

nlohmann::json kernel_to_json(const KernelSpec& kernel) {
    return std::visit(overloaded{
                          [](const Rbf& k) { return nlohmann::json{{"type", "rbf"}, {"gamma", k.gamma}}; },
                          [](const Polynomial& k) {
                              return nlohmann::json{
                                  {"type", "polynomial"}, {"degree", k.degree}, {"gamma", k.gamma}, {"coef0", k.coef0}};
                          },
                          [](const Linear&) { return nlohmann::json{{"type", "linear"}}; },
                      },
                      kernel);
}

KernelSpec kernel_from_json(const nlohmann::json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "rbf") return Rbf{j.at("gamma").get<double>()};
    if (type == "polynomial") {
        return Polynomial{j.at("degree").get<int>(), j.at("gamma").get<double>(), j.at("coef0").get<double>()};
    }
    if (type == "linear") return Linear{};
    throw FormatError("unknown kernel type '" + type + "'");
}

}  // namespace

nlohmann::json to_json(const SvmModel& model) {
    nlohmann::json j;
    j["format"] = "xmove-svm";
    j["version"] = 1;
    j["kernel"] = kernel_to_json(model.kernel);
    j["dim"] = model.dim;
    j["bias"] = model.bias;
    j["dual_coefs"] = model.dual_coefs;
    j["support_vectors"] = model.support_vectors.data();
    j["converged"] = model.converged;
    j["kkt_gap"] = model.kkt_gap;
    j["iterations"] = model.iterations;
    return j;
}

void save_json(std::ostream& out, const SvmModel& model) { out << to_json(model).dump(1) << '\n'; }

SvmModel svm_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "xmove-svm") throw FormatError("not an SVM model file");
        if (j.at("version") != 1) throw FormatError("unsupported SVM model version");
        SvmModel m;
        m.kernel = kernel_from_json(j.at("kernel"));
        m.dim = j.at("dim").get<std::size_t>();
        m.bias = j.at("bias").get<double>();
        m.dual_coefs = j.at("dual_coefs").get<std::vector<double>>();
        const auto flat = j.at("support_vectors").get<std::vector<double>>();
        if (flat.size() != m.dual_coefs.size() * m.dim) throw FormatError("support vector block has wrong size");
        m.support_vectors = Matrix(m.dual_coefs.size(), m.dim);
        for (std::size_t i = 0; i < m.dual_coefs.size(); ++i) {
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(i * m.dim), m.dim, m.support_vectors.row(i).begin());
        }
        m.converged = j.value("converged", true);
        m.kkt_gap = j.value("kkt_gap", 0.0);
        m.iterations = j.value("iterations", std::size_t{0});
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed SVM model: ") + e.what());
    }
}

SvmModel load_json(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("SVM model is not valid JSON: ") + e.what());
    }
    return svm_from_json(j);
}

}  // namespace xmove::svm
