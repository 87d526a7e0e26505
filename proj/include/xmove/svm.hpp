#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "xmove/matrix.hpp"

namespace xmove::svm {

struct Rbf {
    double gamma = 0.1;
};

struct Polynomial {
    int degree = 3;
    double gamma = 1.0;
    double coef0 = 0.0;
};

struct Linear {};

using KernelSpec = std::variant<Rbf, Polynomial, Linear>;

void validate(const KernelSpec& kernel);
std::string describe(const KernelSpec& kernel);

// RBF: exp(-gamma |x - y|^2); Polynomial: (gamma <x, y> + coef0)^degree;
// Linear: <x, y>.
double kernel_eval(const KernelSpec& kernel, std::span<const double> x, std::span<const double> y);

struct SvmParams {
    double C = 1.0;
    KernelSpec kernel = Rbf{};
    double tol = 1e-3;              // maximal KKT violation accepted at termination
    std::size_t max_iterations = 200000;

    void validate() const;
};

struct SvmModel {
    KernelSpec kernel;
    std::size_t dim = 0;
    Matrix support_vectors;
    std::vector<double> dual_coefs;  // y_i * alpha_i
    double bias = 0.0;

    // Training diagnostics.
    bool converged = true;
    double kkt_gap = 0.0;
    std::size_t iterations = 0;
};

// Labels are +1 / -1. Throws TrainingError when only one class is present
// and ValidationError on non-finite features.
SvmModel train_smo(const Matrix& x, std::span<const int> y, const SvmParams& params);
SvmModel train_smo(const Matrix& x, const std::vector<bool>& labels, const SvmParams& params);

double decision(const SvmModel& model, std::span<const double> x);
std::vector<double> decision(const SvmModel& model, const Matrix& x);

double sigmoid(double z);

// Logistic of the decision value.
double predict_proba(const SvmModel& model, std::span<const double> x);

// Largest per-sample violation of the KKT conditions of the trained model,
// expressed in margin units (y f(x) against 1). Needs the training set's
// dual variables, so it takes the full alpha vector over the training rows.
double max_kkt_residual(const SvmModel& model, const Matrix& x, std::span<const int> y,
                        std::span<const double> alphas, double C);

// Training-set dual variables (0 for non-support vectors) of the last fit.
struct SmoResult {
    SvmModel model;
    std::vector<double> alphas;
};
SmoResult train_smo_full(const Matrix& x, std::span<const int> y, const SvmParams& params);

enum class KernelFamily { Rbf, Polynomial };

struct Grid {
    std::vector<double> C = {1, 10, 30, 50, 100, 500, 1000};
    std::vector<double> gamma = {0.1, 0.5, 1, 10, 50};
    KernelFamily family = KernelFamily::Rbf;
    int degree = 3;
    double coef0 = 0.0;
};

struct GridPoint {
    double C = 0.0;
    double gamma = 0.0;
    double mean_f1 = 0.0;
    std::vector<double> fold_f1;
};

struct CvReport {
    std::vector<GridPoint> points;  // ascending C, then ascending gamma
    std::size_t best = 0;
    SvmParams best_params;
    std::uint64_t seed = 0;
    int folds = 0;
};

// Stratified, seeded fold assignment: fold index per sample.
std::vector<int> stratified_folds(std::span<const int> y, int k, std::uint64_t seed);

// Mean positive-class F1 over k stratified folds for every (C, gamma) pair;
// the best mean wins, ties go to the smaller C and then the smaller gamma.
CvReport grid_search(const Matrix& x, std::span<const int> y, const Grid& grid, int k, std::uint64_t seed,
                     const SvmParams& base = {});

std::vector<int> to_signed(const std::vector<bool>& labels);

nlohmann::json to_json(const SvmModel& model);
SvmModel svm_from_json(const nlohmann::json& j);
void save_json(std::ostream& out, const SvmModel& model);
SvmModel load_json(std::istream& in);

}  // namespace xmove::svm
