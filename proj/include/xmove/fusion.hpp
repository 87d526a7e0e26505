#pragma once

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "xmove/matrix.hpp"
#include "xmove/metrics.hpp"
#include "xmove/svm.hpp"

namespace xmove::fusion {

struct ProbPair {
    double p_twitter = 0.0;
    double p_ta = 0.0;
};

ProbPair build_fusion_input(double p_twitter, double p_ta);
Matrix to_matrix(const std::vector<ProbPair>& pairs);

struct LogisticModel {
    double w[2] = {0.0, 0.0};
    double b = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

struct LogisticParams {
    double l2 = 1e-3;  // penalty on w only; the intercept is unpenalized
    std::size_t max_iter = 100;
    double tol = 1e-10;  // gradient infinity norm at convergence
};

LogisticModel fit_logistic(const std::vector<ProbPair>& pairs, const std::vector<bool>& labels,
                           const LogisticParams& params = {});
double logistic_proba(const LogisticModel& model, const ProbPair& pair);

using FusionModel = std::variant<svm::SvmModel, LogisticModel>;

enum class FusionKind { Svm, Logistic };

struct FusionSpec {
    FusionKind kind = FusionKind::Svm;
    svm::SvmParams svm;
    LogisticParams logistic;
};

FusionModel fit_fusion(const std::vector<ProbPair>& pairs, const std::vector<bool>& labels, const FusionSpec& spec);
double fusion_predict_proba(const FusionModel& model, const ProbPair& pair);
std::vector<double> fusion_predict_proba(const FusionModel& model, const std::vector<ProbPair>& pairs);
std::string describe(const FusionModel& model);

nlohmann::json to_json(const FusionModel& model);
FusionModel fusion_from_json(const nlohmann::json& j);

// prob > tau is positive.
std::vector<bool> apply_threshold(const std::vector<double>& probs, double tau);

using ConfusionMatrix = BinaryCounts;
ConfusionMatrix confusion(const std::vector<bool>& preds, const std::vector<bool>& labels);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
    bool precision_degenerate = false;
    bool recall_degenerate = false;
    bool f1_degenerate = false;
};

struct ClassificationReport {
    ClassMetrics positive;
    ClassMetrics negative;
    double weighted_f1 = 0.0;
    double accuracy = 0.0;
    std::size_t total = 0;
};

ClassificationReport report(const ConfusionMatrix& cm);

struct ThresholdResult {
    double tau = 0.5;
    ConfusionMatrix cm;
    ClassificationReport report;
    std::size_t positives = 0;
};

struct ThresholdSweep {
    std::vector<ThresholdResult> results;
};

inline const std::vector<double> kDefaultThresholds = {0.5, 0.95, 0.99};

ThresholdSweep sweep_thresholds(const std::vector<double>& probs, const std::vector<bool>& labels,
                                const std::vector<double>& taus = kDefaultThresholds);

// One row of a Precision/Recall/F1/Accuracy/Parameters results table.
struct ReportRow {
    std::string model;
    std::string parameters;
    ClassificationReport report;
};

nlohmann::json to_json(const ClassificationReport& r);
nlohmann::json to_json(const ConfusionMatrix& cm);
nlohmann::json report_table_json(const std::string& title, const std::vector<ReportRow>& rows);
std::string report_table_text(const std::string& title, const std::vector<ReportRow>& rows);
nlohmann::json sweep_json(const ThresholdSweep& sweep);
std::string sweep_text(const ThresholdSweep& sweep);

}  // namespace xmove::fusion
