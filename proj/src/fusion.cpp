#include "xmove/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/Dense>

#include "xmove/error.hpp"

namespace xmove::fusion {

ProbPair build_fusion_input(double p_twitter, double p_ta) {
    const auto check = [](double p, const char* which) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ValidationError(std::string(which) + " probability " + std::to_string(p) + " is outside [0, 1]");
        }
    };
    check(p_twitter, "twitter");
    check(p_ta, "TA");
    return {p_twitter, p_ta};
}

Matrix to_matrix(const std::vector<ProbPair>& pairs) {
    Matrix m(pairs.size(), 2);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        m(i, 0) = pairs[i].p_twitter;
        m(i, 1) = pairs[i].p_ta;
    }
    return m;
}

namespace {

void check_training_set(const std::vector<ProbPair>& pairs, const std::vector<bool>& labels) {
    if (pairs.size() != labels.size()) throw ShapeError("fusion inputs and labels differ in length");
    for (const auto& p : pairs) build_fusion_input(p.p_twitter, p.p_ta);
    const auto pos = std::count(labels.begin(), labels.end(), true);
    if (pos == 0 || static_cast<std::size_t>(pos) == labels.size()) {
        throw TrainingError("fusion training data contains a single class");
    }
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double logistic_objective(const Eigen::Vector3d& theta, const std::vector<ProbPair>& pairs,
                          const std::vector<bool>& labels, double l2) {
    double f = 0.5 * l2 * (theta[0] * theta[0] + theta[1] * theta[1]);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double z = theta[0] * pairs[i].p_twitter + theta[1] * pairs[i].p_ta + theta[2];
        f += softplus(z) - (labels[i] ? z : 0.0);
    }
    return f;
}

}  // namespace

LogisticModel fit_logistic(const std::vector<ProbPair>& pairs, const std::vector<bool>& labels,
                           const LogisticParams& params) {
    check_training_set(pairs, labels);
    if (!(params.l2 >= 0.0)) throw ConfigError("logistic l2 must be >= 0");
    Eigen::Vector3d theta = Eigen::Vector3d::Zero();
    LogisticModel model;
    double f = logistic_objective(theta, pairs, labels, params.l2);
    for (std::size_t it = 0; it < params.max_iter; ++it) {
        Eigen::Vector3d g(params.l2 * theta[0], params.l2 * theta[1], 0.0);
        Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
        h(0, 0) = h(1, 1) = params.l2;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const Eigen::Vector3d x(pairs[i].p_twitter, pairs[i].p_ta, 1.0);
            const double p = svm::sigmoid(theta.dot(x));
            g += (p - (labels[i] ? 1.0 : 0.0)) * x;
            h += p * (1.0 - p) * x * x.transpose();
        }
        model.iterations = it;
        if (g.lpNorm<Eigen::Infinity>() < params.tol) {
            model.converged = true;
            break;
        }
        h.diagonal().array() += 1e-12;
        const Eigen::Vector3d step = h.ldlt().solve(g);
        // Full Newton steps that tie within round-off are accepted; otherwise backtrack.
        double t = 1.0;
        Eigen::Vector3d candidate = theta - step;
        double f_new = logistic_objective(candidate, pairs, labels, params.l2);
        bool accepted = f_new <= f + 1e-12 * (1.0 + std::abs(f));
        for (int k = 0; k < 50 && !accepted; ++k) {
            t *= 0.5;
            candidate = theta - t * step;
            f_new = logistic_objective(candidate, pairs, labels, params.l2);
            accepted = f_new <= f - 1e-4 * t * g.dot(step);
        }
        if (!accepted) break;
        theta = candidate;
        f = f_new;
        model.iterations = it + 1;
    }
    model.w[0] = theta[0];
    model.w[1] = theta[1];
    model.b = theta[2];
    return model;
}

double logistic_proba(const LogisticModel& model, const ProbPair& pair) {
    return svm::sigmoid(model.w[0] * pair.p_twitter + model.w[1] * pair.p_ta + model.b);
}

FusionModel fit_fusion(const std::vector<ProbPair>& pairs, const std::vector<bool>& labels, const FusionSpec& spec) {
    if (spec.kind == FusionKind::Logistic) return fit_logistic(pairs, labels, spec.logistic);
    check_training_set(pairs, labels);
    return svm::train_smo(to_matrix(pairs), labels, spec.svm);
}

double fusion_predict_proba(const FusionModel& model, const ProbPair& pair) {
    if (const auto* lr = std::get_if<LogisticModel>(&model)) return logistic_proba(*lr, pair);
    const double x[2] = {pair.p_twitter, pair.p_ta};
    return svm::predict_proba(std::get<svm::SvmModel>(model), x);
}

std::vector<double> fusion_predict_proba(const FusionModel& model, const std::vector<ProbPair>& pairs) {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(fusion_predict_proba(model, p));
    return out;
}

std::string describe(const FusionModel& model) {
    if (std::holds_alternative<LogisticModel>(model)) return "Logistic regression";
    const auto& m = std::get<svm::SvmModel>(model);
    return "SVM " + svm::describe(m.kernel);
}

nlohmann::json to_json(const FusionModel& model) {
    if (const auto* lr = std::get_if<LogisticModel>(&model)) {
        return {{"format", "xmove-fusion"}, {"version", 1},           {"kind", "logistic"},
                {"w", {lr->w[0], lr->w[1]}}, {"b", lr->b},            {"iterations", lr->iterations},
                {"converged", lr->converged}};
    }
    return {{"format", "xmove-fusion"}, {"version", 1}, {"kind", "svm"},
            {"svm", svm::to_json(std::get<svm::SvmModel>(model))}};
}

FusionModel fusion_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "xmove-fusion" || j.at("version") != 1) throw FormatError("not a fusion model");
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "svm") {
            auto m = svm::svm_from_json(j.at("svm"));
            if (m.dim != 2) throw FormatError("fusion SVM must have 2 input features");
            return m;
        }
        if (kind != "logistic") throw FormatError("unknown fusion kind '" + kind + "'");
        LogisticModel lr;
        const auto w = j.at("w").get<std::vector<double>>();
        if (w.size() != 2) throw FormatError("logistic fusion needs two weights");
        lr.w[0] = w[0];
        lr.w[1] = w[1];
        lr.b = j.at("b").get<double>();
        lr.iterations = j.value("iterations", std::size_t{0});
        lr.converged = j.value("converged", true);
        return lr;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed fusion model: ") + e.what());
    }
}

std::vector<bool> apply_threshold(const std::vector<double>& probs, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("threshold must lie in (0, 1)");
    std::vector<bool> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] > tau;
    return out;
}

ConfusionMatrix confusion(const std::vector<bool>& preds, const std::vector<bool>& labels) {
    return count_outcomes(preds, labels);
}

namespace {

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
    ClassMetrics m;
    m.support = tp + fn;
    if (tp + fp == 0) m.precision_degenerate = true;
    else m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn == 0) m.recall_degenerate = true;
    else m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (m.precision + m.recall == 0.0) m.f1_degenerate = true;
    else m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

}  // namespace

ClassificationReport report(const ConfusionMatrix& cm) {
    ClassificationReport r;
    r.total = cm.tp + cm.fp + cm.fn + cm.tn;
    if (r.total == 0) throw ValidationError("cannot report on zero samples");
    r.positive = class_metrics(cm.tp, cm.fp, cm.fn);
    r.negative = class_metrics(cm.tn, cm.fn, cm.fp);
    const double n = static_cast<double>(r.total);
    r.weighted_f1 = (r.positive.f1 * static_cast<double>(r.positive.support) +
                     r.negative.f1 * static_cast<double>(r.negative.support)) /
                    n;
    r.accuracy = static_cast<double>(cm.tp + cm.tn) / n;
    return r;
}

ThresholdSweep sweep_thresholds(const std::vector<double>& probs, const std::vector<bool>& labels,
                                const std::vector<double>& taus) {
    if (probs.size() != labels.size()) throw ShapeError("probabilities and labels differ in length");
    if (!std::is_sorted(taus.begin(), taus.end())) throw ValidationError("thresholds must be sorted ascending");
    ThresholdSweep sweep;
    for (double tau : taus) {
        ThresholdResult r;
        r.tau = tau;
        const auto preds = apply_threshold(probs, tau);
        r.cm = confusion(preds, labels);
        r.report = report(r.cm);
        r.positives = r.cm.tp + r.cm.fp;
        if (!sweep.results.empty() && r.positives > sweep.results.back().positives) {
            throw std::logic_error("positive count increased with the threshold");
        }
        sweep.results.push_back(r);
    }
    return sweep;
}

// ---- emitters

nlohmann::json to_json(const ConfusionMatrix& cm) {
    return {{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}};
}

namespace {

nlohmann::json class_json(const ClassMetrics& m) {
    nlohmann::json j = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
    nlohmann::json flags = nlohmann::json::array();
    if (m.precision_degenerate) flags.push_back("precision");
    if (m.recall_degenerate) flags.push_back("recall");
    if (m.f1_degenerate) flags.push_back("f1");
    j["degenerate"] = flags;
    return j;
}

std::string cell(double v, bool degenerate) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%s", v, degenerate ? "*" : "");
    return buf;
}

std::string pad(const std::string& s, std::size_t width, bool left = false) {
    if (s.size() >= width) return s;
    return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

}  // namespace

nlohmann::json to_json(const ClassificationReport& r) {
    return {{"positive", class_json(r.positive)},
            {"negative", class_json(r.negative)},
            {"weighted_f1", r.weighted_f1},
            {"accuracy", r.accuracy},
            {"total", r.total}};
}

nlohmann::json report_table_json(const std::string& title, const std::vector<ReportRow>& rows) {
    nlohmann::json out = {{"title", title}, {"rows", nlohmann::json::array()}};
    for (const auto& row : rows) {
        auto j = to_json(row.report);
        j["model"] = row.model;
        j["parameters"] = row.parameters;
        out["rows"].push_back(j);
    }
    return out;
}

std::string report_table_text(const std::string& title, const std::vector<ReportRow>& rows) {
    std::size_t name_w = 6;
    for (const auto& r : rows) name_w = std::max(name_w, r.model.size());
    std::ostringstream os;
    os << title << '\n';
    os << pad("Models", name_w, true) << " | Precision   | Recall      | F1-score           | Accuracy | Parameters\n";
    os << pad("", name_w, true) << " |    T     F  |    T     F  |    T     F  Weight |          |\n";
    for (const auto& r : rows) {
        const auto& p = r.report.positive;
        const auto& n = r.report.negative;
        char acc[32];
        std::snprintf(acc, sizeof acc, "%.2f", 100.0 * r.report.accuracy);
        os << pad(r.model, name_w, true) << " | " << pad(cell(p.precision, p.precision_degenerate), 5) << ' '
           << pad(cell(n.precision, n.precision_degenerate), 5) << " | " << pad(cell(p.recall, p.recall_degenerate), 5)
           << ' ' << pad(cell(n.recall, n.recall_degenerate), 5) << " | " << pad(cell(p.f1, p.f1_degenerate), 5) << ' '
           << pad(cell(n.f1, n.f1_degenerate), 5) << ' ' << pad(cell(r.report.weighted_f1, false), 6) << " | "
           << pad(acc, 8) << " | " << r.parameters << '\n';
    }
    os << "(* = undefined ratio reported as 0)\n";
    return os.str();
}

nlohmann::json sweep_json(const ThresholdSweep& sweep) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : sweep.results) {
        out.push_back({{"tau", r.tau}, {"positives", r.positives}, {"confusion", to_json(r.cm)},
                       {"report", to_json(r.report)}});
    }
    return out;
}

std::string sweep_text(const ThresholdSweep& sweep) {
    std::ostringstream os;
    os << "   tau | positives |   tp   fp   fn   tn | P(T)  R(T)  F1(T) | Accuracy\n";
    for (const auto& r : sweep.results) {
        char line[160];
        const auto& p = r.report.positive;
        std::snprintf(line, sizeof line, "%6.3f | %9zu | %4zu %4zu %4zu %4zu | %s %s %s | %8.2f\n", r.tau, r.positives,
                      r.cm.tp, r.cm.fp, r.cm.fn, r.cm.tn, pad(cell(p.precision, p.precision_degenerate), 5).c_str(),
                      pad(cell(p.recall, p.recall_degenerate), 5).c_str(), pad(cell(p.f1, p.f1_degenerate), 5).c_str(),
                      100.0 * r.report.accuracy);
        os << line;
    }
    return os.str();
}

}  // namespace xmove::fusion
