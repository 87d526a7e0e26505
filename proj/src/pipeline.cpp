#include "xmove/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "xmove/backtest.hpp"
#include "xmove/csv.hpp"
#include "xmove/embeddings.hpp"
#include "xmove/error.hpp"
#include "xmove/fusion.hpp"
#include "xmove/indicators.hpp"
#include "xmove/manifest.hpp"
#include "xmove/market_data.hpp"
#include "xmove/neural.hpp"
#include "xmove/svm.hpp"

namespace xmove::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- file helpers

std::string require_input(const Context& ctx, const std::string& key) {
    const std::string& path = ctx.cfg.str(key);
    if (path.empty()) throw DependencyError("config key '" + key + "' is not set");
    if (!fs::is_regular_file(path)) throw DependencyError(key + ": file '" + path + "' not found");
    return path;
}

fs::path artifact(const Context& ctx, const std::string& name) { return ctx.out_dir / name; }

fs::path require_artifact(const Context& ctx, const std::string& name, const std::string& producer) {
    const auto p = artifact(ctx, name);
    if (!fs::is_regular_file(p)) {
        throw DependencyError("missing artifact '" + p.string() + "'; run `" + producer + "` first");
    }
    return p;
}

void write_file(const Context& ctx, StageResult& res, const std::string& name, const std::string& content) {
    fs::create_directories(ctx.out_dir);
    const auto p = artifact(ctx, name);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DependencyError("cannot write '" + p.string() + "'");
    out << content;
    if (!out) throw DependencyError("write failed for '" + p.string() + "'");
    res.artifacts.push_back(name);
}

template <class Fn>
void write_stream(const Context& ctx, StageResult& res, const std::string& name, Fn&& fn) {
    std::ostringstream os;
    fn(os);
    write_file(ctx, res, name, os.str());
}

void write_json(const Context& ctx, StageResult& res, const std::string& name, const json& j) {
    write_file(ctx, res, name, j.dump(2) + "\n");
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw DependencyError("cannot open '" + p.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("'" + p.string() + "' is not valid JSON: " + e.what());
    }
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string fmt(double v) { return csv::format_double(v); }

// ---- configuration views

indicators::IndicatorConfig indicator_config(const config::Config& c) {
    indicators::IndicatorConfig ic;
    ic.sma_fast = static_cast<int>(c.integer("indicators.sma_fast"));
    ic.sma_slow = static_cast<int>(c.integer("indicators.sma_slow"));
    ic.ema_alpha = c.num("indicators.ema_alpha");
    ic.ema_short_span = static_cast<int>(c.integer("indicators.ema_short_span"));
    ic.ema_long_span = static_cast<int>(c.integer("indicators.ema_long_span"));
    ic.std_window = static_cast<int>(c.integer("indicators.std_window"));
    ic.bollinger_k = c.num("indicators.bollinger_k");
    ic.ma_feature_margin = c.num("indicators.ma_feature_margin");
    ic.warmup_rows = static_cast<int>(c.integer("indicators.warmup_rows"));
    ic.validate();
    return ic;
}

features::LabelSource label_source(const config::Config& c) {
    const auto& s = c.str("task.label_source");
    if (s == "high_low") return features::LabelSource::HighLow;
    if (s == "close") return features::LabelSource::CloseOnly;
    throw ConfigError("task.label_source must be 'high_low' or 'close', got '" + s + "'");
}

struct Split {
    Date test_start, test_end, train_end;
};

Split split_config(const config::Config& c) {
    Split s{c.date("split.test_start"), c.date("split.test_end"), train_cutoff(c)};
    if (s.test_end < s.test_start) throw ConfigError("split.test_end precedes split.test_start");
    return s;
}

svm::SvmParams ta_base_params(const config::Config& c) {
    svm::SvmParams p;
    p.tol = c.num("ta.tol");
    p.max_iterations = c.count("ta.max_iterations");
    return p;
}

svm::Grid ta_grid(const config::Config& c) {
    svm::Grid g;
    g.C = c.nums("ta.grid_c");
    g.gamma = c.nums("ta.grid_gamma");
    const auto& k = c.str("ta.kernel");
    if (k == "rbf") g.family = svm::KernelFamily::Rbf;
    else if (k == "poly") g.family = svm::KernelFamily::Polynomial;
    else throw ConfigError("ta.kernel must be 'rbf' or 'poly', got '" + k + "'");
    g.degree = static_cast<int>(c.integer("ta.degree"));
    g.coef0 = c.num("ta.coef0");
    if (g.C.empty() || g.gamma.empty()) throw ConfigError("ta.grid_c and ta.grid_gamma must not be empty");
    return g;
}

neural::ModelSpec twitter_spec(const config::Config& c, TrainTarget target) {
    if (target == TrainTarget::TwitterParallel) {
        neural::ParallelCnnSpec s;
        s.embedding_dim = c.count("twitter.embedding_dim");
        s.max_slices = c.count("twitter.max_slices");
        s.filter_heights = c.counts("twitter.filter_heights");
        s.n_filters = c.count("twitter.n_filters");
        s.dense = c.counts("twitter.parallel_dense");
        s.dropout = c.num("twitter.dropout");
        neural::validate(s);
        return s;
    }
    neural::SequentialCnnSpec s;
    s.embedding_dim = c.count("twitter.embedding_dim");
    s.max_slices = c.count("twitter.max_slices");
    s.channels = c.counts("twitter.channels");
    s.pool = c.count("twitter.pool");
    s.dense = c.counts("twitter.sequential_dense");
    s.dropout = c.num("twitter.dropout");
    neural::validate(s);
    return s;
}

neural::TrainConfig twitter_train_config(const config::Config& c, std::uint64_t seed) {
    neural::TrainConfig t;
    t.adam.lr = c.num("twitter.lr");
    t.adam.weight_decay = c.num("twitter.weight_decay");
    const auto& loss = c.str("twitter.loss");
    if (loss == "focal") t.loss.kind = neural::LossKind::Focal;
    else if (loss == "bce") t.loss.kind = neural::LossKind::Bce;
    else throw ConfigError("twitter.loss must be 'focal' or 'bce', got '" + loss + "'");
    t.loss.focal.alpha = c.num("twitter.focal_alpha");
    t.loss.focal.gamma = c.num("twitter.focal_gamma");
    t.epochs = c.count("twitter.epochs");
    t.batch_size = c.count("twitter.batch_size");
    t.patience = c.count("twitter.patience");
    t.validation_fraction = c.num("twitter.validation_fraction");
    t.seed = seed;
    t.validate();
    return t;
}

bool out_of_fold(const config::Config& c) {
    const auto& m = c.str("fusion.probs");
    if (m == "out_of_fold") return true;
    if (m == "in_sample") return false;
    throw ConfigError("fusion.probs must be 'out_of_fold' or 'in_sample', got '" + m + "'");
}

TrainTarget twitter_target(std::string_view arch) {
    if (arch == "parallel") return TrainTarget::TwitterParallel;
    if (arch == "sequential") return TrainTarget::TwitterSequential;
    throw ConfigError("CNN architecture must be 'parallel' or 'sequential', got '" + std::string(arch) + "'");
}

// ---- market data and labels

struct Market {
    market_data::CandleSeries candles;
    market_data::AlignedPanel panel;
};

Market load_market(const Context& ctx, StageResult& res) {
    const auto btc_path = require_input(ctx, "data.btc");
    const auto eth_path = require_input(ctx, "data.eth");
    const auto gold_path = require_input(ctx, "data.gold");
    res.inputs.insert(res.inputs.end(), {btc_path, eth_path, gold_path});
    Market m;
    m.candles = market_data::load_candles(btc_path);
    const auto eth = market_data::load_asset_series(eth_path, "ETH");
    const auto gold = market_data::load_asset_series(gold_path, "GOLD");
    m.panel = market_data::align_panel(m.candles, eth, gold);
    return m;
}

market_data::CandleSeries load_candles(const Context& ctx, StageResult& res) {
    const auto path = require_input(ctx, "data.btc");
    res.inputs.push_back(path);
    return market_data::load_candles(path);
}

features::FeatureFrame read_feature_frame(const fs::path& p) {
    const auto table = csv::read_file(p.string());
    if (table.header.size() != features::kFeatureCount + 1 || table.header[0] != "date") {
        throw FormatError("'" + p.string() + "' does not have the feature frame header");
    }
    for (std::size_t j = 0; j < features::kFeatureCount; ++j) {
        if (table.header[j + 1] != features::kFeatureNames[j]) {
            throw FormatError("'" + p.string() + "': unexpected column '" + table.header[j + 1] + "'");
        }
    }
    features::FeatureFrame f;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto line = table.line_numbers[r];
        if (row.size() != table.header.size()) throw ParseError("wrong column count in " + p.string(), line);
        f.dates.push_back(Date::parse(row[0]));
        features::FeatureVector v{};
        for (std::size_t j = 0; j < features::kFeatureCount; ++j) v[j] = csv::parse_double(row[j + 1], line);
        f.rows.push_back(v);
    }
    return f;
}

features::LabelSet read_labels(const fs::path& p) {
    const auto table = csv::read_file(p.string());
    const auto dc = table.column("date"), lc = table.column("label");
    if (dc == std::string::npos || lc == std::string::npos) {
        throw FormatError("'" + p.string() + "' needs date and label columns");
    }
    features::LabelSet s;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() <= std::max(dc, lc)) throw ParseError("short row in " + p.string(), table.line_numbers[r]);
        s.dates.push_back(Date::parse(row[dc]));
        if (row[lc] != "0" && row[lc] != "1") throw ParseError("label must be 0 or 1", table.line_numbers[r]);
        s.values.push_back(row[lc] == "1");
    }
    return s;
}

// A label keyed by the day the forecast is made, with the day it resolves.
struct DecisionLabel {
    Date decision;
    Date move;
    bool value = false;
};

std::vector<DecisionLabel> decision_labels(const Context& ctx, const market_data::CandleSeries& candles) {
    const auto task = ctx.cfg.str("task.name");
    task_spec(task);
    const auto moves = read_labels(require_artifact(ctx, "labels_" + task + ".csv", "features"));
    const auto dec = features::to_decision_dates(moves, candles);
    std::vector<DecisionLabel> out;
    for (std::size_t i = 0; i < moves.size(); ++i) out.push_back({dec.dates[i], moves.dates[i], moves.values[i]});
    return out;
}

void guard_training(const std::vector<DecisionLabel>& rows, const Split& split) {
    for (const auto& r : rows) {
        if (!(r.move < split.test_start)) {
            throw LeakageError("training row " + r.decision.iso() + " resolves on " + r.move.iso() +
                               ", inside the test period starting " + split.test_start.iso());
        }
    }
}

bool in_train(const DecisionLabel& l, const Split& s) { return !(s.train_end < l.move); }
bool in_test(const DecisionLabel& l, const Split& s) { return !(l.move < s.test_start) && !(s.test_end < l.move); }

// ---- dated probabilities

struct DatedProb {
    Date date;
    double p = 0.0;
};

std::map<Date, double> to_map(const std::vector<DatedProb>& v) {
    std::map<Date, double> m;
    for (const auto& d : v) m.emplace(d.date, d.p);
    return m;
}

std::string probs_csv(const std::vector<DecisionLabel>& rows, const std::vector<double>& p) {
    std::ostringstream os;
    os << "date,move_date,label,prob\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        os << rows[i].decision.iso() << ',' << rows[i].move.iso() << ',' << (rows[i].value ? 1 : 0) << ','
           << fmt(p[i]) << '\n';
    }
    return os.str();
}

struct TrainProbs {
    std::vector<Date> dates;
    std::vector<bool> labels;
    std::vector<double> in_sample;
    std::vector<std::optional<double>> oof;
};

std::string train_probs_csv(const TrainProbs& t) {
    std::ostringstream os;
    os << "date,label,p_in_sample,p_oof\n";
    for (std::size_t i = 0; i < t.dates.size(); ++i) {
        os << t.dates[i].iso() << ',' << (t.labels[i] ? 1 : 0) << ',' << fmt(t.in_sample[i]) << ','
           << (t.oof[i] ? fmt(*t.oof[i]) : std::string()) << '\n';
    }
    return os.str();
}

TrainProbs read_train_probs(const fs::path& p) {
    const auto table = csv::read_file(p.string());
    const std::vector<std::string> want{"date", "label", "p_in_sample", "p_oof"};
    if (table.header != want) throw FormatError("'" + p.string() + "' has an unexpected header");
    TrainProbs t;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        auto row = table.rows[r];
        const auto line = table.line_numbers[r];
        if (row.size() == 3) row.emplace_back();
        if (row.size() != 4) throw ParseError("wrong column count in " + p.string(), line);
        t.dates.push_back(Date::parse(row[0]));
        t.labels.push_back(row[1] == "1");
        t.in_sample.push_back(csv::parse_double(row[2], line));
        t.oof.push_back(row[3].empty() ? std::nullopt : std::optional<double>(csv::parse_double(row[3], line)));
    }
    return t;
}

// ---- TA model

struct TaRows {
    std::vector<DecisionLabel> labels;
    Matrix x;
};

// Windows whose last day is the decision date, joined with labels.
TaRows ta_rows(const features::FeatureFrame& frame, const std::vector<DecisionLabel>& labels, std::size_t window,
               const std::function<bool(const DecisionLabel&)>& keep) {
    std::map<Date, const DecisionLabel*> by_date;
    for (const auto& l : labels) by_date.emplace(l.decision, &l);
    TaRows out;
    for (const auto& w : features::build_windows(frame, static_cast<int>(window))) {
        const auto it = by_date.find(w.date);
        if (it == by_date.end() || !keep(*it->second)) continue;
        out.labels.push_back(*it->second);
        out.x.append_row(w.x);
    }
    return out;
}

std::vector<bool> values_of(const std::vector<DecisionLabel>& rows) {
    std::vector<bool> v;
    for (const auto& r : rows) v.push_back(r.value);
    return v;
}

struct TaModelFile {
    svm::SvmModel model;
    std::size_t window = 5;
};

TaModelFile load_ta_model(const Context& ctx) {
    const auto j = read_json(require_artifact(ctx, "ta_model.json", "train ta"));
    try {
        if (j.at("task") != ctx.cfg.str("task.name")) {
            throw ValidationError("ta_model.json was trained for task '" + j.at("task").get<std::string>() + "'");
        }
        TaModelFile f{svm::svm_from_json(j.at("svm")), j.at("window").get<std::size_t>()};
        if (f.model.dim != f.window * features::kFeatureCount) {
            throw ShapeError("ta_model.json expects " + std::to_string(f.model.dim) + " inputs, window gives " +
                             std::to_string(f.window * features::kFeatureCount));
        }
        return f;
    } catch (const json::exception& e) {
        throw FormatError(std::string("ta_model.json: ") + e.what());
    }
}

// ---- twitter model

embeddings::EmbeddingFile load_embeddings(const Context& ctx, StageResult& res, std::size_t dim) {
    const auto path = require_input(ctx, "data.embeddings");
    res.inputs.push_back(path);
    return embeddings::read_embedding_file(path, static_cast<std::uint32_t>(dim));
}

std::size_t spec_dim(const neural::ModelSpec& s) {
    return std::visit([](const auto& v) { return v.embedding_dim; }, s);
}
std::size_t spec_slices(const neural::ModelSpec& s) {
    return std::visit([](const auto& v) { return v.max_slices; }, s);
}

std::string checkpoint_name(TrainTarget t) { return target_name(t) + ".xmnn"; }

// ---- predictions over every available decision date

std::vector<DatedProb> predict_ta(const Context& ctx) {
    const auto m = load_ta_model(ctx);
    const auto frame = read_feature_frame(require_artifact(ctx, "features.csv", "features"));
    std::vector<DatedProb> out;
    for (const auto& w : features::build_windows(frame, static_cast<int>(m.window))) {
        out.push_back({w.date, svm::predict_proba(m.model, w.x)});
    }
    return out;
}

std::vector<DatedProb> predict_twitter(const Context& ctx, TrainTarget t, StageResult& res) {
    const auto model = neural::load_checkpoint_file(require_artifact(ctx, checkpoint_name(t), "train " +
                                                                      target_name(t)).string());
    const bool want_parallel = t == TrainTarget::TwitterParallel;
    if (std::holds_alternative<neural::ParallelCnnSpec>(model.spec()) != want_parallel) {
        throw FormatError(checkpoint_name(t) + " holds a different architecture");
    }
    const auto file = load_embeddings(ctx, res, spec_dim(model.spec()));
    const auto slices = spec_slices(model.spec());
    std::vector<DatedProb> out;
    for (const auto& st : file.stacks) {
        if (st.n_slices > slices) {
            throw ShapeError("embedding stack on " + st.date.iso() + " has " + std::to_string(st.n_slices) +
                             " slices; the model accepts " + std::to_string(slices));
        }
        out.push_back({st.date, neural::predict_proba_nn(model, embeddings::pad_stack(st, slices))});
    }
    return out;
}

struct FusionFile {
    fusion::FusionModel model;
    TrainTarget twitter = TrainTarget::TwitterParallel;
    std::string probs;
};

FusionFile load_fusion(const Context& ctx) {
    const auto j = read_json(require_artifact(ctx, "fusion_model.json", "train fusion"));
    try {
        return {fusion::fusion_from_json(j.at("model")), twitter_target(j.at("twitter_arch").get<std::string>()),
                j.at("probs").get<std::string>()};
    } catch (const json::exception& e) {
        throw FormatError(std::string("fusion_model.json: ") + e.what());
    }
}

std::vector<DatedProb> predict_fusion(const Context& ctx, StageResult& res) {
    const auto f = load_fusion(ctx);
    const auto ta = to_map(predict_ta(ctx));
    std::vector<DatedProb> out;
    for (const auto& tw : predict_twitter(ctx, f.twitter, res)) {
        const auto it = ta.find(tw.date);
        if (it == ta.end()) continue;
        out.push_back({tw.date, fusion::fusion_predict_proba(f.model, fusion::build_fusion_input(tw.p, it->second))});
    }
    return out;
}

std::vector<DatedProb> predict_model(const Context& ctx, const std::string& name, StageResult& res) {
    if (name == "ta") return predict_ta(ctx);
    if (name == "twitter_parallel") return predict_twitter(ctx, TrainTarget::TwitterParallel, res);
    if (name == "twitter_sequential") return predict_twitter(ctx, TrainTarget::TwitterSequential, res);
    if (name == "fusion") return predict_fusion(ctx, res);
    throw ConfigError("unknown model '" + name + "' (expected ta, twitter_parallel, twitter_sequential, fusion)");
}

std::string display_name(const std::string& model) {
    if (model == "ta") return "TA SVM";
    if (model == "twitter_parallel") return "Twitter parallel CNN";
    if (model == "twitter_sequential") return "Twitter sequential CNN";
    if (model == "fusion") return "Fusion";
    return model;
}

std::string parameter_text(const Context& ctx, const std::string& model) {
    if (model == "ta") {
        const auto m = load_ta_model(ctx);
        return svm::describe(m.model.kernel) + ", window " + std::to_string(m.window);
    }
    if (model == "fusion") return fusion::describe(load_fusion(ctx).model);
    const auto t = model == "twitter_parallel" ? TrainTarget::TwitterParallel : TrainTarget::TwitterSequential;
    const auto cm = neural::load_checkpoint_file(artifact(ctx, checkpoint_name(t)).string());
    return std::to_string(cm.params().size()) + " params, " + ctx.cfg.str("twitter.loss") + " loss";
}

struct Scored {
    std::vector<DecisionLabel> rows;
    std::vector<double> probs;
    std::size_t dropped = 0;  // test labels without a prediction
};

Scored score_test(const Context& ctx, const std::string& model, StageResult& res) {
    const auto split = split_config(ctx.cfg);
    const auto candles = load_candles(ctx, res);
    const auto preds = to_map(predict_model(ctx, model, res));
    Scored s;
    for (const auto& l : decision_labels(ctx, candles)) {
        if (!in_test(l, split)) continue;
        const auto it = preds.find(l.decision);
        if (it == preds.end()) {
            ++s.dropped;
            continue;
        }
        s.rows.push_back(l);
        s.probs.push_back(it->second);
    }
    if (s.rows.empty()) throw InsufficientDataError("no test-period predictions for model '" + model + "'");
    return s;
}

// ---- training

svm::SvmModel fit_ta(const Matrix& x, const std::vector<bool>& y, const svm::SvmParams& p) {
    return svm::train_smo(x, y, p);
}

StageResult train_ta(const Context& ctx) {
    StageResult res;
    const auto split = split_config(ctx.cfg);
    const auto candles = load_candles(ctx, res);
    const auto frame = read_feature_frame(require_artifact(ctx, "features.csv", "features"));
    const auto labels = decision_labels(ctx, candles);
    const std::size_t window = ctx.cfg.count("ta.window");
    const auto rows = ta_rows(frame, labels, window, [&](const DecisionLabel& l) { return in_train(l, split); });
    guard_training(rows.labels, split);
    if (rows.labels.empty()) throw InsufficientDataError("no TA training rows before " + split.train_end.iso());
    const auto y = values_of(rows.labels);
    const auto ys = svm::to_signed(y);
    const int folds = static_cast<int>(ctx.cfg.count("ta.folds"));

    const auto cv = svm::grid_search(rows.x, ys, ta_grid(ctx.cfg), folds, config::sub_seed(ctx.seed, "ta.cv"),
                                     ta_base_params(ctx.cfg));
    const auto model = fit_ta(rows.x, y, cv.best_params);

    TrainProbs tp;
    for (std::size_t i = 0; i < rows.labels.size(); ++i) {
        tp.dates.push_back(rows.labels[i].decision);
        tp.labels.push_back(y[i]);
        tp.in_sample.push_back(svm::predict_proba(model, rows.x.row(i)));
    }
    tp.oof.assign(rows.labels.size(), std::nullopt);
    const int oof_folds = static_cast<int>(ctx.cfg.count("fusion.folds"));
    const auto assign = svm::stratified_folds(ys, oof_folds, config::sub_seed(ctx.seed, "ta.oof"));
    for (int f = 0; f < oof_folds; ++f) {
        std::vector<std::size_t> tr, te;
        for (std::size_t i = 0; i < assign.size(); ++i) (assign[i] == f ? te : tr).push_back(i);
        std::vector<bool> ytr;
        for (auto i : tr) ytr.push_back(y[i]);
        const auto m = fit_ta(rows.x.select(tr), ytr, cv.best_params);
        for (auto i : te) tp.oof[i] = svm::predict_proba(m, rows.x.row(i));
    }

    json cvj;
    cvj["folds"] = cv.folds;
    cvj["seed"] = cv.seed;
    cvj["best"] = {{"C", cv.points[cv.best].C}, {"gamma", cv.points[cv.best].gamma},
                   {"mean_f1", cv.points[cv.best].mean_f1}};
    for (const auto& p : cv.points) {
        cvj["grid"].push_back({{"C", p.C}, {"gamma", p.gamma}, {"mean_f1", p.mean_f1}, {"fold_f1", p.fold_f1}});
    }
    cvj["train_rows"] = rows.labels.size();
    cvj["train_positives"] = std::count(y.begin(), y.end(), true);
    cvj["train_end"] = split.train_end.iso();
    cvj["converged"] = model.converged;
    cvj["kkt_gap"] = model.kkt_gap;

    write_json(ctx, res, "ta_model.json",
               {{"task", ctx.cfg.str("task.name")}, {"window", window}, {"svm", svm::to_json(model)}});
    write_json(ctx, res, "ta_cv.json", cvj);
    write_file(ctx, res, "ta_train_probs.csv", train_probs_csv(tp));
    char line[160];
    std::snprintf(line, sizeof line, "TA SVM: %zu training rows, best C=%g gamma=%g, CV F1 %.4f", rows.labels.size(),
                  cv.points[cv.best].C, cv.points[cv.best].gamma, cv.points[cv.best].mean_f1);
    res.log.emplace_back(line);
    return res;
}

json history_json(const neural::TrainResult& r) {
    json h = json::array();
    for (const auto& e : r.history) {
        h.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_f1", e.val_f1}});
    }
    return h;
}

StageResult train_twitter(const Context& ctx, TrainTarget target) {
    StageResult res;
    const auto split = split_config(ctx.cfg);
    const auto spec = twitter_spec(ctx.cfg, target);
    const auto candles = load_candles(ctx, res);
    const auto labels = decision_labels(ctx, candles);
    const auto file = load_embeddings(ctx, res, spec_dim(spec));

    std::vector<DecisionLabel> train_rows;
    for (const auto& l : labels) {
        if (in_train(l, split)) train_rows.push_back(l);
    }
    guard_training(train_rows, split);
    features::LabelSet keyed;
    std::map<Date, const DecisionLabel*> by_date;
    for (const auto& l : train_rows) {
        keyed.dates.push_back(l.decision);
        keyed.values.push_back(l.value);
        by_date.emplace(l.decision, &l);
    }
    const auto aligned = embeddings::align_with_labels(file.stacks, keyed, spec_slices(spec));
    std::vector<DecisionLabel> rows;
    for (const auto& d : aligned.dates()) rows.push_back(*by_date.at(d));
    guard_training(rows, split);

    auto make_dataset = [&](const std::vector<std::size_t>& idx) {
        neural::Dataset d;
        d.size = idx.size();
        for (auto i : idx) d.labels.push_back(aligned.labels[i]);
        d.input = [&aligned, idx](std::size_t k) { return aligned.padded(idx[k]); };
        return d;
    };
    std::vector<std::size_t> all(aligned.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

    const auto name = target_name(target);
    const auto tcfg = twitter_train_config(ctx.cfg, config::sub_seed(ctx.seed, name));
    const auto result = neural::train(spec, make_dataset(all), tcfg);

    TrainProbs tp;
    for (std::size_t i = 0; i < aligned.size(); ++i) {
        tp.dates.push_back(rows[i].decision);
        tp.labels.push_back(aligned.labels[i]);
        tp.in_sample.push_back(neural::predict_proba_nn(result.model, aligned.padded(i)));
    }
    tp.oof.assign(aligned.size(), std::nullopt);
    if (out_of_fold(ctx.cfg)) {
        const int k = static_cast<int>(ctx.cfg.count("fusion.folds"));
        const auto assign =
            svm::stratified_folds(svm::to_signed(aligned.labels), k, config::sub_seed(ctx.seed, name + ".oof"));
        for (int f = 0; f < k; ++f) {
            std::vector<std::size_t> tr, te;
            for (std::size_t i = 0; i < assign.size(); ++i) (assign[i] == f ? te : tr).push_back(i);
            auto fcfg = tcfg;
            fcfg.seed = config::sub_seed(ctx.seed, name + ".oof." + std::to_string(f));
            const auto fm = neural::train(spec, make_dataset(tr), fcfg);
            for (auto i : te) tp.oof[i] = neural::predict_proba_nn(fm.model, aligned.padded(i));
        }
    }

    fs::create_directories(ctx.out_dir);
    neural::save_checkpoint_file(artifact(ctx, checkpoint_name(target)).string(), result.model);
    res.artifacts.push_back(checkpoint_name(target));
    write_json(ctx, res, name + "_train.json",
               {{"task", ctx.cfg.str("task.name")},
                {"spec", neural::to_json(spec)},
                {"parameters", result.model.params().size()},
                {"best_epoch", result.best_epoch},
                {"first_batch_loss", result.first_batch_loss},
                {"train_rows", result.train_indices.size()},
                {"validation_rows", result.val_indices.size()},
                {"alignment",
                 {{"joined", aligned.report.joined},
                  {"stacks_without_label", aligned.report.stacks_without_label},
                  {"labels_without_stack", aligned.report.labels_without_stack}}},
                {"history", history_json(result)}});
    write_file(ctx, res, name + "_train_probs.csv", train_probs_csv(tp));
    res.log.push_back(display_name(name) + ": " + std::to_string(aligned.size()) + " training days, " +
                      std::to_string(result.model.params().size()) + " parameters, best epoch " +
                      std::to_string(result.best_epoch));
    return res;
}

StageResult train_fusion(const Context& ctx) {
    StageResult res;
    train_cutoff(ctx.cfg);
    const auto arch = twitter_target(ctx.cfg.str("fusion.twitter_arch"));
    const bool oof = out_of_fold(ctx.cfg);
    const auto ta = read_train_probs(require_artifact(ctx, "ta_train_probs.csv", "train ta"));
    const auto tw = read_train_probs(require_artifact(ctx, target_name(arch) + "_train_probs.csv",
                                                      "train " + target_name(arch)));
    require_artifact(ctx, "ta_model.json", "train ta");
    require_artifact(ctx, checkpoint_name(arch), "train " + target_name(arch));

    std::map<Date, std::pair<double, bool>> ta_map;
    for (std::size_t i = 0; i < ta.dates.size(); ++i) {
        if (oof && !ta.oof[i]) throw DependencyError("ta_train_probs.csv lacks out-of-fold probabilities");
        ta_map.emplace(ta.dates[i], std::pair{oof ? *ta.oof[i] : ta.in_sample[i], ta.labels[i]});
    }
    std::vector<fusion::ProbPair> pairs;
    std::vector<bool> y;
    for (std::size_t i = 0; i < tw.dates.size(); ++i) {
        const auto it = ta_map.find(tw.dates[i]);
        if (it == ta_map.end()) continue;
        if (oof && !tw.oof[i]) {
            throw DependencyError(target_name(arch) +
                                  "_train_probs.csv lacks out-of-fold probabilities; retrain it with "
                                  "fusion.probs = out_of_fold");
        }
        if (it->second.second != tw.labels[i]) throw AlignmentError("base models disagree on the label of " +
                                                                    tw.dates[i].iso());
        pairs.push_back(fusion::build_fusion_input(oof ? *tw.oof[i] : tw.in_sample[i], it->second.first));
        y.push_back(tw.labels[i]);
    }
    if (pairs.empty()) throw InsufficientDataError("no training days shared by the TA and Twitter models");

    fusion::FusionSpec spec;
    const auto& kind = ctx.cfg.str("fusion.model");
    if (kind == "svm") spec.kind = fusion::FusionKind::Svm;
    else if (kind == "logistic") spec.kind = fusion::FusionKind::Logistic;
    else throw ConfigError("fusion.model must be 'svm' or 'logistic', got '" + kind + "'");
    spec.svm.C = ctx.cfg.num("fusion.svm_c");
    spec.svm.kernel = svm::Rbf{ctx.cfg.num("fusion.svm_gamma")};
    spec.logistic.l2 = ctx.cfg.num("fusion.logistic_l2");
    const auto model = fusion::fit_fusion(pairs, y, spec);

    const auto train_probs = fusion::fusion_predict_proba(model, pairs);
    const auto rep = fusion::report(fusion::confusion(fusion::apply_threshold(train_probs, 0.5), y));
    write_json(ctx, res, "fusion_model.json",
               {{"task", ctx.cfg.str("task.name")},
                {"twitter_arch", ctx.cfg.str("fusion.twitter_arch")},
                {"probs", ctx.cfg.str("fusion.probs")},
                {"model", fusion::to_json(model)}});
    write_json(ctx, res, "fusion_train.json",
               {{"rows", pairs.size()}, {"model", fusion::describe(model)}, {"train_report", fusion::to_json(rep)}});
    res.log.push_back("Fusion (" + fusion::describe(model) + "): " + std::to_string(pairs.size()) +
                      " training days, " + ctx.cfg.str("fusion.probs") + " base probabilities");
    return res;
}

std::string distribution_text(const std::vector<std::pair<std::string, features::LabelSplit>>& splits) {
    std::ostringstream os;
    os << "Class distribution\n";
    os << "Task     | Train T | Train F | Train %T | Test T | Test F | Test %T\n";
    for (const auto& [task, s] : splits) {
        const auto tr = features::class_distribution(s.train);
        const auto te = features::class_distribution(s.test);
        char line[160];
        std::snprintf(line, sizeof line, "%-8s | %7zu | %7zu | %8.2f | %6zu | %6zu | %7.2f\n", task.c_str(),
                      tr.positives, tr.negatives, 100.0 * tr.true_ratio, te.positives, te.negatives,
                      100.0 * te.true_ratio);
        os << line;
    }
    return os.str();
}

StageResult write_labels(const Context& ctx, const market_data::CandleSeries& candles, StageResult res) {
    const auto test_start = ctx.cfg.date("split.test_start");
    const auto test_end = ctx.cfg.date("split.test_end");
    const auto source = label_source(ctx.cfg);
    std::vector<std::pair<std::string, features::LabelSplit>> splits;
    json dist = json::object();
    for (auto task : kTasks) {
        const std::string name(task);
        const auto labels = features::make_labels(candles, task_spec(task, source));
        write_stream(ctx, res, "labels_" + name + ".csv", [&](std::ostream& os) { features::write_labels(os, labels); });
        auto s = features::split_labels(labels, test_start, test_end);
        const auto tr = features::class_distribution(s.train);
        const auto te = features::class_distribution(s.test);
        dist[name] = {{"train", {{"true", tr.positives}, {"false", tr.negatives}, {"true_ratio", tr.true_ratio}}},
                      {"test", {{"true", te.positives}, {"false", te.negatives}, {"true_ratio", te.true_ratio}}}};
        splits.emplace_back(name, std::move(s));
    }
    write_json(ctx, res, "class_distribution.json", dist);
    write_file(ctx, res, "class_distribution.txt", distribution_text(splits));
    return res;
}

std::vector<std::string> text_sections(const Context& ctx) {
    std::vector<std::string> names{"class_distribution.txt", "correlations.txt", "evaluation.txt",
                                   "threshold_sweep.txt", "backtest.txt"};
    std::vector<std::string> present;
    for (const auto& n : names) {
        if (fs::is_regular_file(artifact(ctx, n))) present.push_back(n);
    }
    return present;
}

}  // namespace

// ---- public API

Context make_context(config::Config cfg) {
    Context ctx;
    ctx.seed = cfg.u64("run.seed");
    ctx.out_dir = cfg.str("run.output_dir");
    if (ctx.out_dir.empty()) throw ConfigError("run.output_dir must not be empty");
    ctx.cfg = std::move(cfg);
    return ctx;
}

features::LabelSpec task_spec(std::string_view task, features::LabelSource source) {
    features::LabelSpec s;
    s.source = source;
    if (task == "up5") s = {features::Direction::Up, 0.05, source};
    else if (task == "up2") s = {features::Direction::Up, 0.02, source};
    else if (task == "down5") s = {features::Direction::Down, 0.05, source};
    else if (task == "down2") s = {features::Direction::Down, 0.02, source};
    else throw ConfigError("task.name must be one of up5, up2, down5, down2; got '" + std::string(task) + "'");
    return s;
}

Date train_cutoff(const config::Config& cfg) {
    const Date test_start = cfg.date("split.test_start");
    if (cfg.str("split.train_end").empty()) return test_start - 1;
    const Date end = cfg.date("split.train_end");
    if (!(end < test_start)) {
        throw LeakageError("split.train_end " + end.iso() + " reaches into the test period starting " +
                           test_start.iso());
    }
    return end;
}

TrainTarget parse_train_target(std::string_view text, const config::Config& cfg) {
    if (text == "ta") return TrainTarget::Ta;
    if (text == "fusion") return TrainTarget::Fusion;
    if (text == "twitter") return twitter_target(cfg.str("twitter.arch"));
    for (std::string_view prefix : {"twitter:", "twitter-", "twitter_"}) {
        if (text.starts_with(prefix)) return twitter_target(text.substr(prefix.size()));
    }
    throw ConfigError("train target must be ta, twitter[:parallel|:sequential] or fusion; got '" +
                      std::string(text) + "'");
}

std::string target_name(TrainTarget t) {
    switch (t) {
        case TrainTarget::Ta: return "ta";
        case TrainTarget::TwitterParallel: return "twitter_parallel";
        case TrainTarget::TwitterSequential: return "twitter_sequential";
        case TrainTarget::Fusion: return "fusion";
    }
    return "?";
}

StageResult cmd_ingest(const Context& ctx) {
    StageResult res;
    const auto m = load_market(ctx, res);
    write_stream(ctx, res, "panel.csv", [&](std::ostream& os) { market_data::write_panel(os, m.panel); });
    const auto& rows = m.panel.rows;
    write_json(ctx, res, "ingest_summary.json",
               {{"btc_rows", m.candles.size()},
                {"panel_rows", rows.size()},
                {"dropped_rows", m.candles.size() - rows.size()},
                {"first_date", rows.front().candle.date.iso()},
                {"last_date", rows.back().candle.date.iso()}});
    res.log.push_back("panel: " + std::to_string(rows.size()) + " aligned days " + rows.front().candle.date.iso() +
                      " .. " + rows.back().candle.date.iso());
    return res;
}

StageResult cmd_features(const Context& ctx) {
    StageResult res;
    const auto m = load_market(ctx, res);
    const auto frame = indicators::compute_indicator_frame(m.panel, indicator_config(ctx.cfg));
    const auto feats = features::normalize(frame);
    write_stream(ctx, res, "features.csv", [&](std::ostream& os) { features::write_feature_frame(os, feats); });
    const auto corr = features::pearson_correlations(feats);
    write_stream(ctx, res, "correlations.csv", [&](std::ostream& os) { features::write_correlations(os, corr); });
    std::ostringstream ct;
    ct << "Pearson correlation with next-day close\n";
    for (const auto& c : corr) {
        char line[96];
        if (c.r) std::snprintf(line, sizeof line, "%-12s %8.4f\n", std::string(c.name).c_str(), *c.r);
        else std::snprintf(line, sizeof line, "%-12s %8s\n", std::string(c.name).c_str(), "undef");
        ct << line;
    }
    write_file(ctx, res, "correlations.txt", ct.str());
    res = write_labels(ctx, m.candles, std::move(res));
    res.log.push_back("features: " + std::to_string(feats.size()) + " normalized rows, 4 label files");
    return res;
}

StageResult cmd_label(const Context& ctx) {
    StageResult res;
    const auto candles = load_candles(ctx, res);
    res = write_labels(ctx, candles, std::move(res));
    res.log.push_back("labels: 4 tasks over " + std::to_string(candles.size()) + " candles");
    return res;
}

StageResult cmd_train(const Context& ctx, TrainTarget target) {
    train_cutoff(ctx.cfg);
    switch (target) {
        case TrainTarget::Ta: return train_ta(ctx);
        case TrainTarget::Fusion: return train_fusion(ctx);
        default: return train_twitter(ctx, target);
    }
}

StageResult cmd_evaluate(const Context& ctx) {
    StageResult res;
    const auto taus = ctx.cfg.nums("evaluate.taus");
    const auto models = ctx.cfg.strs("evaluate.models");
    if (models.empty()) throw ConfigError("evaluate.models is empty");
    std::vector<std::vector<fusion::ReportRow>> tables(taus.size());
    json out = json::object();
    for (const auto& name : models) {
        const auto s = score_test(ctx, name, res);
        const auto labels = values_of(s.rows);
        const auto sweep = fusion::sweep_thresholds(s.probs, labels, taus);
        const auto params = parameter_text(ctx, name);
        for (std::size_t k = 0; k < taus.size(); ++k) {
            tables[k].push_back({display_name(name), params, sweep.results[k].report});
        }
        out[name] = {{"test_rows", s.rows.size()}, {"dropped_without_prediction", s.dropped},
                     {"parameters", params}, {"thresholds", fusion::sweep_json(sweep)}};
        write_file(ctx, res, name + "_test_probs.csv", probs_csv(s.rows, s.probs));
    }
    std::ostringstream text;
    for (std::size_t k = 0; k < taus.size(); ++k) {
        char title[96];
        std::snprintf(title, sizeof title, "Task %s, threshold %g", ctx.cfg.str("task.name").c_str(), taus[k]);
        text << fusion::report_table_text(title, tables[k]) << '\n';
    }
    write_json(ctx, res, "evaluation.json", out);
    write_file(ctx, res, "evaluation.txt", text.str());
    res.log.push_back("evaluated " + std::to_string(models.size()) + " model(s) at " + std::to_string(taus.size()) +
                      " threshold(s)");
    return res;
}

StageResult cmd_sweep_threshold(const Context& ctx) {
    StageResult res;
    const auto taus = ctx.cfg.nums("evaluate.taus");
    json out = json::object();
    std::ostringstream text;
    for (const auto& name : ctx.cfg.strs("evaluate.models")) {
        const auto s = score_test(ctx, name, res);
        const auto sweep = fusion::sweep_thresholds(s.probs, values_of(s.rows), taus);
        out[name] = fusion::sweep_json(sweep);
        text << display_name(name) << '\n' << fusion::sweep_text(sweep) << '\n';
    }
    write_json(ctx, res, "threshold_sweep.json", out);
    write_file(ctx, res, "threshold_sweep.txt", text.str());
    res.log.push_back("threshold sweep written");
    return res;
}

StageResult cmd_backtest(const Context& ctx) {
    StageResult res;
    const auto split = split_config(ctx.cfg);
    const auto candles = load_candles(ctx, res);
    const double default_tau = ctx.cfg.num("backtest.tau");
    backtest::SignalOptions opts{ctx.cfg.flag("backtest.extend_hold")};

    std::vector<backtest::StrategySpec> specs;
    std::map<std::string, std::vector<DatedProb>> cache;
    for (const auto& item : ctx.cfg.strs("backtest.strategies")) {
        if (item == "buy_hold") {
            specs.push_back({"Buy and Hold", backtest::BuyHold{}});
            continue;
        }
        if (item == "ma_cross") {
            backtest::MaCross ma{ctx.cfg.count("backtest.ma_fast"), ctx.cfg.count("backtest.ma_slow")};
            specs.push_back({std::to_string(ma.fast) + "-D and " + std::to_string(ma.slow) + "-D MA Cross", ma});
            continue;
        }
        const auto at = item.find('@');
        const std::string model = item.substr(0, at);
        double tau = default_tau;
        if (at != std::string::npos) tau = csv::parse_double(item.substr(at + 1), 0);
        if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("strategy '" + item + "': threshold must lie in (0, 1)");
        if (!cache.count(model)) cache[model] = predict_model(ctx, model, res);
        backtest::ModelSignal sig;
        sig.tau = tau;
        sig.options = opts;
        for (const auto& p : cache[model]) {
            if (p.date < split.test_start || split.test_end < p.date) continue;
            sig.dates.push_back(p.date);
            sig.probs.push_back(p.p);
        }
        char label[96];
        std::snprintf(label, sizeof label, "%s (%g)", display_name(model).c_str(), tau);
        specs.push_back({label, std::move(sig)});
    }
    if (specs.empty()) throw ConfigError("backtest.strategies is empty");

    auto day = [&](const char* key) { return split.test_start + static_cast<int>(ctx.cfg.integer(key)) - 1; };
    std::vector<backtest::Period> periods{
        {"full", split.test_start, split.test_end},
        {"bull", day("backtest.bull_start_day"), std::min(split.test_end, day("backtest.bull_end_day"))},
        {"bear", day("backtest.bear_start_day"), std::min(split.test_end, day("backtest.bear_end_day"))}};
    for (const auto& p : periods) {
        if (p.end < p.start) throw ConfigError("backtest period '" + p.name + "' is empty");
    }
    const auto tables = backtest::compare_strategies(candles, specs, periods);

    for (const auto& t : tables) {
        std::ostringstream eq;
        eq << "date";
        for (const auto& row : t.rows) eq << ',' << row.strategy;
        eq << '\n';
        const auto& dates = t.rows.front().result.equity.dates;
        for (std::size_t i = 0; i < dates.size(); ++i) {
            eq << dates[i].iso();
            for (const auto& row : t.rows) {
                const auto& e = row.result.equity;
                eq << ',' << (i < e.values.size() && e.dates[i] == dates[i] ? fmt(e.values[i]) : std::string());
            }
            eq << '\n';
        }
        write_file(ctx, res, "equity_" + t.period.name + ".csv", eq.str());
        json ledger = json::object();
        for (const auto& row : t.rows) ledger[row.strategy] = backtest::ledger_json(row.result);
        write_json(ctx, res, "trades_" + t.period.name + ".json", ledger);
    }
    write_json(ctx, res, "backtest.json", backtest::tables_json(tables));
    write_file(ctx, res, "backtest.txt", backtest::tables_text(tables));
    res.log.push_back("backtest: " + std::to_string(specs.size()) + " strategies over " +
                      std::to_string(periods.size()) + " periods");
    return res;
}

StageResult cmd_report(const Context& ctx) {
    StageResult res;
    const auto present = text_sections(ctx);
    if (present.empty()) throw DependencyError("no tables in '" + ctx.out_dir.string() + "' to report; run the "
                                               "pipeline stages first");
    std::ostringstream md;
    md << "# Pipeline report\n\n";
    md << "Task: " << ctx.cfg.str("task.name") << ", test period " << ctx.cfg.str("split.test_start") << " .. "
       << ctx.cfg.str("split.test_end") << ", seed " << ctx.seed << "\n\n";
    for (const auto& name : present) {
        res.inputs.push_back(artifact(ctx, name).string());
        md << "## " << name.substr(0, name.size() - 4) << "\n\n```\n" << read_text(artifact(ctx, name)) << "```\n\n";
    }
    write_file(ctx, res, "report.md", md.str());
    res.log.push_back("report: " + std::to_string(present.size()) + " section(s)");
    return res;
}

std::string write_manifest(const Context& ctx, const std::string& subcommand, const StageResult& result,
                           const std::string& started_utc) {
    manifest::RunManifest m;
    m.subcommand = subcommand;
    m.config_snapshot = ctx.cfg.dump();
    m.started_utc = started_utc;
    m.finished_utc = manifest::utc_now_iso();
    std::vector<std::string> inputs = result.inputs;
    std::sort(inputs.begin(), inputs.end());
    inputs.erase(std::unique(inputs.begin(), inputs.end()), inputs.end());
    for (const auto& p : inputs) {
        m.inputs.push_back({p, manifest::sha256_file(p), fs::file_size(p)});
    }
    for (const auto& a : result.artifacts) {
        const auto p = artifact(ctx, a);
        m.artifacts.push_back({a, manifest::sha256_file(p.string()), fs::file_size(p)});
    }
    const std::string name = "manifest_" + subcommand + ".json";
    fs::create_directories(ctx.out_dir);
    std::ofstream out(artifact(ctx, name), std::ios::binary);
    if (!out) throw DependencyError("cannot write manifest '" + artifact(ctx, name).string() + "'");
    out << manifest::to_json(m).dump(2) << '\n';
    return name;
}

}  // namespace xmove::pipeline
