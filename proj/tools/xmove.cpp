#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "xmove/config.hpp"
#include "xmove/error.hpp"
#include "xmove/manifest.hpp"
#include "xmove/pipeline.hpp"
#include "xmove/synth.hpp"

namespace {

using namespace xmove;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitDependency = 2;
constexpr int kExitInternal = 3;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
};

// Remaining tokens are `--section.key value` or `--section.key=value` overrides.
void apply_overrides(config::Config& cfg, const std::vector<std::string>& extras) {
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& tok = extras[i];
        if (tok.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + tok + "'");
        std::string key = tok.substr(2), value;
        if (const auto eq = key.find('='); eq != std::string::npos) {
            value = key.substr(eq + 1);
            key.resize(eq);
        } else {
            if (i + 1 >= extras.size()) throw ConfigError("option '" + tok + "' needs a value");
            value = extras[++i];
        }
        if (key.find('.') == std::string::npos) throw ConfigError("unknown option '" + tok + "'");
        cfg.set(key, value);
    }
}

config::Config resolve_config(const CommonArgs& args, const std::vector<std::string>& extras) {
    auto cfg = args.config_path.empty() ? config::Config::defaults() : config::Config::from_file(args.config_path);
    apply_overrides(cfg, extras);
    if (args.seed) cfg.set("run.seed", std::to_string(*args.seed));
    return cfg;
}

int run_stage(const std::string& name, const CommonArgs& args, const std::vector<std::string>& extras,
              const std::function<pipeline::StageResult(const pipeline::Context&)>& stage) {
    const auto started = manifest::utc_now_iso();
    const auto ctx = pipeline::make_context(resolve_config(args, extras));
    const auto result = stage(ctx);
    const auto manifest_name = pipeline::write_manifest(ctx, name, result, started);
    for (const auto& line : result.log) std::cout << line << '\n';
    std::cout << "wrote " << result.artifacts.size() << " artifact(s) and " << manifest_name << " to "
              << ctx.out_dir.string() << '\n';
    return kExitOk;
}

struct SynthArgs {
    std::string dir = "toy";
    std::size_t days = 300;
    std::size_t test_days = 60;
    std::size_t dim = 16;
    std::size_t max_slices = 16;
    double signal = 1.0;
    std::uint64_t seed = 7;
};

std::string toy_config(const SynthArgs& a, const synth::SynthPaths& p, const synth::SynthOptions& o) {
    namespace fs = std::filesystem;
    const Date test_start = o.start + static_cast<int>(a.days - a.test_days);
    const Date test_end = o.start + static_cast<int>(a.days - 1);
    auto day = [&](double frac) { return std::max<long>(1, std::lround(frac * static_cast<double>(a.test_days))); };
    auto abs = [](const std::string& s) { return fs::absolute(s).string(); };
    std::ostringstream os;
    os << "# Toy configuration generated by `xmove synth`\n"
       << "[run]\nseed = 42\noutput_dir = " << abs((fs::path(a.dir) / "out").string()) << "\n\n"
       << "[data]\nbtc = " << abs(p.btc) << "\neth = " << abs(p.eth) << "\ngold = " << abs(p.gold)
       << "\nembeddings = " << abs(p.embeddings) << "\n\n"
       << "[task]\nname = up5\n\n"
       << "[split]\ntest_start = " << test_start.iso() << "\ntest_end = " << test_end.iso() << "\n\n"
       << "[ta]\ngrid_c = 1,10\ngrid_gamma = 0.1,1\n\n"
       << "[twitter]\nembedding_dim = " << a.dim << "\nmax_slices = " << a.max_slices
       << "\nfilter_heights = 2,3\nn_filters = 8\nparallel_dense = 16\nchannels = 2,4,4\npool = 1\n"
       << "sequential_dense = 16,8\nepochs = 15\nbatch_size = 16\nlr = 0.005\nloss = bce\n\n"
       << "[fusion]\nfolds = 3\n\n"
       << "[evaluate]\nmodels = ta,twitter_parallel,twitter_sequential,fusion\n\n"
       << "[backtest]\nstrategies = buy_hold,ma_cross,ta,fusion,fusion@0.95,fusion@0.99\n"
       << "bull_start_day = " << day(150.0 / 365) << "\nbull_end_day = " << day(350.0 / 365)
       << "\nbear_start_day = " << day(315.0 / 365) << "\nbear_end_day = " << a.test_days << '\n';
    return os.str();
}

int run_synth(const SynthArgs& a) {
    if (a.test_days < 10 || a.test_days + 60 > a.days) {
        throw ConfigError("synth needs --test-days >= 10 and at least 60 training days");
    }
    synth::SynthOptions o;
    o.days = a.days;
    o.dim = a.dim;
    o.max_slices = a.max_slices;
    o.signal = a.signal;
    o.seed = a.seed;
    const auto data = synth::make_synthetic(o);
    const auto paths = synth::write_synthetic(data, a.dir, o);
    const auto cfg_path = (std::filesystem::path(a.dir) / "xmove.cfg").string();
    std::ofstream out(cfg_path);
    if (!out) throw DependencyError("cannot write '" + cfg_path + "'");
    out << toy_config(a, paths, o);
    std::cout << "wrote toy dataset (" << a.days << " days) and " << cfg_path << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bitcoin price-movement pipeline: data, features, models, evaluation and backtests"};
    app.require_subcommand(1);
    CommonArgs common;
    std::vector<CLI::App*> stages;

    auto add_stage = [&](const std::string& name, const std::string& help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", common.config_path, "Configuration file (key = value with [section] headers)");
        sub->add_option("--seed", common.seed, "Run seed (overrides run.seed)");
        sub->allow_extras();
        sub->footer("Any config value can be overridden with --section.key VALUE.");
        stages.push_back(sub);
        return sub;
    };

    auto* ingest = add_stage("ingest", "Load and align BTC/ETH/gold series");
    auto* feats = add_stage("features", "Indicators, normalized features, labels and summaries");
    auto* label = add_stage("label", "Label files and class distributions for all tasks");
    auto* train = add_stage("train", "Train ta | twitter[:parallel|:sequential] | fusion");
    std::string target;
    train->add_option("target", target, "Model to train")->required();
    auto* evaluate = add_stage("evaluate", "Classification reports on the test period");
    auto* sweep = add_stage("sweep-threshold", "Threshold sweep for the evaluated models");
    auto* bt = add_stage("backtest", "Strategy backtests over the test periods");
    auto* report = add_stage("report", "Bundle all tables into report.md");

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "Write a toy dataset and matching configuration");
    synth_cmd->add_option("--dir", synth_args.dir, "Output directory");
    synth_cmd->add_option("--days", synth_args.days, "Number of days");
    synth_cmd->add_option("--test-days", synth_args.test_days, "Days in the test period");
    synth_cmd->add_option("--dim", synth_args.dim, "Embedding width");
    synth_cmd->add_option("--max-slices", synth_args.max_slices, "Slices per day (maximum)");
    synth_cmd->add_option("--signal", synth_args.signal, "Strength of the planted embedding signal");
    synth_cmd->add_option("--seed", synth_args.seed, "Generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (synth_cmd->parsed()) return run_synth(synth_args);
        using namespace pipeline;
        for (auto* sub : stages) {
            if (!sub->parsed()) continue;
            const auto extras = sub->remaining();
            const std::string name = sub->get_name();
            if (sub == ingest) return run_stage(name, common, extras, cmd_ingest);
            if (sub == feats) return run_stage(name, common, extras, cmd_features);
            if (sub == label) return run_stage(name, common, extras, cmd_label);
            if (sub == evaluate) return run_stage(name, common, extras, cmd_evaluate);
            if (sub == sweep) return run_stage(name, common, extras, cmd_sweep_threshold);
            if (sub == bt) return run_stage(name, common, extras, cmd_backtest);
            if (sub == report) return run_stage(name, common, extras, cmd_report);
            if (sub == train) {
                const auto probe = resolve_config(common, extras);
                const auto which = parse_train_target(target, probe);
                return run_stage("train_" + target_name(which), common, extras,
                                 [&](const Context& ctx) { return cmd_train(ctx, which); });
            }
        }
        return kExitValidation;
    } catch (const DependencyError& e) {
        std::cerr << "dependency error: " << e.what() << '\n';
        return kExitDependency;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}
