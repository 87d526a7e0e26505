#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "xmove/config.hpp"
#include "xmove/features.hpp"

namespace xmove::pipeline {

struct Context {
    config::Config cfg;
    std::filesystem::path out_dir;
    std::uint64_t seed = 0;
};

Context make_context(config::Config cfg);

struct StageResult {
    std::vector<std::string> artifacts;  // file names inside the output directory
    std::vector<std::string> inputs;     // input paths read
    std::vector<std::string> log;        // human-readable summary lines
};

// "up5" | "up2" | "down5" | "down2"
features::LabelSpec task_spec(std::string_view task, features::LabelSource source = features::LabelSource::HighLow);
inline constexpr std::string_view kTasks[] = {"up5", "up2", "down5", "down2"};

// Last date whose movement may enter training. Throws LeakageError when the
// configured value reaches the test period.
Date train_cutoff(const config::Config& cfg);

StageResult cmd_ingest(const Context& ctx);
StageResult cmd_features(const Context& ctx);
StageResult cmd_label(const Context& ctx);

enum class TrainTarget { Ta, TwitterParallel, TwitterSequential, Fusion };
// "ta", "twitter" (uses twitter.arch), "twitter:parallel", "twitter-sequential", "fusion", ...
TrainTarget parse_train_target(std::string_view text, const config::Config& cfg);
std::string target_name(TrainTarget t);  // "ta", "twitter_parallel", ...

StageResult cmd_train(const Context& ctx, TrainTarget target);
StageResult cmd_evaluate(const Context& ctx);
StageResult cmd_sweep_threshold(const Context& ctx);
StageResult cmd_backtest(const Context& ctx);
StageResult cmd_report(const Context& ctx);

// Writes manifest_<subcommand>.json into the output directory.
std::string write_manifest(const Context& ctx, const std::string& subcommand, const StageResult& result,
                           const std::string& started_utc);

}  // namespace xmove::pipeline
