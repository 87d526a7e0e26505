#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace xmove::manifest {

inline constexpr const char* kCodeVersion = "xmove 1.0.0";

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);
std::string sha256_hex(const std::string& bytes);

struct ArtifactEntry {
    std::string path;  // relative to the output directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunManifest {
    std::string subcommand;
    std::string config_snapshot;  // canonical config text
    std::string code_version = kCodeVersion;
    std::string started_utc;
    std::string finished_utc;
    std::vector<ArtifactEntry> inputs;  // absolute or config-relative paths
    std::vector<ArtifactEntry> artifacts;
};

std::string utc_now_iso();
nlohmann::json to_json(const RunManifest& m);

}  // namespace xmove::manifest
