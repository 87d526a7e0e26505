#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "xmove/date.hpp"

namespace xmove::config {

// Flat key=value settings. `[section]` headers prefix the following keys
// with "section.", so `[ta]` + `folds = 4` is the key "ta.folds". Only keys
// present in the defaults table are accepted.
class Config {
public:
    // Every known key with its default value.
    static Config defaults();

    static Config parse(std::istream& in, const std::string& source = "<config>");
    static Config load_file(const std::string& path);

    // Layers `path` over the defaults.
    static Config from_file(const std::string& path);

    bool has(std::string_view key) const;
    void set(const std::string& key, const std::string& value);
    void merge(const Config& other);

    const std::string& str(std::string_view key) const;
    double num(std::string_view key) const;
    long long integer(std::string_view key) const;
    std::size_t count(std::string_view key) const;  // non-negative integer
    std::uint64_t u64(std::string_view key) const;
    bool flag(std::string_view key) const;
    Date date(std::string_view key) const;
    std::vector<double> nums(std::string_view key) const;
    std::vector<std::size_t> counts(std::string_view key) const;
    std::vector<std::string> strs(std::string_view key) const;

    const std::map<std::string, std::string, std::less<>>& values() const { return values_; }

    // Canonical text form: sections sorted, one key per line.
    std::string dump() const;

private:
    std::map<std::string, std::string, std::less<>> values_;
};

// Independent stream seed for a named consumer of the run seed.
std::uint64_t sub_seed(std::uint64_t seed, std::string_view name);

}  // namespace xmove::config
