#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ckgr/kg.hpp"
#include "ckgr/trainer.hpp"

namespace ckgr {

// Flat `key = value` run configuration. Every known key has a default; unknown keys are
// rejected. Values stay strings until a typed accessor parses them, and `validate` runs all
// accessors so a bad value fails at load time with the key named.
class RunConfig {
public:
    RunConfig();

    // Lines `key = value`, '#' starts a comment. Throws ConfigError naming the line.
    void load(std::istream& in, const std::string& source = "<config>");
    void load_file(const std::filesystem::path& path);
    void set(const std::string& key, const std::string& value);
    // Parses `key=value`.
    void set_assignment(const std::string& assignment);

    bool is_set(const std::string& key) const { return explicit_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    // Seed from CKGR_SEED when the config never set one.
    void apply_seed_env(const char* env_value);

    void validate() const;

    Hyperparameters hyperparameters() const;
    std::array<double, 3> split_ratios() const;
    IdOrder id_order() const;
    double implicit_threshold() const;
    std::size_t min_interactions() const;
    bool strict_parse() const;
    std::uint64_t seed() const;
    std::string path(const std::string& key) const;  // empty when unset

    static const std::vector<std::string>& known_keys();

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> explicit_;
};

// Strict scalar parsers; `key` is only used in the error message.
double parse_real(const std::string& key, const std::string& text);
std::uint64_t parse_unsigned(const std::string& key, const std::string& text);
bool parse_bool(const std::string& key, const std::string& text);
std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& text);
std::vector<double> parse_real_list(const std::string& key, const std::string& text);

}  // namespace ckgr
