#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "robust_embed/attacks.hpp"
#include "robust_embed/trainer.hpp"

namespace robust_embed::cli {

// Invalid or inconsistent configuration, detected before any work starts.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string help;
};

// Flat string-valued configuration. Values are kept exactly as written so
// the echoed config reproduces the user's spelling; typed accessors parse
// on demand. Precedence: flag > file > environment > built-in default.
class RunConfig {
public:
    static const std::vector<ConfigKey>& keys();
    static bool known(const std::string& key);

    RunConfig();

    void set(const std::string& key, const std::string& value);
    // `key = value` lines; `#` starts a comment. Errors name the line.
    void merge_file(const std::filesystem::path& path);
    void apply_environment();

    const std::string& get(const std::string& key) const;
    double number(const std::string& key) const;
    long long integer(const std::string& key) const;
    std::size_t count(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::filesystem::path path(const std::string& key) const;

    // Defaults with indirection ("auto") resolved, for a given command.
    std::filesystem::path output_dir(const std::string& command) const;
    std::filesystem::path checkpoint_dir() const;
    double sigma() const;

    HyperParams hyper_params() const;
    TrainOptions train_options() const;
    AttackOptions attack_options() const;

    // Parses every typed field; throws ConfigError on the first problem.
    void validate() const;

    // `key=value` lines, one per key, in declaration order, fully resolved.
    std::string dump() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace robust_embed::cli
