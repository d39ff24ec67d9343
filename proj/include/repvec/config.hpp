#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace repvec {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat key=value configuration. Blank lines and lines starting with '#'
/// are ignored; keys are validated against the documented set at parse time.
/// Relative paths resolve against the directory of the config file.
class PipelineConfig {
public:
    PipelineConfig() = default;

    static PipelineConfig parse(std::string_view text, std::filesystem::path base_dir = {});
    static PipelineConfig load(const std::filesystem::path &path);

    /// Override or add a key; validated like a parsed line.
    void set(const std::string &key, const std::string &value);

    bool has(const std::string &key) const { return _values.count(key) != 0; }
    const std::map<std::string, std::string> &values() const { return _values; }

    std::string text(const std::string &key) const; // required
    std::string text(const std::string &key, const std::string &fallback) const;
    std::filesystem::path path(const std::string &key) const; // required
    std::optional<std::filesystem::path> optional_path(const std::string &key) const;
    double real(const std::string &key, double fallback) const;
    std::uint64_t integer(const std::string &key, std::uint64_t fallback) const;
    bool flag(const std::string &key, bool fallback) const;
    /// Comma-separated list, empty items dropped.
    std::vector<std::string> list(const std::string &key, std::vector<std::string> fallback = {}) const;

    std::filesystem::path out_dir() const;
    std::uint64_t seed() const { return integer("seed", 0); }

private:
    std::map<std::string, std::string> _values;
    std::filesystem::path _base_dir;
};

/// True when `key` is one of the documented configuration keys.
bool is_known_config_key(std::string_view key);

} // namespace repvec
