#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "repvec/config.hpp"

namespace repvec {

inline constexpr std::string_view kVersion = "1.0.0";

/// An upstream artifact is missing; the message names the command producing it.
class MissingArtifactError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::span<const std::string_view> pipeline_commands();

/// bow, bocui, sdae-bow, sdae-bocui, doc2vec or ensemble, from the
/// representation and feature_set keys. Throws ConfigError for invalid
/// combinations.
std::string system_name(const PipelineConfig &config);

/// Runs one command. Throws ConfigError for configuration problems and
/// other exceptions for runtime failures.
void execute_command(std::string_view command, const PipelineConfig &config);

/// Exit status: 0 on success, 2 on configuration errors, 1 otherwise. The
/// error message goes to `err`.
int run_command(std::string_view command, const PipelineConfig &config, std::ostream &err);

/// Hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path &path);

} // namespace repvec
