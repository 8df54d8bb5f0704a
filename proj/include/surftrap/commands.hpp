#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace surftrap {

/// Outcome of one pipeline run: files written to the output directory (manifest last)
/// and a one-line human summary.
struct RunResult {
    std::vector<std::filesystem::path> outputs;
    std::string summary;
    std::string manifest_json;
};

/// Runs a pipeline by name: fields, characterize, scan-vtop, lifetime, tickle, compensate.
/// `options_json` is an object of flags (see README); common keys are config, out, seed,
/// threads, method, panels and record_time. Throws surftrap::Error; on failure every file
/// the run had written is removed.
RunResult run_command(std::string_view command, std::string_view options_json);

/// Names accepted by run_command.
const std::vector<std::string>& command_names();

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnvVar = "SURFTRAP_CONFIG";

} // namespace surftrap
