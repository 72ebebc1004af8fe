#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nlexit/config.hpp"

namespace nlexit {

enum class Command { solve, exit_time, moments, simulate, paths, verify, compare };

std::optional<Command> parse_command(const std::string& name);
const char* to_string(Command c);

enum ExitCode : int { exit_ok = 0, exit_validation = 2, exit_numerical = 3, exit_check_failed = 4 };

struct RunOptions {
    std::filesystem::path out_dir;  // empty: the config's output.dir
    unsigned threads = 1;
};

struct RunResult {
    int exit_code = exit_ok;
    std::vector<std::filesystem::path> files;  // written artifacts
};

/// Executes one subcommand and writes its artifacts. Validation and numerical
/// failures propagate as ConfigError / NumericalError; failed verification
/// checks are reported through exit_code.
RunResult run(Command command, const RunConfig& config, const RunOptions& options, std::ostream& log);

/// Machine-readable JSON error report.
std::string error_report(int exit_code, const std::string& kind, const std::string& message);

}  // namespace nlexit
