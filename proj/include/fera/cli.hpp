#pragma once

// The command surface behind the `fera` executable. Every command resolves its
// configuration, echoes it to <out>/config.ini, writes its outputs and finishes
// with <out>/manifest.txt listing the files and whether the run completed.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fera/config.hpp"

namespace fera {

struct CommandOptions {
  std::string command;
  std::filesystem::path config;  ///< empty: defaults only
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;  ///< section.key=value, applied in order after the file
};

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

const std::vector<std::string>& command_names();

/// Defaults, then the config file, then --set overrides, then --seed.
RunConfig resolve_config(const CommandOptions& options);

/// Runs a command and returns its exit code: 0 on success, 1 when a run fails or an
/// assertion does not hold, 2 for configuration and usage errors. Errors are reported
/// on stderr and in the manifest.
int run_command(const CommandOptions& options);

}  // namespace fera
