#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace stepscale::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kPartial = 3, kIoError = 4 };

inline constexpr const char* kDataRootEnv = "STEPSCALE_DATA_ROOT";

/// Entry point of the `stepscale` tool. `args` excludes the program name.
/// Subcommands: run, fit, lipschitz, ratios, report.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Renders report.md from whatever result files exist in `dir`.
std::string render_report(const std::filesystem::path& dir);

}  // namespace stepscale::cli
