#pragma once

#include <string>

namespace slowfast {

/// Executes one subcommand against a JSON config file and writes CSV/JSON
/// artifacts into the configured output directory. Returns the process exit
/// code: 0 success, 1 numerical/usage fault, 2 assumption-validation
/// failure.
int run_subcommand(const std::string& subcommand, const std::string& config_path);

}  // namespace slowfast
