// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace pgru {

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "PGRU_OUTPUT_DIR";

std::filesystem::path default_output_dir();

/// Parses `args` (without the program name) and runs the subcommand.
/// Returns the process exit status; errors are reported on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pgru
