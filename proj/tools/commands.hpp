#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace palmpipe::cli {

/// Bad flags or flag combinations (exit code 2).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parses `args` (without the program name) and runs one subcommand.
/// Returns the exit code: 0 success, 1 runtime error, 2 argument error.
///
/// Option values come from the command line first, then from the
/// `--config` file (plain `key = value`; keys are long flag names, plus the
/// display geometry keys l1..l5, x_presets, y_retracted, y_engaged,
/// branch_a, branch_e), then built-in defaults.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace palmpipe::cli
