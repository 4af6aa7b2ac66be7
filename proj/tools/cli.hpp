#pragma once

#include <string>
#include <vector>

namespace ssmnet::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kCorpus = 3, kNumerical = 4 };

// Runs one command line ("ssmnet <subcommand> ..."). Returns the process exit code.
int run(std::vector<std::string> args);

}  // namespace ssmnet::cli
