#pragma once

#include <string>
#include <vector>

namespace ssql::cli {

inline constexpr const char* kVersionString = "0.1.0";

// Subcommands: pretrain, probe, finetune, diagnose, sweep. Exit codes:
// 0 success, 1 runtime failure, 2 usage error. `args` excludes argv[0].
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, const char* const* argv);

}  // namespace ssql::cli
