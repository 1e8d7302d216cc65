#pragma once

#include "config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace bsde::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitCheckFailure = 1,
    kExitConfigError = 2,
    kExitBlowUp = 3,
};

/// Per-command options on top of the config file.
struct RunOptions {
    std::filesystem::path out;  ///< output directory
    std::ostream* log = nullptr;  ///< progress lines; null silences them
};

/// Each command writes its CSV (or JSON report) plus `<command>_meta.json`
/// into options.out and returns an ExitCode.
int cmd_verify(const ExperimentConfig& config, const RunOptions& options);
int cmd_train(const ExperimentConfig& config, const RunOptions& options);
int cmd_sweep(const ExperimentConfig& config, const RunOptions& options);
int cmd_landscape(const ExperimentConfig& config, const RunOptions& options);
int cmd_eval(const ExperimentConfig& config, const RunOptions& options);

/// Full command-line entry point (argument parsing, config loading, error
/// mapping to exit codes).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bsde::cli
