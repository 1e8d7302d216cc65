#pragma once

#include "config.hpp"

#include "bsdekit/checks.hpp"

#include <functional>
#include <string>
#include <vector>

namespace bsde::cli {

/// Progress callbacks; either may be empty.
struct VerifyHooks {
    std::function<void(const std::string& name)> on_start;
    std::function<void(const CheckResult& result)> on_done;
};

/// Runs the full self-check suite. Exceptions inside a check turn into a
/// failed result carrying the message, so one bad input never hides the rest.
std::vector<CheckResult> run_verify_checks(const ExperimentConfig& config, const VerifyHooks& hooks = {});

}  // namespace bsde::cli
