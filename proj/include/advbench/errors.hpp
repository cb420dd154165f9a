#pragma once

#include <stdexcept>
#include <string>

namespace advbench {

/// Bad or missing configuration; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Failure during a run (NaN loss, diverged training); CLI exit code 3.
struct RuntimeFailure : std::runtime_error {
    explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace advbench
