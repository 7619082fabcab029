#pragma once

#include <stdexcept>
#include <string>

namespace locrank {

// Bad shapes, bad config keys, unreadable inputs. Maps to exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Misuse of a library contract (e.g. grad_check on a non-scalar root).
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failures mid-run: non-finite loss, truncated checkpoint. Maps to exit code 2.
struct RuntimeFailure : std::runtime_error {
    explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace locrank
