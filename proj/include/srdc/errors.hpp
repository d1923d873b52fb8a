#pragma once

#include <stdexcept>
#include <string>

namespace srdc {

// Error taxonomy mirrors the CLI exit codes: config 2, numerical 3, io 4.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape disagreements, non-finite values, degenerate cluster states.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace srdc
