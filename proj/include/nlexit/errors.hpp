#pragma once

#include <stdexcept>
#include <string>

namespace nlexit {

/// Invalid user input: malformed kernel, domain, grid or run parameters.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation could not produce a trustworthy result (singular system,
/// zero jump rate, eigen-iteration stall).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace nlexit
