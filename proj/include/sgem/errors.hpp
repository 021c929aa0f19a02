#pragma once

#include <stdexcept>
#include <string>

namespace sgem {

/// Violated precondition or shape contract on a library call.
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed configuration (unknown task name, bad parameter range, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Unreadable, truncated or otherwise malformed input data.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Filesystem-level failure (missing file, unwritable directory).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A pipeline stage was invoked before its predecessor produced its artifact.
struct StageOrderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failure during training (divergence, non-finite loss).
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Not enough data to satisfy an experiment's requirements.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

} // namespace sgem
