#pragma once

#include <stdexcept>
#include <string>

namespace lexmorl {

/// Precondition on an argument value failed (non-finite input, bad index).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Caller broke an operation contract (e.g. stepping a finished episode).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed map, config or other user-supplied structure.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable or corrupt data file (checkpoints, traces).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training diverged (non-finite loss or gradient).
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lexmorl
