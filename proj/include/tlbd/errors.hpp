#pragma once
#include <stdexcept>
#include <string>

namespace tlbd {

// Thrown when a caller breaks a documented precondition (shape mismatch,
// out-of-range index, empty input where nonempty is required).
struct ContractViolation : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Thrown by file parsers (checkpoints, IDX datasets, fixtures).
// The kind distinguishes the failure so callers and tests can tell a bad
// magic from a truncated payload.
struct ParseError : std::runtime_error {
    enum class Kind {
        BadMagic,
        BadVersion,
        Truncated,
        BadShape,
        CountMismatch,
        BadValue,
    };
    Kind kind;
    ParseError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// Filesystem trouble: unreadable input, unwritable output.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The denial-of-service scheduler could not find an activation within its
// search horizon.
struct HorizonExhausted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An evaluation could not produce a result (e.g. no eligible inputs).
struct EvaluationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace tlbd
