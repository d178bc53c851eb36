#pragma once

#include <stdexcept>
#include <string>

namespace trustlora {

// Base for everything thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/axis mismatch between operands.
struct DimensionError : Error {
    using Error::Error;
};

// A documented precondition of an operation was violated.
struct ContractError : Error {
    using Error::Error;
};

// Invalid or infeasible configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed or inconsistent data at runtime (datasets, batches).
struct DataError : Error {
    using Error::Error;
};

// Evaluation-protocol violation (e.g. a mixture that cannot be built).
struct ProtocolError : Error {
    using Error::Error;
};

// Filesystem / serialization failure.
struct IoError : Error {
    using Error::Error;
};

// Non-finite values or other numeric breakdown.
struct NumericError : Error {
    using Error::Error;
};

// Artifact reference that cannot be resolved to an on-disk artifact.
struct ResolutionError : Error {
    using Error::Error;
};

enum class LoadErrorKind {
    version_mismatch,
    truncated_payload,
    manifest_mismatch,
};

// Checkpoint/container load failure; `kind` distinguishes the cause.
struct LoadError : Error {
    LoadErrorKind kind;
    LoadError(LoadErrorKind k, const std::string& msg) : Error(msg), kind(k) {}
};

}  // namespace trustlora
