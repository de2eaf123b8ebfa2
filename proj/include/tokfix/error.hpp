#pragma once

#include <stdexcept>
#include <string>

namespace tokfix {

/// Error categories surfaced by the library. The CLI maps `Validation`-class
/// errors to exit code 2 and everything else to exit code 1.
enum class ErrorKind {
    Io,
    Schema,
    InvalidArgument,
    MismatchedSource,
    DegeneratePair,
    RegionMismatch,
    MaskEmpty,
    Divergence,
    RemoteUnavailable,
    MalformedResponse,
    Config,
    Precondition,
    TokenizerMismatch,
    InvariantViolation,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// True for errors caused by bad input data or configuration rather than
    /// by the environment.
    bool is_validation() const noexcept;

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace tokfix
