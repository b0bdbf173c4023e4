#pragma once

#include <stdexcept>
#include <string>

namespace effpipe {

/// Base of every error raised by the library. `code()` is a stable
/// machine-readable tag; `what()` carries the human message.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

/// Malformed input text (CSV, JSON). Carries the 1-based line when known.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t line = 0)
        : Error("PARSE", line ? "line " + std::to_string(line) + ": " + message : message),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& message) : Error("SCHEMA", message) {}
};

class DuplicateError : public Error {
public:
    DuplicateError(const std::string& message, std::size_t line)
        : Error("DUPLICATE", "line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Caller violated an operation's contract (bad arguments, wrong state).
class UsageError : public Error {
public:
    explicit UsageError(const std::string& message) : Error("USAGE", message) {}
};

/// A value lies outside the mathematical domain of the requested transform.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& message) : Error("DOMAIN", message) {}
};

class LookupError : public Error {
public:
    explicit LookupError(const std::string& message) : Error("LOOKUP", message) {}
};

/// Data failed admissibility checks required by an analysis stage.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& message) : Error("VALIDATION", message) {}
};

class SolverFailure : public Error {
public:
    explicit SolverFailure(const std::string& message) : Error("SOLVER_FAILURE", message) {}
};

/// Two computations that must agree did not (e.g. primal vs dual DEA score).
class ConsistencyError : public Error {
public:
    explicit ConsistencyError(const std::string& message) : Error("CONSISTENCY", message) {}
};

class CollinearityError : public Error {
public:
    explicit CollinearityError(const std::string& message) : Error("COLLINEARITY", message) {}
};

class DegenerateColumnError : public Error {
public:
    DegenerateColumnError(const std::string& column, const std::string& message)
        : Error("DEGENERATE_COLUMN", message), column_(column) {}

    const std::string& column() const noexcept { return column_; }

private:
    std::string column_;
};

class FilesystemError : public Error {
public:
    explicit FilesystemError(const std::string& message) : Error("FILESYSTEM", message) {}
};

}  // namespace effpipe
