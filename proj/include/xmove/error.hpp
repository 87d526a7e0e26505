#pragma once

#include <stdexcept>
#include <string>

namespace xmove {

// Base class for every error the library raises. The CLI maps the two
// families below to distinct exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input data or configuration (exit code 1).
class ValidationError : public Error {
public:
    using Error::Error;
};

class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, std::size_t line)
        : ValidationError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class AlignmentError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class InsufficientDataError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class TrainingError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Binary file problems: bad magic, unknown version, truncation.
class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Training data reaching into the held-out test period.
class LeakageError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// A required upstream artifact or input path is missing (exit code 2).
class DependencyError : public Error {
public:
    using Error::Error;
};

}  // namespace xmove
