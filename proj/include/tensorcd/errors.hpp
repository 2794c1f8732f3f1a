#pragma once

#include <stdexcept>
#include <string>

namespace tensorcd {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed text input. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, long line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

class FormatError : public Error {
public:
    using Error::Error;
};

/// Input violates a documented precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class FileError : public Error {
public:
    using Error::Error;
};

/// A moment matrix lacks the numerical rank the pipeline needs.
class DegenerateMomentError : public Error {
public:
    DegenerateMomentError(const std::string& what, long numerical_rank = -1)
        : Error(what), rank_(numerical_rank) {}
    long numerical_rank() const { return rank_; }

private:
    long rank_;
};

class DegenerateComponentError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what + " (achieved residual " + std::to_string(residual) + ")"), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace tensorcd
