#pragma once

#include <stdexcept>
#include <string>

namespace ripelab {

// Base of every error the library raises. The CLI maps ValidationError and
// its subclasses to exit code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input violates a schema or a documented invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed text input; carries the 1-based line number when known.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, std::size_t line)
        : ValidationError(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    explicit ParseError(const std::string& what) : ValidationError(what) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_ = 0;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Numerical estimation could not produce a model.
class FitError : public Error {
public:
    using Error::Error;
};

// Feature matching left too few correspondences.
class InsufficientCorrespondences : public FitError {
public:
    explicit InsufficientCorrespondences(std::size_t count)
        : FitError("insufficient correspondences: " + std::to_string(count) + " (need >= 4)"), count_(count) {}

    std::size_t count() const noexcept { return count_; }

private:
    std::size_t count_;
};

// Wraps a failure raised while running one pipeline stage.
class StageError : public Error {
public:
    StageError(const std::string& stage, const std::string& what)
        : Error("stage " + stage + ": " + what), stage_(stage) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace ripelab
