#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace twinsem {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Structural problem in a model: unknown variables, bad labels, builder preconditions.
class ModelError : public Error {
public:
    using Error::Error;
};

/// Problem with bound data: missing columns, wrong column kinds, bad CSV.
class DataError : public Error {
public:
    using Error::Error;
};

/// Numerical failure that cannot be expressed as a rejected likelihood value.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Parameter values outside the admissible space (e.g. unordered thresholds).
class ParameterSpaceError : public NumericError {
public:
    using NumericError::NumericError;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace twinsem
