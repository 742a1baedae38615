#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ckgr {

// Root of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input or configuration supplied by the caller (CLI exit code 1).
class ValidationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class IoError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class UnresolvedEntityError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DimensionConflict : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class IndexError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ColdEntityError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Faults detected while running (CLI exit code 2).
class RuntimeFault : public Error {
public:
    using Error::Error;
};

class NumericFault : public RuntimeFault {
public:
    NumericFault(const std::string& what, std::size_t index = npos)
        : RuntimeFault(what), index_(index) {}

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    // Offending element (triple, triplet, coordinate) when known.
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class SamplingExhausted : public RuntimeFault {
public:
    using RuntimeFault::RuntimeFault;
};

class OracleError : public RuntimeFault {
public:
    using RuntimeFault::RuntimeFault;
};

}  // namespace ckgr
