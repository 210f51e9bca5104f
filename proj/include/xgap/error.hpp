#pragma once

#include <stdexcept>
#include <string>

namespace xgap {

// Base class for every error the library raises on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments, shape mismatches, contract violations by the caller.
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

// Filesystem and format problems: missing files, bad magic, truncation.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf surfaced during a forward pass or an optimization loop.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace xgap
