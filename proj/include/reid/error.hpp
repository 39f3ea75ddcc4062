#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace reid {

// Base class for all toolkit errors. Subclasses map onto CLI exit codes
// (config 2, divergence 3, io 4); anything else exits 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite numbers encountered mid-computation (overflowed activations,
// NaN losses). The trainer converts this into a DivergenceError.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

// Non-finite loss during training. Carries the offending step index.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::int64_t step)
        : Error(what), step_(step) {}
    std::int64_t step() const { return step_; }

private:
    std::int64_t step_;
};

} // namespace reid
