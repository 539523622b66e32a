#pragma once

#include <stdexcept>
#include <string>

namespace psforge {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files, inconsistent shapes, bad dataset layouts.
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration values or unknown config keys.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Numerical failure: divergence, rank deficiency, unnormalizable data.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

}  // namespace psforge
