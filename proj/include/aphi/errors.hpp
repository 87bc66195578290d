#pragma once

#include <stdexcept>
#include <string>

namespace aphi {

// Bad user configuration (missing keys, unsupported grid sizes, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what, std::string key = {})
        : std::runtime_error(what), key_(std::move(key)) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

// Argument outside the domain of an operation (negative time step, block index out of range).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Shape mismatch between fields living on different grids.
class GridMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A numerical procedure failed (non-convergence, non-finite values, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IntegrationError : public NumericalError {
public:
    IntegrationError(const std::string& what, double time)
        : NumericalError(what + " at t=" + std::to_string(time)), time_(time) {}
    double time() const { return time_; }

private:
    double time_;
};

// Corrupt or incompatible snapshot files.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace aphi
