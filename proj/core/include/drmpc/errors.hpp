#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace drmpc {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched vector/matrix sizes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A configured size limit (scenario count, binary count) was exceeded.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// The optimization backend failed to produce a usable answer.
class SolverError : public Error {
public:
    SolverError(const std::string& what, std::string status)
        : Error(what + " (status: " + status + ")"), status_(std::move(status)) {}

    const std::string& status() const noexcept { return status_; }

private:
    std::string status_;
};

/// The offline tightening exhausts the violation budget at some step.
class ScheduleError : public Error {
public:
    ScheduleError(const std::string& what, int step, double zeta)
        : Error(what), step_(step), zeta_(zeta) {}

    int step() const noexcept { return step_; }
    double zeta() const noexcept { return zeta_; }

private:
    int step_;
    double zeta_;
};

/// Malformed or inconsistent configuration document.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace drmpc
