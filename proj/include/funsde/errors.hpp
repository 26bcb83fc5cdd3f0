#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace funsde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t offset, std::vector<std::string> expected);

    std::size_t offset() const noexcept { return offset_; }
    const std::vector<std::string>& expected() const noexcept { return expected_; }

private:
    std::size_t offset_;
    std::vector<std::string> expected_;
};

class UnboundParameterError : public Error {
public:
    explicit UnboundParameterError(const std::string& name)
        : Error("unbound parameter '" + name + "'"), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

/// Division by zero, logarithm of a non-positive value, non-finite result.
class DomainError : public Error {
public:
    using Error::Error;
};

class QuadratureError : public Error {
public:
    using Error::Error;
};

/// Integrator failures carry the independent variable reached before failing.
class OdeError : public Error {
public:
    OdeError(const std::string& message, double reached) : Error(message), reached_(reached) {}
    double reached() const noexcept { return reached_; }

private:
    double reached_;
};

class StepUnderflowError : public OdeError {
public:
    using OdeError::OdeError;
};

class NonFiniteRhsError : public OdeError {
public:
    using OdeError::OdeError;
};

class BracketExhaustedError : public Error {
public:
    using Error::Error;
};

class NotSatisfiableError : public Error {
public:
    using Error::Error;
};

/// Euler-Maruyama state became non-finite.
class SimulationError : public Error {
public:
    SimulationError(const std::string& message, std::size_t path, std::size_t step)
        : Error(message), path_(path), step_(step) {}
    std::size_t path() const noexcept { return path_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t path_;
    std::size_t step_;
};

}  // namespace funsde
