#pragma once

#include <stdexcept>
#include <string>

namespace snlp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

// Model or rate violates a structural assumption (e.g. drift exhaustion).
class ConstraintError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class UnsupportedError : public Error {
public:
    using Error::Error;
};

// Implicit diagonal of the marching scheme is singular; refine the grid.
class StepSizeError : public Error {
public:
    using Error::Error;
};

class IterationError : public Error {
public:
    IterationError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

// A limit did not stabilise on the available grid.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double change)
        : Error(what), change_(change) {}
    double change() const noexcept { return change_; }

private:
    double change_;
};

class UndefinedLimitError : public Error {
public:
    using Error::Error;
};

}  // namespace snlp
