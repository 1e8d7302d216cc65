#pragma once

#include <stdexcept>
#include <string>

namespace bsde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// A non-finite value appeared while evaluating a formula. `term()` names the
/// offending term (e.g. "time_derivative", "nonlinearity").
class NumericalDomainError : public Error {
public:
    NumericalDomainError(std::string term, const std::string& what)
        : Error(what), term_(std::move(term)) {}

    const std::string& term() const noexcept { return term_; }

private:
    std::string term_;
};

/// A simulated trajectory left the finite range.
class BlowUpError : public Error {
public:
    BlowUpError(int step, const std::string& what) : Error(what), step_(step) {}

    /// Index k of the first step whose result was non-finite.
    int step() const noexcept { return step_; }

private:
    int step_;
};

/// Invalid experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace bsde
