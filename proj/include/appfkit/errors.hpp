#pragma once

#include <stdexcept>
#include <string>

namespace appfkit {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Input file does not match the expected schema (missing keys, wrong types).
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Structurally well-formed input that violates a semantic contract.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Y-bus asymmetry beyond tolerance.
class AsymmetryError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Bus or slot index outside the declared range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// Zero (or below-floor) pivot during factorization.
class SingularMatrixError : public Error {
public:
    SingularMatrixError(const std::string& msg, int pivot)
        : Error(msg), pivot_index(pivot) {}
    int pivot_index;
};

/// Degenerate per-bus 2x2 coordinate block (|V| ~ 0).
class SingularBlockError : public Error {
public:
    SingularBlockError(const std::string& msg, int bus)
        : Error(msg), bus_index(bus) {}
    int bus_index;
};

/// A sampled profile could not be solved to tolerance.
class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& msg, int sample, int iters, double residual)
        : Error(msg), sample_index(sample), newton_iters(iters), final_residual(residual) {}
    int sample_index;
    int newton_iters;
    double final_residual;
};

/// Filesystem-level failure (unreadable file, unwritable directory).
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace appfkit
