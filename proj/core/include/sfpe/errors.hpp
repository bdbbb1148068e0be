#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sfpe {

/// Base class of every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed expression source. Carries the 1-based column where parsing
/// stopped and a description of what would have been accepted there.
class SyntaxError : public Error {
public:
    SyntaxError(const std::string& message, std::size_t column, std::string expected)
        : Error(message), column_(column), expected_(std::move(expected)) {}

    std::size_t column() const noexcept { return column_; }
    const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t column_;
    std::string expected_;
};

/// Function called with the wrong number of arguments.
class ArityError : public Error {
public:
    using Error::Error;
};

/// Identifier that is not a variable admissible in this context and not a
/// known function (includes x-indices beyond the declared dimension and `v`
/// where the solution value is not in scope).
class UnknownIdentifier : public Error {
public:
    using Error::Error;
};

/// Evaluation hit a point outside an operation's domain (log of a
/// nonpositive value, division by zero, ...) or produced NaN/Inf.
class DomainError : public Error {
public:
    DomainError(const std::string& message, std::size_t source_column = 0)
        : Error(message), source_column_(source_column) {}

    /// 1-based column of the offending node in the original source, 0 if unknown.
    std::size_t source_column() const noexcept { return source_column_; }

private:
    std::size_t source_column_;
};

/// A simulated state or estimator value became NaN/Inf.
class NonFiniteError : public Error {
public:
    NonFiniteError(const std::string& message, long step_index = -1)
        : Error(message), step_index_(step_index) {}

    long step_index() const noexcept { return step_index_; }

private:
    long step_index_;
};

/// A closed-form value exceeds the double range; reported instead of a silent Inf.
class OverflowError : public Error {
public:
    using Error::Error;
};

/// Explicit finite-difference scheme refused: stability constraint violated.
class CflViolation : public Error {
public:
    CflViolation(const std::string& message, long required_nt)
        : Error(message), required_nt_(required_nt) {}

    long required_nt() const noexcept { return required_nt_; }

private:
    long required_nt_;
};

/// Estimator configuration exceeds the configured work budget.
class BudgetExceeded : public Error {
public:
    using Error::Error;
};

/// Problem file violates the schema. Carries the offending field.
class SchemaError : public Error {
public:
    SchemaError(std::string field, const std::string& reason)
        : Error(field + ": " + reason), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A solve was requested on a problem whose admissibility checks fail.
class AdmissibilityFailure : public Error {
public:
    AdmissibilityFailure(const std::string& message, std::vector<std::string> failed)
        : Error(message), failed_checks_(std::move(failed)) {}

    const std::vector<std::string>& failed_checks() const noexcept { return failed_checks_; }

private:
    std::vector<std::string> failed_checks_;
};

/// Comparison probe outside the finite-difference space-time box.
class ProbeOutOfRange : public Error {
public:
    using Error::Error;
};

}  // namespace sfpe
