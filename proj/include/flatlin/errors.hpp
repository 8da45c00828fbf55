#pragma once

#include <stdexcept>
#include <string>

namespace flatlin {

/// Base class for all toolkit errors.
class FlatlinError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public FlatlinError {
public:
    using FlatlinError::FlatlinError;
};

/// Evaluation hit a variable with no value in the assignment.
class UnboundVariableError : public FlatlinError {
public:
    explicit UnboundVariableError(const std::string& missing)
        : FlatlinError("unbound variable(s): " + missing), missing_vars(missing) {}
    std::string missing_vars;
};

/// Evaluation hit a zero denominator; `where` carries the offending subexpression.
class DivisionByZeroError : public FlatlinError {
public:
    explicit DivisionByZeroError(const std::string& where)
        : FlatlinError("division by zero in " + where), subexpr(where) {}
    std::string subexpr;
};

/// A model-level invariant failed; carries which invariant and at which point.
class InvariantViolation : public FlatlinError {
public:
    InvariantViolation(const std::string& which_, const std::string& where_)
        : FlatlinError("invariant violated: " + which_ + " (" + where_ + ")"),
          which(which_), where(where_) {}
    std::string which;
    std::string where;
};

class NewtonDivergenceError : public FlatlinError {
public:
    using FlatlinError::FlatlinError;
};

class SingularJacobianError : public FlatlinError {
public:
    using FlatlinError::FlatlinError;
};

class NoClosedFormPsiError : public FlatlinError {
public:
    using FlatlinError::FlatlinError;
};

class NotInputIndependentFlatOutput : public FlatlinError {
public:
    using FlatlinError::FlatlinError;
};

class RankSelectionFailure : public FlatlinError {
public:
    using FlatlinError::FlatlinError;
};

class MinimalityViolated : public FlatlinError {
public:
    using FlatlinError::FlatlinError;
};

class SelectionIncomplete : public FlatlinError {
public:
    using FlatlinError::FlatlinError;
};

class UnstableEigenvalueError : public FlatlinError {
public:
    using FlatlinError::FlatlinError;
};

class NonConjugatePairError : public FlatlinError {
public:
    using FlatlinError::FlatlinError;
};

class IoError : public FlatlinError {
public:
    using FlatlinError::FlatlinError;
};

}  // namespace flatlin
