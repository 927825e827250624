#pragma once

#include <stdexcept>
#include <string>

namespace eqprop {

/// Invalid or inconsistent configuration (bad dimensions, bad flags, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A state trajectory left the admissible region (non-finite or |x_i| > bound).
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what, long step) : std::runtime_error(what), step_index(step) {}
    long step_index;
};

/// An operation was called outside its contract (e.g. energy of an asymmetric coupling matrix).
struct ContractViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A normalized parameterization has a zero-norm component.
struct DegenerateParameterization : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A ground-truth computation cannot be trusted (singular/ill-conditioned solve, divergent series).
struct OracleUnavailable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace eqprop
