#pragma once

#include "eqprop/errors.hpp"
#include "eqprop/types.hpp"

namespace eqprop {

/// Structural asymmetry ratio ||(J - J')/2||_F / ||J||_F in [0, 1].
/// Zero for symmetric matrices, one for antisymmetric ones.
template <typename Derived>
Scalar r_str_metric(const Eigen::MatrixBase<Derived>& j) {
    if (j.rows() != j.cols()) throw ConfigError("r_str_metric: matrix must be square");
    const Scalar denom = j.norm();
    if (denom == 0.0) return 0.0;
    return ((j - j.transpose()) / 2.0).norm() / denom;
}

/// Asymmetry ratio of the off-diagonal part of a state Jacobian,
/// ||J_off - J_off'||_F / ||J_off||_F. Unlike the structural ratio the
/// numerator carries no 1/2 factor, so the range is [0, 2].
template <typename Derived>
Scalar r_jac_metric(const Eigen::MatrixBase<Derived>& j) {
    if (j.rows() != j.cols()) throw ConfigError("r_jac_metric: matrix must be square");
    Matrix off = j;
    off.diagonal().setZero();
    const Scalar denom = off.norm();
    if (denom == 0.0) throw ContractViolation("r_jac_metric: off-diagonal part is zero");
    return (off - off.transpose()).norm() / denom;
}

}  // namespace eqprop
