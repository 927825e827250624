#pragma once

#include <cmath>
#include <string>

#include "eqprop/learners.hpp"

namespace eqprop {

/// Ground-truth descent direction by implicit differentiation of the
/// stationarity condition F(x, theta) = 0:
///   -dC/dtheta = (dF/dtheta)' (J' \ dC/dx),
/// solved by dense LU with partial pivoting. Throws OracleUnavailable when
/// the Jacobian is singular or its estimated condition number exceeds 1e12.
template <PresynapticSystem S>
GradientEstimate<typename S::Grad> exact_gradient(const S& sys, const QuadraticCost& cost, const Vector& x_free) {
    const Matrix jt = system_jacobian(sys, x_free).transpose();
    const Vector g = cost.gradient(x_free);
    Eigen::PartialPivLU<Matrix> lu(jt);
    if (lu.rcond() < 1e-12) {
        throw OracleUnavailable("exact_gradient: Jacobian condition estimate exceeds 1e12");
    }
    const Vector w = lu.solve(g);
    const Scalar scale = std::max(1.0, inf_norm(g));
    if (inf_norm(jt * w - g) > 1e-8 * scale) {
        throw OracleUnavailable("exact_gradient: linear solve residual too large");
    }
    GradientEstimate<typename S::Grad> est;
    est.grad = sys.presyn_transpose(x_free, w);
    est.method = Method::Oracle;
    est.beta_used = 0.0;
    return est;
}

enum class BpttRecursion {
    Adjoint,          ///< propagate with the transposed state Jacobian (true gradient)
    ForwardJacobian,  ///< propagate without the transpose (reproduces the uncorrected
                      ///< contrastive update's beta -> 0 limit)
};

/// Gradient of the cost through the unrolled Euler map x -> x + dt F(x),
/// truncated at K steps. The state Jacobian of one step is I + dt J, so the
/// accumulated parameter gradient, rescaled by dt, sums the geometric series
/// whose K -> infinity limit is the stationary adjoint -J^{-T} dC/dx.
/// Requires the step map to be a contraction at x_free.
template <PresynapticSystem S>
GradientEstimate<typename S::Grad> bptt_gradient(const S& sys, const QuadraticCost& cost, const Vector& x_free,
                                                 long steps, Scalar dt,
                                                 BpttRecursion recursion = BpttRecursion::Adjoint) {
    if (steps < 1) throw ConfigError("bptt_gradient: steps must be >= 1");
    if (!(dt > 0.0)) throw ConfigError("bptt_gradient: dt must be positive");
    const Matrix j = system_jacobian(sys, x_free);
    const Matrix step_map = Matrix::Identity(j.rows(), j.cols()) + dt * j;

    Vector g = cost.gradient(x_free);
    const Scalar g0 = g.norm();
    Vector acc = g;
    for (long t = 1; t < steps; ++t) {
        g = (recursion == BpttRecursion::Adjoint) ? Vector(step_map.transpose() * g) : Vector(step_map * g);
        if (g.norm() > 100.0 * g0) {
            throw DivergenceError("bptt_gradient: recursion is not decaying (step " + std::to_string(t) + ")",
                                  t);
        }
        acc += g;
    }
    if (g.norm() > g0) {
        throw DivergenceError("bptt_gradient: recursion did not decay after " + std::to_string(steps) + " steps",
                              steps);
    }
    GradientEstimate<typename S::Grad> est;
    est.grad = sys.presyn_transpose(x_free, acc);
    est.grad.scale(-dt);
    est.method = Method::Oracle;
    est.beta_used = 0.0;
    return est;
}

/// Truncated series prediction of the uncorrected contrastive update's bias,
/// (VF estimate - exact estimate), from the symmetric/antisymmetric split
/// J = S + A:
///   J^{-1} - J^{-T} = -2 sum_{k>=0} (S^{-1} A)^{2k+1} S^{-1},
/// summed through order `order` and pushed through the presynaptic transpose.
/// Valid while the spectral radius of S^{-1} A is below one.
template <PresynapticSystem S>
GradientEstimate<typename S::Grad> vf_bias_prediction(const S& sys, const Matrix& jac, const Vector& cost_grad,
                                                      const Vector& x_free, int order) {
    if (order < 0) throw ConfigError("vf_bias_prediction: order must be >= 0");
    const Matrix sym = symmetric_part(jac);
    const Matrix anti = antisymmetric_part(jac);
    Eigen::PartialPivLU<Matrix> lu(sym);
    if (lu.rcond() < 1e-12) {
        throw OracleUnavailable("vf_bias_prediction: symmetric part is singular or ill-conditioned");
    }
    const Matrix ratio = lu.solve(anti);  // S^{-1} A
    const Scalar radius = Eigen::EigenSolver<Matrix>(ratio, false).eigenvalues().cwiseAbs().maxCoeff();
    if (radius >= 1.0) {
        throw OracleUnavailable("vf_bias_prediction: spectral radius of S^{-1}A is " + std::to_string(radius) +
                                " >= 1, series diverges");
    }

    Vector term = ratio * lu.solve(cost_grad);  // (S^{-1}A) S^{-1} grad
    Vector sum = term;
    for (int k = 1; k <= order; ++k) {
        term = ratio * (ratio * term);
        sum += term;
    }
    GradientEstimate<typename S::Grad> est;
    est.grad = sys.presyn_transpose(x_free, -2.0 * sum);
    est.method = Method::Oracle;
    est.beta_used = 0.0;
    return est;
}

}  // namespace eqprop
