#pragma once

#include <cmath>
#include <concepts>
#include <string>
#include <utility>

#include "eqprop/errors.hpp"
#include "eqprop/types.hpp"

namespace eqprop {

/// A dynamical system exposing a force field F(x) over a fixed-dimension state.
/// Parameters and static inputs are bound into the object; the force is pure.
template <class S>
concept ForceSystem = requires(const S& s, const Vector& x) {
    { s.state_dim() } -> std::convertible_to<Index>;
    { s.force(x) } -> std::convertible_to<Vector>;
};

/// Systems that also provide an analytic state Jacobian dF/dx.
template <class S>
concept HasAnalyticJacobian = ForceSystem<S> && requires(const S& s, const Vector& x) {
    { s.jacobian(x) } -> std::convertible_to<Matrix>;
};

enum class RelaxMode {
    FixedSteps,     ///< run exactly max_steps Euler steps
    Tolerance,      ///< run until the residual norm drops below residual_tol (max_steps caps)
    WhicheverFirst  ///< stop at whichever of the two comes first
};

struct RelaxationConfig {
    Scalar dt = 0.5;
    long max_steps = 100;
    Scalar residual_tol = 0.0;  ///< infinity-norm threshold on F; 0 disables
    RelaxMode mode = RelaxMode::FixedSteps;

    void validate() const {
        if (!(dt > 0.0)) throw ConfigError("RelaxationConfig: dt must be positive");
        if (max_steps < 1) throw ConfigError("RelaxationConfig: max_steps must be >= 1");
        if (residual_tol < 0.0) throw ConfigError("RelaxationConfig: residual_tol must be non-negative");
    }
};

struct EquilibriumResult {
    Vector state;
    long steps_taken = 0;
    Scalar final_residual = 0.0;
    bool converged = false;
};

inline Scalar inf_norm(const Vector& v) { return v.lpNorm<Eigen::Infinity>(); }

namespace detail {

inline constexpr Scalar kStateBound = 1e6;  // divergence guard on |x_i|

inline void check_state_finite(const Vector& x, long step) {
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kStateBound) {
        throw DivergenceError("relax: state diverged at step " + std::to_string(step), step);
    }
}

struct NoExtraForce {
    Vector operator()(const Vector& x) const { return Vector::Zero(x.size()); }
};

}  // namespace detail

/// Explicit-Euler relaxation of dx/dt = F(x) + extra(x) until the configured
/// stop condition. `extra` is an additive state-dependent term (cost nudges,
/// Jacobian corrections); pass detail::NoExtraForce{} or use the overload below
/// for the plain dynamics. Deterministic given its inputs.
template <ForceSystem S, class ExtraForce>
EquilibriumResult relax(const S& sys, const Vector& x0, const RelaxationConfig& cfg, ExtraForce&& extra) {
    cfg.validate();
    if (x0.size() != sys.state_dim()) {
        throw ConfigError("relax: initial state has dimension " + std::to_string(x0.size()) +
                          ", system expects " + std::to_string(sys.state_dim()));
    }
    detail::check_state_finite(x0, 0);

    const bool check_tol = cfg.mode != RelaxMode::FixedSteps;
    Vector x = x0;
    Vector r = sys.force(x) + extra(x);
    Scalar res = r.lpNorm<Eigen::Infinity>();
    long step = 0;
    while (step < cfg.max_steps) {
        if (check_tol && res <= cfg.residual_tol) break;
        x += cfg.dt * r;
        ++step;
        detail::check_state_finite(x, step);
        r = sys.force(x) + extra(x);
        res = r.lpNorm<Eigen::Infinity>();
    }

    EquilibriumResult out;
    out.state = std::move(x);
    out.steps_taken = step;
    out.final_residual = res;
    out.converged = check_tol ? (res <= cfg.residual_tol) : true;
    return out;
}

template <ForceSystem S>
EquilibriumResult relax(const S& sys, const Vector& x0, const RelaxationConfig& cfg) {
    return relax(sys, x0, cfg, detail::NoExtraForce{});
}

/// Central-difference Jacobian of the force field, step h per coordinate.
template <ForceSystem S>
Matrix numeric_jacobian(const S& sys, const Vector& x, Scalar h = 1e-5) {
    const Index n = sys.state_dim();
    if (x.size() != n) throw ConfigError("numeric_jacobian: state dimension mismatch");
    Matrix jac(n, n);
    Vector xp = x, xm = x;
    for (Index j = 0; j < n; ++j) {
        xp(j) = x(j) + h;
        xm(j) = x(j) - h;
        jac.col(j) = (sys.force(xp) - sys.force(xm)) / (2.0 * h);
        xp(j) = x(j);
        xm(j) = x(j);
    }
    return jac;
}

/// Jacobian of the force at x: analytic when the system declares one,
/// central finite differences otherwise.
template <ForceSystem S>
Matrix system_jacobian(const S& sys, const Vector& x) {
    if constexpr (HasAnalyticJacobian<S>) {
        return sys.jacobian(x);
    } else {
        return numeric_jacobian(sys, x);
    }
}

template <typename Derived>
Matrix symmetric_part(const Eigen::MatrixBase<Derived>& j) {
    if (j.rows() != j.cols()) throw ConfigError("symmetric_part: matrix must be square");
    return (j + j.transpose()) / 2.0;
}

template <typename Derived>
Matrix antisymmetric_part(const Eigen::MatrixBase<Derived>& j) {
    if (j.rows() != j.cols()) throw ConfigError("antisymmetric_part: matrix must be square");
    return (j - j.transpose()) / 2.0;
}

/// Newton iteration on G(x) = 0 from x0, for stationarity conditions that
/// plain forward integration cannot reach (marginally stable or anti-damped
/// augmented dynamics). `g` returns the residual, `gjac` its Jacobian.
/// Converges in one step for affine G.
template <class G, class GJac>
EquilibriumResult newton_fixed_point(G&& g, GJac&& gjac, const Vector& x0, Scalar tol = 1e-12,
                                     long max_iter = 50) {
    Vector x = x0;
    Vector r = g(x);
    Scalar res = r.lpNorm<Eigen::Infinity>();
    long it = 0;
    while (res > tol && it < max_iter) {
        Matrix j = gjac(x);
        Eigen::PartialPivLU<Matrix> lu(j);
        x -= lu.solve(r);
        ++it;
        detail::check_state_finite(x, it);
        r = g(x);
        res = r.lpNorm<Eigen::Infinity>();
    }
    EquilibriumResult out;
    out.state = std::move(x);
    out.steps_taken = it;
    out.final_residual = res;
    out.converged = res <= tol;
    return out;
}

}  // namespace eqprop
