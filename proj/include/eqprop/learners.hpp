#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eqprop/cost.hpp"
#include "eqprop/dynamics.hpp"

namespace eqprop {

/// Systems whose parameter influence (dF/dtheta)' v is available; Grad is the
/// parameter-shaped gradient type mirroring the parameterization.
template <class S>
concept PresynapticSystem = ForceSystem<S> && requires(const S& s, const Vector& x, const Vector& v) {
    typename S::Grad;
    { s.presyn_transpose(x, v) } -> std::convertible_to<typename S::Grad>;
};

/// Conservative systems additionally exposing dE/dtheta.
template <class S>
concept EnergySystem = PresynapticSystem<S> && requires(const S& s, const Vector& x) {
    { s.energy(x) } -> std::convertible_to<Scalar>;
    { s.energy_param_gradient(x) } -> std::convertible_to<typename S::Grad>;
};

enum class Method { EP, VF, AEP, DyadicEP, Oracle };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::EP: return "EP";
        case Method::VF: return "VF";
        case Method::AEP: return "AEP";
        case Method::DyadicEP: return "DyadicEP";
        case Method::Oracle: return "oracle";
    }
    return "?";
}

/// How nudged stationary states are located. EulerRelax is the physical
/// protocol (forward integration). Newton solves the same stationarity
/// conditions by root finding; it is the right tool when the augmented
/// dynamics are not forward-stable (e.g. purely antisymmetric Jacobians,
/// whose -beta phase is anti-damped) or when oracle-grade equilibria are
/// needed at tiny beta.
enum class NudgedSolver { EulerRelax, Newton };

struct NudgeConfig {
    Scalar beta = 0.5;
    RelaxationConfig relax_cfg;
    NudgedSolver solver = NudgedSolver::EulerRelax;

    void validate() const {
        if (beta == 0.0) throw ConfigError("NudgeConfig: beta must be nonzero");
        relax_cfg.validate();
    }
};

struct PhaseReport {
    std::string name;
    long steps = 0;
    Scalar residual = 0.0;
    bool converged = false;
};

struct Diagnostics {
    std::vector<PhaseReport> phases;

    bool all_converged() const {
        for (const auto& p : phases)
            if (!p.converged) return false;
        return true;
    }
};

/// A parameter-shaped estimate of -dC/dtheta (a descent direction), to be
/// applied as delta_theta = epsilon * grad.
template <class G>
struct GradientEstimate {
    G grad;
    Method method = Method::Oracle;
    Scalar beta_used = 0.0;
    Diagnostics diagnostics;
    std::optional<Vector> free_state;  // populated by learners that run their own free phase
};

namespace detail {

/// Stationary state of F(x) - signed_beta * dC/dx - correction*(x - x_free) = 0,
/// reached from x_free.
template <PresynapticSystem S>
EquilibriumResult nudged_equilibrium(const S& sys, const QuadraticCost& cost, const Vector& x_free,
                                     Scalar signed_beta, const RelaxationConfig& cfg, NudgedSolver solver,
                                     const Matrix* correction) {
    auto augmented = [&](const Vector& x) -> Vector {
        Vector f = sys.force(x) - signed_beta * cost.gradient(x);
        if (correction) f.noalias() -= (*correction) * (x - x_free);
        return f;
    };
    if (solver == NudgedSolver::EulerRelax) {
        auto extra = [&](const Vector& x) -> Vector {
            Vector e = -signed_beta * cost.gradient(x);
            if (correction) e.noalias() -= (*correction) * (x - x_free);
            return e;
        };
        return relax(sys, x_free, cfg, extra);
    }
    auto jac = [&](const Vector& x) -> Matrix {
        Matrix j = system_jacobian(sys, x);
        j.diagonal() -= signed_beta * cost.hessian_diagonal();
        if (correction) j -= *correction;
        return j;
    };
    return newton_fixed_point(augmented, jac, x_free, std::max(cfg.residual_tol, 1e-13), cfg.max_steps);
}

inline PhaseReport report(const std::string& name, const EquilibriumResult& r) {
    return {name, r.steps_taken, r.final_residual, r.converged};
}

}  // namespace detail

/// Contrastive update of a conservative system: relax with the cost force
/// added for +/-beta and contrast dE/dtheta at the two nudged states,
///   estimate = -(1/2 beta) (dE/dtheta(x_plus) - dE/dtheta(x_minus)).
/// For the symmetric coupling this recovers the gradient with respect to the
/// tied parameterization (each unordered pair is one parameter).
template <EnergySystem S>
GradientEstimate<typename S::Grad> ep_update(const S& sys, const QuadraticCost& cost, const NudgeConfig& nudge,
                                             const Vector& x_free) {
    nudge.validate();
    sys.energy(x_free);  // asserts the symmetry contract before relaxing
    const auto plus =
        detail::nudged_equilibrium(sys, cost, x_free, nudge.beta, nudge.relax_cfg, nudge.solver, nullptr);
    const auto minus =
        detail::nudged_equilibrium(sys, cost, x_free, -nudge.beta, nudge.relax_cfg, nudge.solver, nullptr);

    auto gp = sys.energy_param_gradient(plus.state);
    auto gm = sys.energy_param_gradient(minus.state);
    gm.scale(-1.0);
    gp.add(gm);
    gp.scale(-1.0 / (2.0 * nudge.beta));

    GradientEstimate<typename S::Grad> est;
    est.grad = std::move(gp);
    est.method = Method::EP;
    est.beta_used = nudge.beta;
    est.diagnostics.phases = {detail::report("nudged+", plus), detail::report("nudged-", minus)};
    return est;
}

/// Uncorrected contrastive update: relax F - beta dC/dx for +/-beta and apply
/// the presynaptic transpose to the state displacement,
///   estimate = (dF/dtheta)' (x_plus - x_minus) / (2 beta).
/// Exact only for symmetric Jacobians; for a purely antisymmetric Jacobian it
/// returns the negative of the true descent direction.
template <PresynapticSystem S>
GradientEstimate<typename S::Grad> vf_update(const S& sys, const QuadraticCost& cost, const NudgeConfig& nudge,
                                             const Vector& x_free) {
    nudge.validate();
    const auto plus =
        detail::nudged_equilibrium(sys, cost, x_free, nudge.beta, nudge.relax_cfg, nudge.solver, nullptr);
    const auto minus =
        detail::nudged_equilibrium(sys, cost, x_free, -nudge.beta, nudge.relax_cfg, nudge.solver, nullptr);

    GradientEstimate<typename S::Grad> est;
    est.grad = sys.presyn_transpose(x_free, (plus.state - minus.state) / (2.0 * nudge.beta));
    est.method = Method::VF;
    est.beta_used = nudge.beta;
    est.diagnostics.phases = {detail::report("nudged+", plus), detail::report("nudged-", minus)};
    return est;
}

/// Jacobian-corrected contrastive update. The antisymmetric part of the
/// Jacobian is computed once at the free equilibrium and held fixed; the
/// nudged phases integrate
///   dx/dt = F(x) - beta dC/dx - 2 A (x - x_free),
/// whose linearization at x_free has Jacobian J', so the displacement carries
/// the exact adjoint sensitivity in the beta -> 0 limit.
template <PresynapticSystem S>
GradientEstimate<typename S::Grad> aep_update(const S& sys, const QuadraticCost& cost, const NudgeConfig& nudge,
                                              const Vector& x_free) {
    nudge.validate();
    const Matrix two_a = 2.0 * antisymmetric_part(system_jacobian(sys, x_free));
    const auto plus =
        detail::nudged_equilibrium(sys, cost, x_free, nudge.beta, nudge.relax_cfg, nudge.solver, &two_a);
    const auto minus =
        detail::nudged_equilibrium(sys, cost, x_free, -nudge.beta, nudge.relax_cfg, nudge.solver, &two_a);

    GradientEstimate<typename S::Grad> est;
    est.grad = sys.presyn_transpose(x_free, (plus.state - minus.state) / (2.0 * nudge.beta));
    est.method = Method::AEP;
    est.beta_used = nudge.beta;
    est.diagnostics.phases = {detail::report("nudged+", plus), detail::report("nudged-", minus)};
    return est;
}

/// Right-hand side of the doubled-state saddle flow at nudging strength beta:
///   dz/dt  = F(m) + 1/2 J(m)' d - beta/2 dC/dm
///   dz'/dt = F(m) - 1/2 J(m)' d + beta/2 dC/dm
/// with m = (z + z')/2 and d = z - z'. The mean follows the original
/// dynamics exactly; the difference obeys dd/dt = J(m)' d - beta dC/dm.
template <PresynapticSystem S>
std::pair<Vector, Vector> dyadic_saddle_rhs(const S& sys, const Vector& z, const Vector& zp, Scalar beta,
                                            const QuadraticCost& cost) {
    const Vector m = (z + zp) / 2.0;
    const Vector d = z - zp;
    const Vector f = sys.force(m);
    const Vector coupling = 0.5 * (system_jacobian(sys, m).transpose() * d);
    const Vector nudge_term = (beta / 2.0) * cost.gradient(m);
    return {f + coupling - nudge_term, f - coupling + nudge_term};
}

struct DyadicResult {
    Vector z;
    Vector zp;
    long steps_taken = 0;
    Scalar final_residual = 0.0;
    bool converged = false;
};

/// Explicit-Euler integration of the coupled saddle flow.
template <PresynapticSystem S>
DyadicResult relax_dyadic(const S& sys, const Vector& z0, const Vector& zp0, Scalar beta,
                          const QuadraticCost& cost, const RelaxationConfig& cfg) {
    cfg.validate();
    if (z0.size() != sys.state_dim() || zp0.size() != sys.state_dim()) {
        throw ConfigError("relax_dyadic: state dimension mismatch");
    }
    const bool check_tol = cfg.mode != RelaxMode::FixedSteps;
    Vector z = z0, zp = zp0;
    auto [fz, fzp] = dyadic_saddle_rhs(sys, z, zp, beta, cost);
    Scalar res = std::max(inf_norm(fz), inf_norm(fzp));
    long step = 0;
    while (step < cfg.max_steps) {
        if (check_tol && res <= cfg.residual_tol) break;
        z += cfg.dt * fz;
        zp += cfg.dt * fzp;
        ++step;
        detail::check_state_finite(z, step);
        detail::check_state_finite(zp, step);
        std::tie(fz, fzp) = dyadic_saddle_rhs(sys, z, zp, beta, cost);
        res = std::max(inf_norm(fz), inf_norm(fzp));
    }
    DyadicResult out;
    out.z = std::move(z);
    out.zp = std::move(zp);
    out.steps_taken = step;
    out.final_residual = res;
    out.converged = check_tol ? (res <= cfg.residual_tol) : true;
    return out;
}

/// Single-phase doubled-state update. Phase 1 relaxes the mean under the
/// original force from z0 (the difference stays identically zero when both
/// copies start equal, so only the mean needs integrating). Phase 2 runs the
/// coupled flow once at +beta; the settled difference carries the adjoint
/// state, and
///   estimate = (dF/dtheta)'(m_free) (z - z') / beta.
/// The presynaptic factor is evaluated at the free mean, which agrees with
/// the nudged mean to O(beta^2).
template <PresynapticSystem S>
GradientEstimate<typename S::Grad> dyadic_update(const S& sys, const QuadraticCost& cost,
                                                 const NudgeConfig& nudge, const Vector& z0,
                                                 const RelaxationConfig& free_cfg) {
    nudge.validate();
    const EquilibriumResult free_phase = relax(sys, z0, free_cfg);
    const Vector& m = free_phase.state;

    GradientEstimate<typename S::Grad> est;
    est.method = Method::DyadicEP;
    est.beta_used = nudge.beta;
    est.free_state = m;
    est.diagnostics.phases = {detail::report("free", free_phase)};

    if (nudge.solver == NudgedSolver::Newton) {
        // Stationary difference solves J(m)' d = beta dC/dm directly.
        const Matrix jt = system_jacobian(sys, m).transpose();
        Eigen::PartialPivLU<Matrix> lu(jt);
        const Vector d = nudge.beta * lu.solve(cost.gradient(m));
        const Scalar res = inf_norm(jt * d - nudge.beta * cost.gradient(m));
        est.diagnostics.phases.push_back({"nudged", 1, res, true});
        est.grad = sys.presyn_transpose(m, d / nudge.beta);
        return est;
    }

    const DyadicResult nudged = relax_dyadic(sys, m, m, nudge.beta, cost, nudge.relax_cfg);
    est.diagnostics.phases.push_back({"nudged", nudged.steps_taken, nudged.final_residual, nudged.converged});
    est.grad = sys.presyn_transpose(m, (nudged.z - nudged.zp) / nudge.beta);
    return est;
}

}  // namespace eqprop
