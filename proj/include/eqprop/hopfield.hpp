#pragma once

#include <cmath>
#include <random>
#include <utility>

#include "eqprop/activation.hpp"
#include "eqprop/cost.hpp"
#include "eqprop/dynamics.hpp"
#include "eqprop/errors.hpp"
#include "eqprop/types.hpp"

namespace eqprop {

inline void apply_mask(Matrix& m, const BoolMask& mask) {
    m = mask.select(m, Matrix::Zero(m.rows(), m.cols()));
}

/// Connectivity mask for a single-hidden-layer network: the recurrent matrix
/// couples hidden and output units bidirectionally and has no intra-layer or
/// self connections. State ordering is [hidden, output].
inline BoolMask layered_mask(Index n_hidden, Index n_out) {
    const Index n = n_hidden + n_out;
    BoolMask m = BoolMask::Constant(n, n, false);
    m.block(0, n_hidden, n_hidden, n_out) = true;  // hidden <- output
    m.block(n_hidden, 0, n_out, n_hidden) = true;  // output <- hidden
    return m;
}

/// Strictly feedforward connectivity: only output <- hidden.
inline BoolMask feedforward_mask(Index n_hidden, Index n_out) {
    const Index n = n_hidden + n_out;
    BoolMask m = BoolMask::Constant(n, n, false);
    m.block(n_hidden, 0, n_out, n_hidden) = true;
    return m;
}

inline BoolMask dense_mask(Index n, bool self_connections = false) {
    BoolMask m = BoolMask::Constant(n, n, true);
    if (!self_connections) {
        for (Index i = 0; i < n; ++i) m(i, i) = false;
    }
    return m;
}

/// Input rows restricted to the hidden layer.
inline BoolMask layered_input_mask(Index n_hidden, Index n_out, Index n_in) {
    BoolMask m = BoolMask::Constant(n_hidden + n_out, n_in, false);
    m.topRows(n_hidden) = true;
    return m;
}

/// Parameters of the recurrent system: input projection J_in and coupling
/// matrix J_dyn, each with a fixed sparsity mask that every update preserves.
struct HopfieldParams {
    Matrix j_in;        // n_dyn x n_in
    Matrix j_dyn;       // n_dyn x n_dyn
    BoolMask dyn_mask;  // sparsity pattern of j_dyn
    BoolMask in_mask;   // sparsity pattern of j_in

    Index state_dim() const { return j_dyn.rows(); }
    Index input_dim() const { return j_in.cols(); }

    static HopfieldParams zeros(const BoolMask& dyn_mask, const BoolMask& in_mask) {
        HopfieldParams p;
        p.j_dyn = Matrix::Zero(dyn_mask.rows(), dyn_mask.cols());
        p.j_in = Matrix::Zero(in_mask.rows(), in_mask.cols());
        p.dyn_mask = dyn_mask;
        p.in_mask = in_mask;
        if (dyn_mask.rows() != dyn_mask.cols()) throw ConfigError("HopfieldParams: dyn_mask must be square");
        if (in_mask.rows() != dyn_mask.rows()) throw ConfigError("HopfieldParams: mask row counts disagree");
        return p;
    }

    void enforce_masks() {
        apply_mask(j_dyn, dyn_mask);
        apply_mask(j_in, in_mask);
    }
};

/// i.i.d. Normal(0, sigma^2) on unmasked entries, zero elsewhere.
inline void randomize_normal(HopfieldParams& p, std::mt19937_64& rng, Scalar sigma) {
    std::normal_distribution<Scalar> dist(0.0, sigma);
    for (Index j = 0; j < p.j_dyn.cols(); ++j)
        for (Index i = 0; i < p.j_dyn.rows(); ++i) p.j_dyn(i, j) = p.dyn_mask(i, j) ? dist(rng) : 0.0;
    for (Index j = 0; j < p.j_in.cols(); ++j)
        for (Index i = 0; i < p.j_in.rows(); ++i) p.j_in(i, j) = p.in_mask(i, j) ? dist(rng) : 0.0;
}

/// Same, but J_dyn is drawn symmetric (lower triangle mirrored). Requires a
/// symmetric mask.
inline void randomize_symmetric(HopfieldParams& p, std::mt19937_64& rng, Scalar sigma) {
    std::normal_distribution<Scalar> dist(0.0, sigma);
    const Index n = p.state_dim();
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j <= i; ++j) {
            if (p.dyn_mask(i, j) != p.dyn_mask(j, i)) {
                throw ConfigError("randomize_symmetric: mask is not symmetric");
            }
            const Scalar v = p.dyn_mask(i, j) ? dist(rng) : 0.0;
            p.j_dyn(i, j) = v;
            p.j_dyn(j, i) = v;
        }
    }
    for (Index j = 0; j < p.j_in.cols(); ++j)
        for (Index i = 0; i < p.j_in.rows(); ++i) p.j_in(i, j) = p.in_mask(i, j) ? dist(rng) : 0.0;
}

/// Parameter-shaped gradient mirroring HopfieldParams.
struct HopfieldGrad {
    Matrix j_in;
    Matrix j_dyn;

    static HopfieldGrad zeros_like(const HopfieldParams& p) {
        return {Matrix::Zero(p.j_in.rows(), p.j_in.cols()), Matrix::Zero(p.j_dyn.rows(), p.j_dyn.cols())};
    }
    void add(const HopfieldGrad& o) {
        j_in += o.j_in;
        j_dyn += o.j_dyn;
    }
    void scale(Scalar s) {
        j_in *= s;
        j_dyn *= s;
    }
    Vector flatten() const {
        Vector v(j_in.size() + j_dyn.size());
        v << Eigen::Map<const Vector>(j_in.data(), j_in.size()),
            Eigen::Map<const Vector>(j_dyn.data(), j_dyn.size());
        return v;
    }
};

/// The recurrent force field bound to one input sample:
///   F(x) = rho'(x) .* (J_dyn rho(x) + b) - x,   b = J_in u.
/// The input bias b is precomputed once per sample.
class HopfieldSystem {
  public:
    using Grad = HopfieldGrad;

    HopfieldSystem(const HopfieldParams& params, Vector input)
        : params_(&params), input_(std::move(input)), bias_(params.j_in * input_) {
        if (input_.size() != params.input_dim()) throw ConfigError("HopfieldSystem: input dimension mismatch");
    }

    Index state_dim() const { return params_->state_dim(); }
    const HopfieldParams& params() const { return *params_; }
    const Vector& input() const { return input_; }
    const Vector& bias() const { return bias_; }

    Vector force(const Vector& x) const {
        check_dim(x);
        Eigen::ArrayXd pre = (params_->j_dyn * rho(x.array()).matrix()).array() + bias_.array();
        return (rho_prime(x.array()) * pre - x.array()).matrix();
    }

    /// Analytic Jacobian: off-diagonal rho'_i J_ij rho'_j, diagonal
    /// rho''_i (J rho(x) + b)_i + rho'_i J_ii rho'_i - 1. The gain factor
    /// rho'_i rho'_j is formed first so a bitwise-symmetric coupling yields a
    /// bitwise-symmetric Jacobian (and an exactly zero antisymmetric part).
    Matrix jacobian(const Vector& x) const {
        check_dim(x);
        const Vector rp = rho_prime(x.array()).matrix();
        const Eigen::ArrayXd rs = rho_second(x.array());
        Eigen::ArrayXd pre = (params_->j_dyn * rho(x.array()).matrix()).array() + bias_.array();
        Matrix jac = (rp * rp.transpose()).cwiseProduct(params_->j_dyn);
        jac.diagonal().array() += rs * pre - 1.0;
        return jac;
    }

    /// Scalar energy, defined only for symmetric couplings:
    ///   E(x) = 1/2 ||x||^2 - 1/2 rho(x)' J_dyn rho(x) - rho(x)' b.
    Scalar energy(const Vector& x) const {
        check_dim(x);
        require_symmetric();
        const Vector r = rho(x.array()).matrix();
        return 0.5 * x.squaredNorm() - 0.5 * r.dot(params_->j_dyn * r) - r.dot(bias_);
    }

    /// dE/dtheta at x, with the symmetric coupling treated as one tied
    /// parameter per unordered pair: off-diagonal -rho_i rho_j, diagonal
    /// -1/2 rho_i^2, and dE/dJ_in = -rho(x) u'.
    Grad energy_param_gradient(const Vector& x) const {
        check_dim(x);
        require_symmetric();
        const Vector r = rho(x.array()).matrix();
        Grad g;
        g.j_in = -r * input_.transpose();
        g.j_dyn = -r * r.transpose();
        g.j_dyn.diagonal() *= 0.5;
        apply_mask(g.j_in, params_->in_mask);
        apply_mask(g.j_dyn, params_->dyn_mask);
        return g;
    }

    /// (dF/dtheta)' v evaluated at x: the presynaptic transpose.
    /// J_in entry (i,k): v_i rho'(x_i) u_k; J_dyn entry (i,j): v_i rho'(x_i) rho(x_j).
    Grad presyn_transpose(const Vector& x, const Vector& v) const {
        check_dim(x);
        check_dim(v);
        const Vector w = (v.array() * rho_prime(x.array())).matrix();
        Grad g;
        g.j_in = w * input_.transpose();
        g.j_dyn = w * rho(x.array()).matrix().transpose();
        apply_mask(g.j_in, params_->in_mask);
        apply_mask(g.j_dyn, params_->dyn_mask);
        return g;
    }

  private:
    void check_dim(const Vector& x) const {
        if (x.size() != state_dim()) throw ConfigError("HopfieldSystem: state dimension mismatch");
    }
    void require_symmetric() const {
        const Matrix& j = params_->j_dyn;
        const Scalar scale = std::max(1.0, j.cwiseAbs().maxCoeff());
        if ((j - j.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw ContractViolation("HopfieldSystem: energy requires a symmetric coupling matrix");
        }
    }

    const HopfieldParams* params_;
    Vector input_;
    Vector bias_;
};

/// Doubled-state Hamiltonian of the recurrent system, with S and A the
/// symmetric and antisymmetric parts of J_dyn:
///   H = -1/2 rho(z)'S rho(z) + 1/2 rho(z')'S rho(z') - rho(z)'A rho(z')
///       - (rho(z) - rho(z'))' b + 1/2 (||z||^2 - ||z'||^2)
///       + beta/2 (C(z) + C(z')).
/// Its saddle flow (z descends, z' ascends) reproduces the original force on
/// the diagonal z = z'.
inline Scalar hopfield_dyadic_energy(const HopfieldParams& p, const Vector& input, const Vector& z,
                                     const Vector& zp, Scalar beta, const QuadraticCost& cost) {
    if (z.size() != p.state_dim() || zp.size() != p.state_dim()) {
        throw ConfigError("hopfield_dyadic_energy: state dimension mismatch");
    }
    const Matrix s = symmetric_part(p.j_dyn);
    const Matrix a = antisymmetric_part(p.j_dyn);
    const Vector b = p.j_in * input;
    const Vector rz = rho(z.array()).matrix();
    const Vector rzp = rho(zp.array()).matrix();
    return -0.5 * rz.dot(s * rz) + 0.5 * rzp.dot(s * rzp) - rz.dot(a * rzp) - (rz - rzp).dot(b) +
           0.5 * (z.squaredNorm() - zp.squaredNorm()) + 0.5 * beta * (cost.value(z) + cost.value(zp));
}

}  // namespace eqprop
