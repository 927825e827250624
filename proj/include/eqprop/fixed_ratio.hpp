#pragma once

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "eqprop/hopfield.hpp"

namespace eqprop {

/// Index of the strictly-lower-triangular pair (i, j), 0-based, j < i.
/// Enumerates rows top to bottom: (1,0) -> 0, (2,0) -> 1, (2,1) -> 2, ...
/// Bijection onto {0, ..., n(n-1)/2 - 1}.
inline Index pair_index(Index i, Index j, Index n) {
    if (!(0 <= j && j < i && i < n)) throw ConfigError("pair_index: requires 0 <= j < i < n");
    return i * (i - 1) / 2 + j;
}

inline Index pair_count(Index n) { return n * (n - 1) / 2; }

/// Inverse of pair_index: the (i, j) pair for each k, in k order.
inline std::vector<std::pair<Index, Index>> lower_pairs(Index n) {
    std::vector<std::pair<Index, Index>> pairs;
    pairs.reserve(static_cast<size_t>(pair_count(n)));
    for (Index i = 1; i < n; ++i)
        for (Index j = 0; j < i; ++j) pairs.emplace_back(i, j);
    return pairs;
}

/// Coupling matrix held at a fixed structural asymmetry ratio r in [0, 1]:
///   J_dyn = gamma * (c_S * S + c_A * A),
///   c_S = sqrt(1 - r^2) / ||S||_F,  c_A = r / ||A||_F,
/// with S symmetric (off-diagonal theta_s, diagonal xi) and A antisymmetric
/// (+theta_a below the diagonal, -theta_a above). Entries whose pair is
/// masked out stay exactly zero, so the stored vectors carry the Frobenius
/// norms directly: ||S||_F^2 = sum xi^2 + 2 sum theta_s^2,
/// ||A||_F^2 = 2 sum theta_a^2.
struct FixedRatioParams {
    Vector theta_s;  // length n(n-1)/2
    Vector theta_a;  // length n(n-1)/2
    Vector xi;       // length n
    Scalar gamma = 1.0;
    Scalar r_str = 0.0;
    Matrix j_in;
    BoolMask dyn_mask;
    BoolMask in_mask;

    Index state_dim() const { return xi.size(); }
    Index input_dim() const { return j_in.cols(); }

    static FixedRatioParams zeros(const BoolMask& dyn_mask, const BoolMask& in_mask, Scalar r_str) {
        if (dyn_mask.rows() != dyn_mask.cols()) throw ConfigError("FixedRatioParams: dyn_mask must be square");
        if (!(0.0 <= r_str && r_str <= 1.0)) throw ConfigError("FixedRatioParams: r_str must lie in [0, 1]");
        const Index n = dyn_mask.rows();
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < i; ++j)
                if (dyn_mask(i, j) != dyn_mask(j, i))
                    throw ConfigError("FixedRatioParams: dyn_mask must be symmetric");
        FixedRatioParams p;
        p.theta_s = Vector::Zero(pair_count(n));
        p.theta_a = Vector::Zero(pair_count(n));
        p.xi = Vector::Zero(n);
        p.j_in = Matrix::Zero(in_mask.rows(), in_mask.cols());
        p.dyn_mask = dyn_mask;
        p.in_mask = in_mask;
        p.r_str = r_str;
        return p;
    }

    void enforce_masks() {
        const Index n = state_dim();
        for (Index i = 1; i < n; ++i) {
            for (Index j = 0; j < i; ++j) {
                if (!dyn_mask(i, j)) {
                    const Index k = pair_index(i, j, n);
                    theta_s(k) = 0.0;
                    theta_a(k) = 0.0;
                }
            }
        }
        for (Index i = 0; i < n; ++i)
            if (!dyn_mask(i, i)) xi(i) = 0.0;
        apply_mask(j_in, in_mask);
    }

    Scalar frobenius_s() const { return std::sqrt(xi.squaredNorm() + 2.0 * theta_s.squaredNorm()); }
    Scalar frobenius_a() const { return std::sqrt(2.0 * theta_a.squaredNorm()); }

    Matrix assemble_symmetric() const {
        const Index n = state_dim();
        Matrix s = Matrix::Zero(n, n);
        s.diagonal() = xi;
        for (Index i = 1; i < n; ++i)
            for (Index j = 0; j < i; ++j) s(i, j) = s(j, i) = theta_s(pair_index(i, j, n));
        return s;
    }

    Matrix assemble_antisymmetric() const {
        const Index n = state_dim();
        Matrix a = Matrix::Zero(n, n);
        for (Index i = 1; i < n; ++i) {
            for (Index j = 0; j < i; ++j) {
                const Scalar v = theta_a(pair_index(i, j, n));
                a(i, j) = v;
                a(j, i) = -v;
            }
        }
        return a;
    }

    /// The assembled coupling matrix. Throws if either component has zero norm.
    Matrix assemble() const {
        const Scalar fs = frobenius_s();
        const Scalar fa = frobenius_a();
        if (fs <= 0.0 || fa <= 0.0) {
            throw DegenerateParameterization("FixedRatioParams: zero-norm component (F_S=" +
                                             std::to_string(fs) + ", F_A=" + std::to_string(fa) + ")");
        }
        const Scalar cs = std::sqrt(1.0 - r_str * r_str) / fs;
        const Scalar ca = r_str / fa;
        Matrix j = gamma * (cs * assemble_symmetric() + ca * assemble_antisymmetric());
        apply_mask(j, dyn_mask);
        return j;
    }
};

/// theta_s, theta_a, xi ~ Normal(0, sigma^2) i.i.d. on unmasked entries,
/// gamma = sqrt(n_dyn). Deterministic for a given seed.
inline FixedRatioParams fixed_ratio_init(const BoolMask& dyn_mask, const BoolMask& in_mask, Scalar sigma,
                                         Scalar r_str, uint64_t seed) {
    FixedRatioParams p = FixedRatioParams::zeros(dyn_mask, in_mask, r_str);
    const Index n = p.state_dim();
    std::mt19937_64 rng(seed);
    std::normal_distribution<Scalar> dist(0.0, sigma);
    for (Index i = 1; i < n; ++i)
        for (Index j = 0; j < i; ++j)
            if (dyn_mask(i, j)) p.theta_s(pair_index(i, j, n)) = dist(rng);
    for (Index i = 1; i < n; ++i)
        for (Index j = 0; j < i; ++j)
            if (dyn_mask(i, j)) p.theta_a(pair_index(i, j, n)) = dist(rng);
    for (Index i = 0; i < n; ++i)
        if (dyn_mask(i, i)) p.xi(i) = dist(rng);
    for (Index j = 0; j < p.j_in.cols(); ++j)
        for (Index i = 0; i < p.j_in.rows(); ++i)
            if (in_mask(i, j)) p.j_in(i, j) = dist(rng);
    p.gamma = std::sqrt(static_cast<Scalar>(n));
    return p;
}

struct FixedRatioGrad {
    Vector theta_s;
    Vector theta_a;
    Vector xi;
    Scalar gamma = 0.0;
    Matrix j_in;

    static FixedRatioGrad zeros_like(const FixedRatioParams& p) {
        return {Vector::Zero(p.theta_s.size()), Vector::Zero(p.theta_a.size()), Vector::Zero(p.xi.size()),
                0.0, Matrix::Zero(p.j_in.rows(), p.j_in.cols())};
    }
    void add(const FixedRatioGrad& o) {
        theta_s += o.theta_s;
        theta_a += o.theta_a;
        xi += o.xi;
        gamma += o.gamma;
        j_in += o.j_in;
    }
    void scale(Scalar s) {
        theta_s *= s;
        theta_a *= s;
        xi *= s;
        gamma *= s;
        j_in *= s;
    }
    Vector flatten() const {
        Vector v(theta_s.size() + theta_a.size() + xi.size() + 1 + j_in.size());
        v << theta_s, theta_a, xi, gamma, Eigen::Map<const Vector>(j_in.data(), j_in.size());
        return v;
    }
};

/// Force field of the fixed-ratio coupling bound to one input sample.
/// The presynaptic transpose differentiates through the assembly, including
/// the normalization terms contributed by c_S and c_A.
class FixedRatioSystem {
  public:
    using Grad = FixedRatioGrad;

    FixedRatioSystem(const FixedRatioParams& params, Vector input)
        : params_(&params),
          s_tilde_(params.assemble_symmetric()),
          a_tilde_(params.assemble_antisymmetric()),
          fs_(params.frobenius_s()),
          fa_(params.frobenius_a()),
          hop_(HopfieldParams{params.j_in, params.assemble(), params.dyn_mask, params.in_mask}),
          base_(hop_, std::move(input)) {
        cs_ = std::sqrt(1.0 - params.r_str * params.r_str) / fs_;
        ca_ = params.r_str / fa_;
    }

    FixedRatioSystem(const FixedRatioSystem&) = delete;
    FixedRatioSystem& operator=(const FixedRatioSystem&) = delete;

    Index state_dim() const { return base_.state_dim(); }
    const FixedRatioParams& params() const { return *params_; }
    const Matrix& coupling() const { return hop_.j_dyn; }

    Vector force(const Vector& x) const { return base_.force(x); }
    Matrix jacobian(const Vector& x) const { return base_.jacobian(x); }

    Grad presyn_transpose(const Vector& x, const Vector& v) const {
        const FixedRatioParams& p = *params_;
        const Index n = state_dim();
        const Eigen::ArrayXd w = v.array() * rho_prime(x.array());
        const Vector r = rho(x.array()).matrix();
        const Vector s_r = s_tilde_ * r;
        const Vector a_r = a_tilde_ * r;
        const Scalar ds = (w * s_r.array()).sum();  // v' (rho' .* S rho)
        const Scalar da = (w * a_r.array()).sum();

        Grad g = Grad::zeros_like(p);
        const Scalar gcs = p.gamma * cs_;
        const Scalar gca = p.gamma * ca_;
        for (Index i = 1; i < n; ++i) {
            for (Index j = 0; j < i; ++j) {
                if (!p.dyn_mask(i, j)) continue;
                const Index k = pair_index(i, j, n);
                g.theta_s(k) = gcs * (-2.0 * p.theta_s(k) / (fs_ * fs_) * ds + w(i) * r(j) + w(j) * r(i));
                g.theta_a(k) = gca * (-2.0 * p.theta_a(k) / (fa_ * fa_) * da + w(i) * r(j) - w(j) * r(i));
            }
        }
        for (Index m = 0; m < n; ++m) {
            if (!p.dyn_mask(m, m)) continue;
            g.xi(m) = gcs * (-p.xi(m) / (fs_ * fs_) * ds + w(m) * r(m));
        }
        g.gamma = cs_ * ds + ca_ * da;  // v' (rho' .* (J/gamma) rho)
        g.j_in = w.matrix() * base_.input().transpose();
        apply_mask(g.j_in, p.in_mask);
        return g;
    }

  private:
    const FixedRatioParams* params_;
    Matrix s_tilde_;
    Matrix a_tilde_;
    Scalar fs_, fa_, cs_ = 0.0, ca_ = 0.0;
    HopfieldParams hop_;
    HopfieldSystem base_;
};

}  // namespace eqprop
