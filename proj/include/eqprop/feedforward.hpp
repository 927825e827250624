#pragma once

#include <utility>

#include "eqprop/cost.hpp"
#include "eqprop/hopfield.hpp"

namespace eqprop {

/// Strictly feedforward two-layer network. The equivalent recurrent coupling
/// is the block lower-triangular matrix [[0, 0], [W, 0]] over [hidden, output].
struct FeedforwardParams {
    Matrix j_in;  // hidden x n_in
    Matrix w;     // out x hidden

    Index hidden_dim() const { return j_in.rows(); }
    Index output_dim() const { return w.rows(); }
    Index state_dim() const { return hidden_dim() + output_dim(); }
    Index input_dim() const { return j_in.cols(); }
};

inline HopfieldParams to_hopfield(const FeedforwardParams& p) {
    const Index nh = p.hidden_dim();
    const Index no = p.output_dim();
    HopfieldParams h = HopfieldParams::zeros(feedforward_mask(nh, no), layered_input_mask(nh, no, p.input_dim()));
    h.j_in.topRows(nh) = p.j_in;
    h.j_dyn.block(nh, 0, no, nh) = p.w;
    return h;
}

struct FeedforwardGrad {
    Matrix j_in;
    Matrix w;

    static FeedforwardGrad zeros_like(const FeedforwardParams& p) {
        return {Matrix::Zero(p.j_in.rows(), p.j_in.cols()), Matrix::Zero(p.w.rows(), p.w.cols())};
    }
    void add(const FeedforwardGrad& o) {
        j_in += o.j_in;
        w += o.w;
    }
    void scale(Scalar s) {
        j_in *= s;
        w *= s;
    }
    Vector flatten() const {
        Vector v(j_in.size() + w.size());
        v << Eigen::Map<const Vector>(j_in.data(), j_in.size()), Eigen::Map<const Vector>(w.data(), w.size());
        return v;
    }
};

/// Free-running force field of the feedforward network:
///   F_h = rho'(h) .* (J_in u) - h
///   F_o = rho'(o) .* (W rho(h)) - o
class FeedforwardSystem {
  public:
    using Grad = FeedforwardGrad;

    FeedforwardSystem(const FeedforwardParams& params, Vector input)
        : params_(&params), input_(std::move(input)), bias_(params.j_in * input_) {
        if (input_.size() != params.input_dim()) throw ConfigError("FeedforwardSystem: input dimension mismatch");
    }

    Index state_dim() const { return params_->state_dim(); }
    const FeedforwardParams& params() const { return *params_; }
    const Vector& input() const { return input_; }

    Vector force(const Vector& x) const {
        check_dim(x);
        const Index nh = params_->hidden_dim();
        const Index no = params_->output_dim();
        const auto h = x.head(nh);
        const auto o = x.tail(no);
        Vector f(x.size());
        f.head(nh) = (rho_prime(h.array()) * bias_.array() - h.array()).matrix();
        f.tail(no) =
            (rho_prime(o.array()) * (params_->w * rho(h.array()).matrix()).array() - o.array()).matrix();
        return f;
    }

    Matrix jacobian(const Vector& x) const {
        check_dim(x);
        const Index nh = params_->hidden_dim();
        const Index no = params_->output_dim();
        const auto h = x.head(nh);
        const auto o = x.tail(no);
        Matrix jac = Matrix::Zero(x.size(), x.size());
        jac.topLeftCorner(nh, nh).diagonal() = (rho_second(h.array()) * bias_.array() - 1.0).matrix();
        jac.bottomLeftCorner(no, nh) = rho_prime(o.array()).matrix().asDiagonal() * params_->w *
                                       rho_prime(h.array()).matrix().asDiagonal();
        jac.bottomRightCorner(no, no).diagonal() =
            (rho_second(o.array()) * (params_->w * rho(h.array()).matrix()).array() - 1.0).matrix();
        return jac;
    }

    Grad presyn_transpose(const Vector& x, const Vector& v) const {
        check_dim(x);
        check_dim(v);
        const Index nh = params_->hidden_dim();
        const Index no = params_->output_dim();
        const auto h = x.head(nh);
        const auto o = x.tail(no);
        Grad g;
        g.j_in = (v.head(nh).array() * rho_prime(h.array())).matrix() * input_.transpose();
        g.w = (v.tail(no).array() * rho_prime(o.array())).matrix() * rho(h.array()).matrix().transpose();
        return g;
    }

  private:
    void check_dim(const Vector& x) const {
        if (x.size() != state_dim()) throw ConfigError("FeedforwardSystem: state dimension mismatch");
    }

    const FeedforwardParams* params_;
    Vector input_;
    Vector bias_;
};

/// Nudged-phase force of the feedforward network: the Jacobian-corrected
/// augmented dynamics written out for the block coupling [[0,0],[W,0]], with
/// the correction frozen at the free equilibrium x_free:
///   F_h = rho'(h).*(J_in u) - h + D_h W' D_o (o - o_free)
///   F_o = rho'(o).*(W rho(h)) - o - D_o W D_h (h - h_free) - beta (o - y)
/// where D_h = diag(rho'(h_free)), D_o = diag(rho'(o_free)). The cross terms
/// vanish at x = x_free, and the correction turns the output->hidden coupling
/// into an effective backward connection.
inline Vector feedforward_nudged_force(const FeedforwardParams& p, const Vector& input, const Vector& x,
                                       const Vector& x_free, Scalar beta, const QuadraticCost& cost) {
    if (x.size() != p.state_dim() || x_free.size() != p.state_dim()) {
        throw ConfigError("feedforward_nudged_force: state dimension mismatch");
    }
    const Index nh = p.hidden_dim();
    const Index no = p.output_dim();
    const FeedforwardSystem sys(p, input);
    const Eigen::ArrayXd dh = rho_prime(x_free.head(nh).array());
    const Eigen::ArrayXd dn = rho_prime(x_free.tail(no).array());

    Vector f = sys.force(x) - beta * cost.gradient(x);
    f.head(nh) += (dh * (p.w.transpose() * (dn * (x.tail(no) - x_free.tail(no)).array()).matrix()).array()).matrix();
    f.tail(no) -= (dn * (p.w * (dh * (x.head(nh) - x_free.head(nh)).array()).matrix()).array()).matrix();
    return f;
}

}  // namespace eqprop
