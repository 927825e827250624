#pragma once

#include "eqprop/errors.hpp"
#include "eqprop/types.hpp"

namespace eqprop {

/// Quadratic cost C(x) = 1/2 ||x_out - y||^2 over a contiguous slice of
/// output coordinates; the gradient vanishes on all other coordinates.
/// Targets are signed one-hot vectors with entries in {-1, +1}.
class QuadraticCost {
  public:
    QuadraticCost(Vector target, Index output_offset, Index state_dim)
        : target_(std::move(target)), offset_(output_offset), state_dim_(state_dim) {
        if (offset_ < 0 || offset_ + target_.size() > state_dim_) {
            throw ConfigError("QuadraticCost: output slice out of range");
        }
    }

    Scalar value(const Vector& x) const {
        return 0.5 * (x.segment(offset_, target_.size()) - target_).squaredNorm();
    }

    /// dC/dx: (o - y) on the output slice, zero elsewhere.
    Vector gradient(const Vector& x) const {
        Vector g = Vector::Zero(state_dim_);
        g.segment(offset_, target_.size()) = x.segment(offset_, target_.size()) - target_;
        return g;
    }

    /// d2C/dx2 is the diagonal projector onto the output slice.
    Vector hessian_diagonal() const {
        Vector h = Vector::Zero(state_dim_);
        h.segment(offset_, target_.size()).setOnes();
        return h;
    }

    const Vector& target() const { return target_; }
    Index output_offset() const { return offset_; }
    Index output_count() const { return target_.size(); }
    Index state_dim() const { return state_dim_; }

  private:
    Vector target_;
    Index offset_;
    Index state_dim_;
};

}  // namespace eqprop
