#pragma once

#include <Eigen/Dense>

namespace eqprop {

// Elementwise tanh nonlinearity and its first two derivatives.
// rho'(x) = 1 - rho(x)^2, rho''(x) = -2 rho(x) rho'(x).

template <typename Derived>
auto rho(const Eigen::ArrayBase<Derived>& x) {
    return x.tanh();
}

template <typename Derived>
auto rho_prime(const Eigen::ArrayBase<Derived>& x) {
    return 1.0 - x.tanh().square();
}

template <typename Derived>
auto rho_second(const Eigen::ArrayBase<Derived>& x) {
    return -2.0 * x.tanh() * (1.0 - x.tanh().square());
}

inline double rho(double x) { return std::tanh(x); }
inline double rho_prime(double x) { return 1.0 - std::tanh(x) * std::tanh(x); }
inline double rho_second(double x) { return -2.0 * std::tanh(x) * rho_prime(x); }

}  // namespace eqprop
