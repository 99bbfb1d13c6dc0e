#pragma once

#include <Eigen/Dense>

#include "hftmfg/config.hpp"

namespace hftmfg {

/// One fixed step of size h (negative h integrates backward) of y' = f(t, y).
/// `f` has signature Eigen::VectorXd(double t, const Eigen::VectorXd& y).
template <class Rhs>
void ode_step(Integrator method, Rhs&& f, double t, double h, Eigen::VectorXd& y) {
  if (method == Integrator::Euler) {
    y += h * f(t, y);
    return;
  }
  const Eigen::VectorXd k1 = f(t, y);
  const Eigen::VectorXd k2 = f(t + 0.5 * h, y + (0.5 * h) * k1);
  const Eigen::VectorXd k3 = f(t + 0.5 * h, y + (0.5 * h) * k2);
  const Eigen::VectorXd k4 = f(t + h, y + h * k3);
  y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Convergence order of the scheme.
inline int order(Integrator method) { return method == Integrator::Euler ? 1 : 4; }

}  // namespace hftmfg
