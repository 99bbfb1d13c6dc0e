#pragma once

#include <Eigen/Dense>

#include "hftmfg/config.hpp"
#include "hftmfg/grid.hpp"

namespace hftmfg {

/// Positivity threshold below which 1/p_i is treated as meaningless.
inline constexpr double kPositivityFloor = 1e-10;

/// Type distribution p(t) of the aversion chain. `p` is continuous across trade
/// times and carries node derivatives (p' = Q^T p) for Hermite evaluation.
struct ChainSolution {
  PiecewiseCurve p;
  Eigen::MatrixXd Q;

  /// p_Q(t), evaluated lazily from the stored p.
  Eigen::MatrixXd pQ(double t, Side side = Side::Right) const;
};

/// Integrates dp^T/dt = p^T Q from p0 with the chosen scheme. Throws
/// SolverError naming the time at which some p_i drops to <= 1e-10.
ChainSolution solve_chain(const AversionSpec& aversion, const TimeGrid& grid, Integrator method);

/// p_Q = diag(1/p) Q^T diag(p) - diag(diag(1/p) Q^T p): off-diagonal (i, j) is
/// p_j Q^{ji} / p_i, rows sum to zero. Requires p > 0.
Eigen::MatrixXd build_pQ(const Eigen::VectorXd& p, const Eigen::MatrixXd& Q);

}  // namespace hftmfg
