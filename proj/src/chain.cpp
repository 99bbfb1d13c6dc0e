#include "hftmfg/chain.hpp"

#include <cstdio>

#include "hftmfg/errors.hpp"
#include "hftmfg/integrator.hpp"

namespace hftmfg {

namespace {

void check_positive(const Eigen::VectorXd& p, double t) {
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(p(i) > kPositivityFloor)) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "chain positivity lost: p_%ld(%.6g) = %.3g <= 1e-10",
                    static_cast<long>(i + 1), t, p(i));
      throw SolverError(buf);
    }
  }
}

}  // namespace

Eigen::MatrixXd build_pQ(const Eigen::VectorXd& p, const Eigen::MatrixXd& Q) {
  const Eigen::Index n = p.size();
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double diag = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double v = p(j) * Q(j, i) / p(i);
      out(i, j) = v;
      diag -= v;
    }
    out(i, i) = diag;
  }
  return out;
}

Eigen::MatrixXd ChainSolution::pQ(double t, Side side) const { return build_pQ(p.eval(t, side), Q); }

ChainSolution solve_chain(const AversionSpec& aversion, const TimeGrid& grid, Integrator method) {
  const int n = aversion.n_states();
  ChainSolution out{PiecewiseCurve(grid, n, true), aversion.Q};
  const Eigen::MatrixXd Qt = aversion.Q.transpose();
  auto rhs = [&Qt](double, const Eigen::VectorXd& y) -> Eigen::VectorXd { return Qt * y; };

  Eigen::VectorXd y = aversion.p0;
  check_positive(y, 0.0);
  for (int s = 0; s < grid.segments(); ++s) {
    const double h = grid.step(s);
    Eigen::MatrixXd& vals = out.p.values(s);
    Eigen::MatrixXd& ders = out.p.derivatives(s);
    vals.col(0) = y;
    ders.col(0) = Qt * y;
    for (int k = 0; k < grid.steps(s); ++k) {
      ode_step(method, rhs, grid.time(s, k), h, y);
      check_positive(y, grid.time(s, k + 1));
      vals.col(k + 1) = y;
      ders.col(k + 1) = Qt * y;
    }
  }
  return out;
}

}  // namespace hftmfg
