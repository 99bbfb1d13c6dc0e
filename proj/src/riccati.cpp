#include "hftmfg/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hftmfg/errors.hpp"
#include "hftmfg/integrator.hpp"

namespace hftmfg {

namespace {

// Walks segments from T back to 0, calling step(s, n, y) to advance y from
// node n to node n-1 and on_break(k, y) when crossing trade time t_k.
template <class Rhs, class Jump>
PiecewiseCurve integrate_backward(const TimeGrid& grid, int dim, Eigen::VectorXd y,
                                  Integrator method, Rhs&& rhs, Jump&& on_break) {
  PiecewiseCurve out(grid, dim, true);
  for (int s = grid.segments() - 1; s >= 0; --s) {
    const int ns = grid.steps(s);
    const double h = grid.step(s);
    auto f = [&rhs, s](double t, const Eigen::VectorXd& v) -> Eigen::VectorXd { return rhs(s, t, v); };
    out.values(s).col(ns) = y;
    out.derivatives(s).col(ns) = f(grid.time(s, ns), y);
    for (int n = ns; n > 0; --n) {
      ode_step(method, f, grid.time(s, n), -h, y);
      out.values(s).col(n - 1) = y;
      out.derivatives(s).col(n - 1) = f(grid.time(s, n - 1), y);
    }
    if (s > 0) on_break(s, y);
  }
  return out;
}

}  // namespace

double riccati_box_bound(const AversionSpec& aversion, const MarketParams& market) {
  double C = 0.0;
  for (int i = 0; i < aversion.n_states(); ++i) {
    C = std::max({C, aversion.Gamma(i), std::sqrt(market.eta * aversion.phi(i))});
  }
  return C;
}

double box_violation(const PiecewiseCurve& h2, double C) {
  double worst = 0.0;
  for (int s = 0; s < h2.grid().segments(); ++s) {
    const Eigen::MatrixXd& v = h2.values(s);
    worst = std::max(worst, v.maxCoeff() - kBoxUpperSlack);
    worst = std::max(worst, -C - kBoxLowerSlack - v.minCoeff());
  }
  return std::max(worst, 0.0);
}

PiecewiseCurve solve_h2(const AversionSpec& aversion, const MarketParams& market,
                        const TimeGrid& grid, Integrator method) {
  const double eta = market.eta;
  const Eigen::VectorXd& phi = aversion.phi;
  const Eigen::MatrixXd& Q = aversion.Q;
  auto rhs = [&](int, double, const Eigen::VectorXd& h) -> Eigen::VectorXd {
    return (-h.array().square() / eta + phi.array()).matrix() - Q * h;
  };
  PiecewiseCurve h2 = integrate_backward(grid, aversion.n_states(), Eigen::VectorXd(-aversion.Gamma),
                                         method, rhs, [](int, Eigen::VectorXd&) {});
  const double C = riccati_box_bound(aversion, market);
  for (int s = 0; s < grid.segments(); ++s) {
    const Eigen::MatrixXd& v = h2.values(s);
    for (Eigen::Index n = 0; n < v.cols(); ++n) {
      for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const double x = v(i, n);
        if (!std::isfinite(x) || x > kBoxUpperSlack || x < -C - kBoxLowerSlack) {
          char buf[160];
          std::snprintf(buf, sizeof buf, "Riccati box violated: h2_%ld(%.6g) = %.17g outside [%.17g, 0]",
                        static_cast<long>(i + 1), grid.time(s, static_cast<int>(n)), x, -C);
          throw SolverError(buf);
        }
      }
    }
  }
  return h2;
}

PiecewiseCurve recover_h1(const MeanFieldSolution& mf, const PiecewiseCurve& h2,
                          const AversionSpec& aversion, const MarketParams& market) {
  const TimeGrid& grid = mf.grid();
  const int N = aversion.n_states();
  PiecewiseCurve h1(grid, N, true);
  for (int s = 0; s < grid.segments(); ++s) {
    const Eigen::MatrixXd& mu = mf.mu.values(s);
    const Eigen::MatrixXd& E = mf.E.values(s);
    const Eigen::MatrixXd& H = h2.values(s);
    const Eigen::MatrixXd& mbar = mf.mu_agg.values(s);
    for (Eigen::Index n = 0; n < mu.cols(); ++n) {
      const Eigen::VectorXd v = 2.0 * market.eta * mu.col(n) -
                                2.0 * H.col(n).cwiseProduct(E.col(n)) +
                                Eigen::VectorXd::Constant(N, market.lambdaH * mbar(0, n));
      h1.values(s).col(n) = v;
      const Eigen::VectorXd shifted = (v.array() - market.lambdaH * mbar(0, n)).matrix();
      h1.derivatives(s).col(n) =
          -(H.col(n).cwiseProduct(shifted) / market.eta +
            Eigen::VectorXd::Constant(N, market.gammaH * mbar(0, n)) + aversion.Q * v);
    }
  }
  return h1;
}

PiecewiseCurve integrate_h1(const MeanFieldSolution& mf, const PiecewiseCurve& h2,
                            const AversionSpec& aversion, const MarketParams& market,
                            Integrator method) {
  const int N = aversion.n_states();
  auto rhs = [&](int s, double t, const Eigen::VectorXd& h) -> Eigen::VectorXd {
    const double m = mf.mu_agg.eval_in(s, t)(0);
    const Eigen::VectorXd H = h2.eval_in(s, t);
    return -(H.cwiseProduct((h.array() - market.lambdaH * m).matrix()) / market.eta +
             Eigen::VectorXd::Constant(N, market.gammaH * m) + aversion.Q * h);
  };
  auto jump = [&](int k, Eigen::VectorXd& h) {
    h.array() += market.gamma * mf.xi[static_cast<std::size_t>(k - 1)];
  };
  return integrate_backward(mf.grid(), N, Eigen::VectorXd::Zero(N), method, rhs, jump);
}

PiecewiseCurve integrate_h0(const MeanFieldSolution& mf, const PiecewiseCurve& h1,
                            const AversionSpec& aversion, const MarketParams& market,
                            Integrator method) {
  const int N = aversion.n_states();
  auto rhs = [&](int s, double t, const Eigen::VectorXd& h) -> Eigen::VectorXd {
    const double m = mf.mu_agg.eval_in(s, t)(0);
    const Eigen::ArrayXd a = h1.eval_in(s, t).array() - market.lambdaH * m;
    return -((a.square() / (4.0 * market.eta)).matrix() + aversion.Q * h);
  };
  return integrate_backward(mf.grid(), N, Eigen::VectorXd::Zero(N), method, rhs,
                            [](int, Eigen::VectorXd&) {});
}

double HFTValue::control(double t, double x, int i, Side side) const {
  return (h1.eval(t, i, side) + 2.0 * h2.eval(t, i, side) * x - lambdaH * mu_agg.eval(t, 0, side)) /
         (2.0 * eta);
}

double HFTValue::value(double t, double x, double P, int i, Side side) const {
  return P * x + h0.eval(t, i, side) + h1.eval(t, i, side) * x + h2.eval(t, i, side) * x * x;
}

HFTValue build_hft_value(const MeanFieldSolution& mf, const PiecewiseCurve& h2,
                         const ModelConfig& cfg) {
  HFTValue out;
  out.h2 = h2;
  out.h1 = recover_h1(mf, h2, cfg.aversion, cfg.market);
  out.h0 = integrate_h0(mf, out.h1, cfg.aversion, cfg.market, cfg.solver.integrator);
  out.mu_agg = mf.mu_agg;
  out.eta = cfg.market.eta;
  out.lambdaH = cfg.market.lambdaH;
  return out;
}

double control_from_deviation(const MeanFieldSolution& mf, const PiecewiseCurve& h2, double eta,
                              double t, double x, int i, Side side) {
  return mf.mu.eval(t, i, side) + h2.eval(t, i, side) / eta * (x - mf.E.eval(t, i, side));
}

}  // namespace hftmfg
