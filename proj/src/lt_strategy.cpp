#include "hftmfg/lt_strategy.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "hftmfg/errors.hpp"

namespace hftmfg {

namespace {

// Maps the K-1 free quantities to all K: xi = P xi_f + q with xi_K absorbing.
Eigen::MatrixXd free_to_full(int K) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(K, K - 1);
  P.topRows(K - 1).setIdentity();
  P.row(K - 1).setConstant(-1.0);
  return P;
}

double max_eigenvalue(const Eigen::MatrixXd& H) {
  if (H.rows() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double required_xi0(const ModelConfig& cfg) {
  if (!cfg.schedule.xi0) throw ValidationError("schedule.xi0", "required to optimize the large trader");
  return *cfg.schedule.xi0;
}

}  // namespace

Eigen::VectorXd lt_impacts(const MeanFieldSolution& mf, const ModelConfig& cfg) {
  const int K = mf.grid().trades();
  Eigen::VectorXd a(K);
  const double E0 = mf.E_agg.front()(0);
  for (int k = 1; k <= K; ++k) {
    const double mu = cfg.solver.lt_mu_convention == MuConvention::Right ? mf.mu_agg.right(k)(0)
                                                                          : mf.mu_agg.left(k)(0);
    a(k - 1) = cfg.market.gammaH * (mf.E_agg.right(k)(0) - E0) + cfg.market.lambdaH * mu;
  }
  return a;
}

double lt_curvature(const MarketParams& market) {
  return market.gamma + 2.0 * (market.lambda + market.eta0);
}

double lt_expected_profit(const MarketParams& market, std::span<const double> xi,
                          const Eigen::VectorXd& a, double P0) {
  double cum = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < xi.size(); ++k) {
    cum += xi[k];
    double price = P0 + market.gamma * cum + (market.lambda + market.eta0) * xi[k];
    if (a.size() > 0) price += a(static_cast<Eigen::Index>(k));
    total -= xi[k] * price;
  }
  return total;
}

ProfitReport lt_profit(const ModelConfig& cfg, std::span<const double> xi,
                       const MeanFieldSolution& mf, double P0) {
  ProfitReport r;
  r.profit_no_hft = lt_expected_profit(cfg.market, xi, Eigen::VectorXd(), P0);
  const Eigen::VectorXd a = lt_impacts(mf, cfg);
  double diff = 0.0;
  for (std::size_t k = 0; k < xi.size(); ++k) diff += -xi[k] * a(static_cast<Eigen::Index>(k));
  r.difference = diff;
  r.profit_with_hft = r.profit_no_hft + diff;
  return r;
}

std::vector<double> lt_best_response(const Eigen::VectorXd& a, double xi0, const MarketParams& market) {
  const Eigen::Index K = a.size();
  std::vector<double> xi(static_cast<std::size_t>(K));
  if (K == 0) return xi;
  const double c = lt_curvature(market);
  const double mean = a.mean();
  double sum = 0.0;
  for (Eigen::Index k = 0; k + 1 < K; ++k) {
    xi[static_cast<std::size_t>(k)] = -xi0 / static_cast<double>(K) + (mean - a(k)) / c;
    sum += xi[static_cast<std::size_t>(k)];
  }
  xi.back() = -xi0 - sum;
  return xi;
}

std::vector<double> lt_best_response(const MeanFieldSolution& mf, const ModelConfig& cfg) {
  return lt_best_response(lt_impacts(mf, cfg), required_xi0(cfg), cfg.market);
}

ConcavityReport concavity_check(const MarketParams& market, const Eigen::MatrixXd& impact_matrix) {
  ConcavityReport r;
  const int K = static_cast<int>(impact_matrix.rows());
  if (K <= 1) {
    r.frozen_hessian.resize(0, 0);
    r.composite_hessian.resize(0, 0);
    r.frozen_max_eigenvalue = r.composite_max_eigenvalue = -std::numeric_limits<double>::infinity();
    return r;
  }
  const Eigen::MatrixXd P = free_to_full(K);
  r.frozen_hessian = -lt_curvature(market) * (P.transpose() * P);
  r.composite_hessian =
      r.frozen_hessian - P.transpose() * (impact_matrix + impact_matrix.transpose()) * P;
  r.frozen_max_eigenvalue = max_eigenvalue(r.frozen_hessian);
  r.composite_max_eigenvalue = max_eigenvalue(r.composite_hessian);
  r.stationary_only = !(r.composite_max_eigenvalue < 0.0);
  r.negative_definite = r.frozen_max_eigenvalue < 0.0 && !r.stationary_only;
  return r;
}

OverallEquilibrium solve_overall(const ModelConfig& cfg) {
  MeanFieldSystem sys(cfg);
  return solve_overall(sys);
}

OverallEquilibrium solve_overall(const MeanFieldSystem& sys) {
  const ModelConfig& cfg = sys.config();
  const double xi0 = required_xi0(cfg);
  const int N = cfg.N();
  const int K = cfg.K();
  OverallEquilibrium out;

  const std::vector<double> zeros(static_cast<std::size_t>(K), 0.0);
  for (int i = 0; i < N; ++i) {
    out.basis_E0.push_back(sys.solve(Eigen::VectorXd::Unit(N, i), zeros));
  }
  std::vector<double> unit(static_cast<std::size_t>(K), 0.0);
  for (int k = 0; k < K; ++k) {
    unit[static_cast<std::size_t>(k)] = 1.0;
    out.basis_xi.push_back(sys.solve(Eigen::VectorXd::Zero(N), unit));
    unit[static_cast<std::size_t>(k)] = 0.0;
  }

  const Eigen::VectorXd& E0 = cfg.population.E0;
  out.impact_offset = Eigen::VectorXd::Zero(K);
  for (int i = 0; i < N; ++i) out.impact_offset += E0(i) * lt_impacts(out.basis_E0[static_cast<std::size_t>(i)], cfg);
  out.impact_matrix.resize(K, K);
  for (int k = 0; k < K; ++k) out.impact_matrix.col(k) = lt_impacts(out.basis_xi[static_cast<std::size_t>(k)], cfg);

  if (K == 0) {
    out.mean_field = sys.solve(E0, out.xi_star);
    return out;
  }
  if (K == 1) {
    out.xi_star = {-xi0};
  } else {
    // xi_f = -(xi0/K) e - (1/c) R Pi (a0 + B (P xi_f + q)), Pi = I - e e^T / K.
    const double c = lt_curvature(cfg.market);
    const Eigen::MatrixXd P = free_to_full(K);
    Eigen::VectorXd q = Eigen::VectorXd::Zero(K);
    q(K - 1) = -xi0;
    const Eigen::MatrixXd Pi =
        Eigen::MatrixXd::Identity(K, K) - Eigen::MatrixXd::Constant(K, K, 1.0 / K);
    const Eigen::MatrixXd RPi = Pi.topRows(K - 1);
    const Eigen::MatrixXd L = Eigen::MatrixXd::Identity(K - 1, K - 1) + (RPi * out.impact_matrix * P) / c;
    const Eigen::VectorXd rhs = Eigen::VectorXd::Constant(K - 1, -xi0 / K) -
                                RPi * (out.impact_offset + out.impact_matrix * q) / c;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(L);
    const double rc = lu.rcond();
    out.system_condition = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    if (!(out.system_condition <= kMaxTerminalCondition)) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "large-trader system is singular (condition number %.3g)",
                    out.system_condition);
      throw SolverError(buf);
    }
    const Eigen::VectorXd xf = lu.solve(rhs);
    out.xi_star.resize(static_cast<std::size_t>(K));
    double sum = 0.0;
    for (int k = 0; k + 1 < K; ++k) {
      out.xi_star[static_cast<std::size_t>(k)] = xf(k);
      sum += xf(k);
    }
    out.xi_star.back() = -xi0 - sum;
  }

  out.mean_field = sys.solve(E0, out.xi_star);
  const Eigen::VectorXd a_direct = lt_impacts(out.mean_field, cfg);
  const Eigen::VectorXd a_basis =
      out.impact_offset + out.impact_matrix * Eigen::Map<const Eigen::VectorXd>(out.xi_star.data(), K);
  out.basis_residual = (a_direct - a_basis).cwiseAbs().maxCoeff();

  const std::vector<double> br = lt_best_response(a_direct, xi0, cfg.market);
  for (int k = 0; k < K; ++k) {
    out.fixed_point_residual =
        std::max(out.fixed_point_residual,
                 std::abs(br[static_cast<std::size_t>(k)] - out.xi_star[static_cast<std::size_t>(k)]));
  }
  if (out.fixed_point_residual > 1e-6) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "fixed-point residual %.3g exceeds 1e-6", out.fixed_point_residual);
    out.warnings.emplace_back(buf);
  }
  out.concavity = concavity_check(cfg.market, out.impact_matrix);
  if (out.concavity.stationary_only) {
    out.warnings.emplace_back("objective is not concave in the schedule; xi* is a stationary point only");
  }
  for (const std::string& w : out.mean_field.residuals.warnings) out.warnings.push_back(w);
  return out;
}

}  // namespace hftmfg
