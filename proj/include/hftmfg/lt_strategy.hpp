#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hftmfg/config.hpp"
#include "hftmfg/mean_field.hpp"

namespace hftmfg {

/// Price impact felt by the large trader at each trade:
///   a_k = gammaH (E(t_k) - E(0)) + lambdaH mu(t_k),
/// with mu(t_k) taken from the side selected by solver.lt_mu_convention.
Eigen::VectorXd lt_impacts(const MeanFieldSolution& mf, const ModelConfig& cfg);

/// gamma + 2 (lambda + eta0): curvature of the large trader's objective.
double lt_curvature(const MarketParams& market);

/// Expected revenue sum_k (-xi_k) E[P_hat(t_k)] for quantities `xi` when HFT
/// impact at the trades is `a` (a = 0 for the market without HFTs).
double lt_expected_profit(const MarketParams& market, std::span<const double> xi,
                          const Eigen::VectorXd& a, double P0);

struct ProfitReport {
  double profit_no_hft = 0.0;
  double profit_with_hft = 0.0;
  double difference = 0.0;  // profit_with_hft - profit_no_hft
};

ProfitReport lt_profit(const ModelConfig& cfg, std::span<const double> xi,
                       const MeanFieldSolution& mf, double P0);

/// Best response to frozen HFT curves under xi0 + sum(xi) = 0:
///   xi_k = -xi0 / K + (mean(a) - a_k) / (gamma + 2 (lambda + eta0)),
/// with xi_K set to -xi0 - sum_{k<K} xi_k so the constraint holds exactly.
std::vector<double> lt_best_response(const MeanFieldSolution& mf, const ModelConfig& cfg);
std::vector<double> lt_best_response(const Eigen::VectorXd& a, double xi0, const MarketParams& market);

struct ConcavityReport {
  /// Hessian in the K-1 free quantities with HFT curves frozen (Nash sense).
  Eigen::MatrixXd frozen_hessian;
  /// Hessian when the mean field responds to the schedule through the basis.
  Eigen::MatrixXd composite_hessian;
  double frozen_max_eigenvalue = 0.0;
  double composite_max_eigenvalue = 0.0;
  bool negative_definite = true;  // both Hessians
  bool stationary_only = false;   // composite Hessian is not negative definite
};

struct OverallEquilibrium {
  std::vector<double> xi_star;
  MeanFieldSolution mean_field;
  std::vector<MeanFieldSolution> basis_E0;  // response to E0 = e_i, xi = 0
  std::vector<MeanFieldSolution> basis_xi;  // response to E0 = 0, xi = e_k
  Eigen::VectorXd impact_offset;            // a at xi = 0 (config E0)
  Eigen::MatrixXd impact_matrix;            // d a / d xi
  double system_condition = 0.0;
  double fixed_point_residual = 0.0;
  double basis_residual = 0.0;  // |a(basis) - a(direct solve)| at xi*
  ConcavityReport concavity;
  std::vector<std::string> warnings;
};

/// Overall equilibrium by linear superposition: N + K basis solves, one
/// (K-1)-dimensional linear solve, one final mean-field solve at xi*.
OverallEquilibrium solve_overall(const ModelConfig& cfg);
OverallEquilibrium solve_overall(const MeanFieldSystem& sys);

ConcavityReport concavity_check(const MarketParams& market, const Eigen::MatrixXd& impact_matrix);

}  // namespace hftmfg
