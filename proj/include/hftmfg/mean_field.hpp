#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hftmfg/chain.hpp"
#include "hftmfg/config.hpp"
#include "hftmfg/grid.hpp"

namespace hftmfg {

/// Abort threshold for the shooting system.
inline constexpr double kMaxTerminalCondition = 1e12;

struct ResidualReport {
  double terminal = 0.0;          // |[2 eta I + lambdaH e p^T] mu(T) + 2 Gamma E(T)|
  double max_jump = 0.0;          // worst per-state speed-jump mismatch over all t_k
  double condition_number = 0.0;  // of the shooting system
  std::vector<std::string> warnings;
};

/// Equilibrium mean field for one LT schedule. Per-state curves E, mu have
/// dimension N, aggregates E_agg = p^T E and mu_agg = p^T mu have dimension 1.
/// All curves store left limits at each t_k and carry node derivatives.
struct MeanFieldSolution {
  PiecewiseCurve E;
  PiecewiseCurve mu;
  PiecewiseCurve E_agg;
  PiecewiseCurve mu_agg;
  Eigen::VectorXd c0;
  Eigen::VectorXd E0;
  std::vector<double> xi;
  ResidualReport residuals;

  const TimeGrid& grid() const { return E.grid(); }
};

/// System matrix of d[mu; E] = A(t) [mu; E] dt between trade times.
Eigen::MatrixXd assemble_A(double t, Side side, const ChainSolution& chain,
                           const PiecewiseCurve& h2, const AversionSpec& aversion,
                           const MarketParams& market);

/// The N x 2N operator [2 eta I + lambdaH e p^T, 2 Gamma] of the terminal condition.
Eigen::MatrixXd terminal_operator(const Eigen::VectorXd& pT, const AversionSpec& aversion,
                                  const MarketParams& market);

/// Speed jump gamma * xi_k / (lambdaH + 2 eta) at an LT trade.
double speed_jump(const MarketParams& market, double xi_k);

/// Longest shooting interval in time units. The fundamental matrix is
/// restarted at every trade time and after at most this much time, which
/// keeps the growth of stiff modes bounded inside each interval.
inline constexpr double kShootingInterval = 0.05;

/// Piecewise fundamental matrices of dU = A U dt, restarted at each shooting
/// node, plus the factorized block system coupling the node states through
/// continuity, the speed jumps at t_k, E(0) = E0 and the terminal condition.
/// Solving for a new (E0, xi) costs one back-substitution and one pass over
/// the stored samples.
class MeanFieldSystem {
 public:
  explicit MeanFieldSystem(const ModelConfig& cfg);
  MeanFieldSystem(const ModelConfig& cfg, const TimeGrid& grid);

  const ModelConfig& config() const { return cfg_; }
  const TimeGrid& grid() const { return grid_; }
  const ChainSolution& chain() const { return chain_; }
  const PiecewiseCurve& h2() const { return h2_; }
  /// Column-major (2N)^2 samples of the local fundamental matrix (identity at
  /// the owning shooting node) with derivative A U at every node.
  const PiecewiseCurve& U() const { return U_; }
  Eigen::MatrixXd U_at(int s, int n) const;
  /// Fundamental matrix from 0 to the node (s, n), chained across intervals.
  Eigen::MatrixXd global_U(int s, int n) const;
  int shooting_nodes() const { return static_cast<int>(chunks_.size()); }
  double condition_number() const { return cond_; }

  /// Solve for initial means E0 (length N) and LT quantities xi (length K).
  MeanFieldSolution solve(const Eigen::VectorXd& E0, std::span<const double> xi) const;

 private:
  struct Chunk {
    int segment;
    int first;  // node index of the shooting node inside the segment
    int last;   // node index of the interval end
    Eigen::MatrixXd end;  // local fundamental matrix at `last`
  };

  void build();
  int chunk_of(int s, int n) const;

  ModelConfig cfg_;
  TimeGrid grid_;
  ChainSolution chain_;
  PiecewiseCurve h2_;
  PiecewiseCurve U_;
  std::vector<Chunk> chunks_;
  std::vector<int> first_chunk_;  // per segment
  Eigen::MatrixXd terminal_;      // terminal_operator at T
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  double cond_ = 0.0;
};

/// Convenience: builds the system on the config grid and solves for the
/// config's E0 and the given quantities.
MeanFieldSolution solve_partial(const ModelConfig& cfg, std::span<const double> xi);

/// Explicit N = 1 solution E(t) = A_k e^{theta1 t} + B_k e^{theta2 t} on
/// [t_k, t_{k+1}), sampled on `grid`. Uses (A_k + B_k t) e^{theta t} when the
/// characteristic roots coincide.
MeanFieldSolution closed_form_n1(const ModelConfig& cfg, std::span<const double> xi,
                                 const TimeGrid& grid);

struct ClosedFormRoots {
  double theta1;
  double theta2;
};
ClosedFormRoots closed_form_roots(const MarketParams& market, double phi);

struct JumpResidual {
  int k = 0;
  double t = 0.0;
  double expected = 0.0;          // gamma xi_k / (lambdaH + 2 eta)
  double aggregate_jump = 0.0;    // mu(t_k-) - mu(t_k)
  double aggregate_residual = 0.0;
  double state_residual = 0.0;    // max_i |mu_i(t_k-) - mu_i(t_k) - expected|
  double E_continuity = 0.0;      // max_i |E_i(t_k-) - E_i(t_k)|
};

std::vector<JumpResidual> jump_conditions_report(const MeanFieldSolution& sol,
                                                 const ModelConfig& cfg);

/// Norm of the terminal condition residual.
double terminal_residual(const MeanFieldSolution& sol, const ChainSolution& chain,
                         const ModelConfig& cfg);

/// max over interior nodes of |d/dt(p^T E) - p^T mu| with centered differences.
double aggregate_identity_residual(const MeanFieldSolution& sol);

/// max over interior nodes and states of |E_i' - mu_i - (p_Q E)_i|, with E_i'
/// from a five-point centered difference.
double per_state_drift_residual(const MeanFieldSolution& sol, const ChainSolution& chain);

}  // namespace hftmfg
