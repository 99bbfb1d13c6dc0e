#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hftmfg/config.hpp"
#include "hftmfg/grid.hpp"
#include "hftmfg/mean_field.hpp"

namespace hftmfg {

/// Agents are processed in fixed blocks whose partial sums are combined in
/// block order; this, not the thread count, fixes the floating-point result.
inline constexpr int kAgentBlock = 256;
/// Largest per-agent trajectory dump, in rows.
inline constexpr long kMaxDumpRows = 1000000;

struct SimulationOptions {
  int M = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
  /// Start every agent at X_j(0) = E0 of its initial state instead of sampling.
  bool identical_initial = false;
  /// Record full paths of the first `dump_agents` agents.
  int dump_agents = 0;
};

struct ConvergenceMetrics {
  double theta_dev = 0.0;  // sup_t |theta(t) - p(t)|^2
  double Z_dev = 0.0;      // sup_t |Z(t) - nu(t)|^2, nu_i = p_i E_i
  double vbar_l2 = 0.0;    // int_0^T (vbar(t) - mu(t))^2 dt
  double max_abs_X = 0.0;
  double gronwall_bound = 0.0;
};

struct TrajectoryRow {
  int agent;
  double t;
  Side side;
  int state;
  double X;
};

/// Population aggregates sampled on the solver grid (linear in between).
struct PopulationPath {
  int M = 0;
  PiecewiseCurve theta;    // N state fractions
  PiecewiseCurve Z;        // N, (1/M) sum_j 1[Y_j = i] X_j
  PiecewiseCurve Xbar;     // 1, (1/M) sum_j X_j
  PiecewiseCurve vbar;     // 1, (1/M) sum_j v_j
  PiecewiseCurve v_first;  // 1, speed of agent 1
  double X0_first = 0.0;
  int Y0_first = 0;
  std::vector<TrajectoryRow> dump;
};

struct SimulationResult {
  PopulationPath path;
  ConvergenceMetrics metrics;
};

/// Simulates M HFTs following the mean-field feedback. Aversion switches use
/// exact exponential event times; inventories are integrated between events
/// with the solver's scheme. Agent j draws from counter stream j of `seed`.
SimulationResult simulate_population(const MeanFieldSystem& sys, const MeanFieldSolution& mf,
                                     const SimulationOptions& opts);

struct DeviationResult {
  double j_mfg = 0.0;
  double j_best = 0.0;
  double gain = 0.0;
};

/// Payoff of agent 1 under the mean-field feedback and under its exact best
/// response, both against the simulated speeds of the other M-1 agents and
/// in expectation over agent 1's own aversion path. Both payoffs are
/// quadratic in inventory; their coefficients solve backward linear and
/// Riccati ODEs on the solver grid. Throws SolverError when the best-response
/// Riccati equation blows up (the deviation problem is not concave).
DeviationResult deviation_gain(const MeanFieldSystem& sys, const MeanFieldSolution& mf,
                               const PopulationPath& path);

/// Environment of a single deviating agent: own weight delta in vbar and the
/// others' average speed w(t).
struct DeviationEnvironment {
  double delta = 0.0;
  PiecewiseCurve w;  // 1-dimensional
};

DeviationEnvironment environment_from_path(const PopulationPath& path);
/// The M -> infinity environment: delta = 0, w = mu.
DeviationEnvironment mean_field_environment(const MeanFieldSolution& mf);

/// Expected payoff g_{y0}(0, x0) = g0 + g1 x0 + g2 x0^2 of a deviating agent
/// following the mean-field feedback, or its best response when
/// `best_response` is set. The coefficients solve backward ODEs on the grid.
double deviation_value(const MeanFieldSystem& sys, const MeanFieldSolution& mf,
                       const DeviationEnvironment& env, bool best_response, double x0, int y0);

/// Deterministic-type (N = 1) deviation problem over piecewise-constant speeds
/// on the solver grid: J(u) = c + g^T u - u^T S u. Used as an independent
/// check of the Riccati best response.
struct OpenLoopProblem {
  Eigen::VectorXd g;
  Eigen::MatrixXd S;
  double c = 0.0;
  std::vector<double> cell_length;

  double value(const Eigen::VectorXd& u) const { return c + g.dot(u) - u.dot(S * u); }
  /// Maximizer S^{-1} g / 2; throws SolverError when S is not positive definite.
  Eigen::VectorXd maximizer() const;
};

OpenLoopProblem open_loop_problem(const MeanFieldSystem& sys, const MeanFieldSolution& mf,
                                  const DeviationEnvironment& env, double x0);

struct LTDeviationResult {
  double psi_star = 0.0;  // large trader's payoff at xi* against simulated HFTs
  double psi_best = 0.0;
  double gain = 0.0;
  std::vector<double> xi_best;
};

/// Large trader's exact best response to the simulated aggregate (Xbar, vbar)
/// compared with xi*.
LTDeviationResult lt_deviation_gain(const ModelConfig& cfg, std::span<const double> xi_star,
                                    const PopulationPath& path);

/// Impact a_k = gammaH (Xbar(t_k) - Xbar(0)) + lambdaH vbar(t_k) seen by the
/// large trader in a simulated market.
Eigen::VectorXd simulated_impacts(const ModelConfig& cfg, const PopulationPath& path);

struct LTPathOutcome {
  int replications = 0;
  double mean = 0.0;
  double std_error = 0.0;
  double analytic = 0.0;  // expected revenue for the same HFT aggregate
};

/// Monte Carlo revenue sum_k (-xi_k) P_hat(t_k) with P_hat(t_k) = P0 +
/// gamma sum_{j<=k} xi_j + (lambda + eta0) xi_k + a_k + sigma W(t_k).
/// `impacts` holds a_k (see lt_impacts / simulated_impacts). Replication r
/// draws from counter stream r of `seed`.
LTPathOutcome sample_price_paths(const ModelConfig& cfg, std::span<const double> xi,
                                 const Eigen::VectorXd& impacts, int replications,
                                 std::uint64_t seed, int threads);

}  // namespace hftmfg
