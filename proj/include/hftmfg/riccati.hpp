#pragma once

#include <Eigen/Dense>

#include "hftmfg/config.hpp"
#include "hftmfg/grid.hpp"
#include "hftmfg/mean_field.hpp"

namespace hftmfg {

/// C = max_i max(Gamma_i, sqrt(eta phi_i)); every h2_i(t) must lie in
/// [-C - 1e-8, 1e-12].
double riccati_box_bound(const AversionSpec& aversion, const MarketParams& market);

inline constexpr double kBoxLowerSlack = 1e-8;
inline constexpr double kBoxUpperSlack = 1e-12;

/// Backward integration of the coupled Riccati system
///   dh2_i/dt = -(h2_i)^2 / eta + phi_i - sum_j Q^{ij} h2_j,  h2_i(T) = -Gamma_i.
/// The box invariant is checked at every node; a violation throws SolverError.
PiecewiseCurve solve_h2(const AversionSpec& aversion, const MarketParams& market,
                        const TimeGrid& grid, Integrator method);

/// Largest box violation of a stored h2 curve (0 when inside the box).
double box_violation(const PiecewiseCurve& h2, double C);

/// Linear coefficient of the HFT value function read off the mean field:
///   h1_i = 2 eta mu_i - 2 h2_i E_i + lambdaH mu.
/// Node derivatives come from the h1 ODE, so the result is Hermite-ready.
PiecewiseCurve recover_h1(const MeanFieldSolution& mf, const PiecewiseCurve& h2,
                          const AversionSpec& aversion, const MarketParams& market);

/// Independent backward solve of
///   dh1_i/dt = -[h2_i (h1_i - lambdaH mu)/eta + gammaH mu + sum_j Q^{ij} h1_j],
///   h1(T) = 0,  h1(t_k-) = h1(t_k) + gamma xi_k e.
PiecewiseCurve integrate_h1(const MeanFieldSolution& mf, const PiecewiseCurve& h2,
                            const AversionSpec& aversion, const MarketParams& market,
                            Integrator method);

/// Backward solve of dh0_i/dt = -[(h1_i - lambdaH mu)^2 / (4 eta) + sum_j Q^{ij} h0_j],
/// h0(T) = 0, continuous at trade times.
PiecewiseCurve integrate_h0(const MeanFieldSolution& mf, const PiecewiseCurve& h1,
                            const AversionSpec& aversion, const MarketParams& market,
                            Integrator method);

/// Everything an individual HFT needs to act and to price its position.
struct HFTValue {
  PiecewiseCurve h2;
  PiecewiseCurve h1;
  PiecewiseCurve h0;
  PiecewiseCurve mu_agg;
  double eta = 0.0;
  double lambdaH = 0.0;

  /// Optimal speed (h1_i + 2 h2_i x - lambdaH mu) / (2 eta).
  double control(double t, double x, int i, Side side = Side::Right) const;
  /// P x + h0_i + h1_i x + h2_i x^2.
  double value(double t, double x, double P, int i, Side side = Side::Right) const;
};

HFTValue build_hft_value(const MeanFieldSolution& mf, const PiecewiseCurve& h2,
                         const ModelConfig& cfg);

/// Equivalent deviation form of the feedback: mu_i + (h2_i / eta)(x - E_i).
double control_from_deviation(const MeanFieldSolution& mf, const PiecewiseCurve& h2, double eta,
                              double t, double x, int i, Side side = Side::Right);

}  // namespace hftmfg
