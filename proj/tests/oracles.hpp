#pragma once

// Closed-form references computed without the library's solvers.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "hftmfg/config.hpp"

namespace oracle {

// Two-state chain with Q = [[-x, x], [y, -y]]: p1 relaxes to y / (x + y) at rate x + y.
inline double two_state_p1(double x, double y, double p10, double t) {
  const double inf = y / (x + y);
  return inf + (p10 - inf) * std::exp(-(x + y) * t);
}

// dh/dt = -h^2/eta + phi, h(T) = -G, at time-to-go tau.
inline double scalar_h2(double eta, double phi, double G, double tau) {
  if (phi == 0.0) return -G * eta / (eta + G * tau);
  const double r = std::sqrt(eta * phi);
  const double th = std::tanh(r * tau / eta);
  return -r * (G + r * th) / (r + G * th);
}

// Large trader's expected revenue, term by term: P0 xi0 - gamma sum_k xi_k sum_{j<=k} xi_j
// - (lambda + eta0) sum_k xi_k^2 - sum_k xi_k a_k.
inline double revenue(const hftmfg::MarketParams& mk, const std::vector<double>& xi,
                      const Eigen::VectorXd& a, double P0, double xi0) {
  double total = P0 * xi0;
  for (std::size_t k = 0; k < xi.size(); ++k) {
    double bought = 0.0;
    for (std::size_t j = 0; j <= k; ++j) bought += xi[j];
    total -= mk.gamma * xi[k] * bought + (mk.lambda + mk.eta0) * xi[k] * xi[k];
    if (a.size()) total -= xi[k] * a(static_cast<Eigen::Index>(k));
  }
  return total;
}

// Single state without switching: E'' = a1 E' + a2 E between trades, E continuous,
// mu drops by gamma xi_k / (lambdaH + 2 eta) across t_k, E(0) = E0 and
// (2 eta + lambdaH) mu(T) + 2 Gamma E(T) = 0. The free initial speed is found by
// linear shooting on the scalar flow.
struct ScalarMeanField {
  double a1, a2, th1, th2, eta, lH, gam, G, T, E0;
  std::vector<double> times, xi;
  double mu0 = 0.0;

  explicit ScalarMeanField(const hftmfg::ModelConfig& cfg)
      : eta(cfg.market.eta), lH(cfg.market.lambdaH), gam(cfg.market.gamma),
        G(cfg.aversion.Gamma(0)), T(cfg.schedule.T), E0(cfg.population.E0(0)),
        times(cfg.schedule.times), xi(cfg.schedule.quantities) {
    const double m = 2.0 * eta + lH;
    a1 = -cfg.market.gammaH / m;
    a2 = 2.0 * cfg.aversion.phi(0) / m;
    const double disc = std::sqrt(a1 * a1 + 4.0 * a2);
    th1 = 0.5 * (a1 + disc);
    th2 = 0.5 * (a1 - disc);
    const double r0 = terminal(0.0);
    mu0 = -r0 / (terminal(1.0) - r0);
  }

  void flow(double tau, double& E, double& mu) const {
    const double c1 = (mu - th2 * E) / (th1 - th2);
    const double c2 = E - c1;
    const double e1 = std::exp(th1 * tau), e2 = std::exp(th2 * tau);
    E = c1 * e1 + c2 * e2;
    mu = c1 * th1 * e1 + c2 * th2 * e2;
  }

  // Right value at trade times.
  void at(double m0, double t, double& E, double& mu) const {
    E = E0;
    mu = m0;
    double now = 0.0;
    for (std::size_t k = 0; k < times.size() && times[k] <= t; ++k) {
      flow(times[k] - now, E, mu);
      mu -= gam * xi[k] / (lH + 2.0 * eta);
      now = times[k];
    }
    flow(t - now, E, mu);
  }
  void at(double t, double& E, double& mu) const { at(mu0, t, E, mu); }

  double terminal(double m0) const {
    double E, mu;
    at(m0, T, E, mu);
    return (2.0 * eta + lH) * mu + 2.0 * G * E;
  }
};

}  // namespace oracle
