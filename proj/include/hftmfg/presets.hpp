#pragma once

#include <string>
#include <vector>

#include "hftmfg/config.hpp"

namespace hftmfg {

/// Single-state market used throughout the examples: gamma=1, gammaH=0.7,
/// lambda=0.4, lambdaH=0.1, eta=eta0=0.05, T=1, K=9 trades at t_k = k/10,
/// xi0 = -9, E0 = 0. Partial mode trades xi_k = 1.
ModelConfig baseline_partial(double Gamma, double phi);
/// Same market in overall mode (quantities chosen by the large trader).
ModelConfig baseline_overall(double Gamma, double phi);

/// Two aversion states with Q = [[-x, x], [y, -y]] and p0 = (1/2, 1/2).
ModelConfig two_state(double phi1, double Gamma1, double phi2, double Gamma2, double x, double y,
                      Mode mode);

/// Two-state overall configuration used by the finite-population experiments.
ModelConfig epsilon_nash_preset();

struct NamedConfig {
  std::string name;
  ModelConfig cfg;
};

/// Every built-in configuration (figure sweeps and test presets).
std::vector<NamedConfig> all_presets();

}  // namespace hftmfg
