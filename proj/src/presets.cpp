#include "hftmfg/presets.hpp"

#include <cstdio>

namespace hftmfg {

namespace {

ModelConfig base_market(Mode mode) {
  ModelConfig cfg;
  cfg.mode = mode;
  cfg.schedule.T = 1.0;
  for (int k = 1; k <= 9; ++k) cfg.schedule.times.push_back(k / 10.0);
  cfg.schedule.xi0 = -9.0;
  if (mode == Mode::Partial) cfg.schedule.quantities.assign(9, 1.0);
  cfg.population.inventory_bound = 1.0;
  return cfg;
}

std::string fmt(const char* pattern, double a, double b) {
  char buf[96];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

}  // namespace

ModelConfig baseline_partial(double Gamma, double phi) {
  ModelConfig cfg = base_market(Mode::Partial);
  cfg.aversion.Gamma = Eigen::VectorXd::Constant(1, Gamma);
  cfg.aversion.phi = Eigen::VectorXd::Constant(1, phi);
  cfg.aversion.Q = Eigen::MatrixXd::Zero(1, 1);
  cfg.aversion.p0 = Eigen::VectorXd::Ones(1);
  cfg.population.E0 = Eigen::VectorXd::Zero(1);
  return cfg;
}

ModelConfig baseline_overall(double Gamma, double phi) {
  ModelConfig cfg = baseline_partial(Gamma, phi);
  cfg.mode = Mode::Overall;
  cfg.schedule.quantities.clear();
  return cfg;
}

ModelConfig two_state(double phi1, double Gamma1, double phi2, double Gamma2, double x, double y,
                      Mode mode) {
  ModelConfig cfg = base_market(mode);
  cfg.aversion.Gamma = Eigen::Vector2d(Gamma1, Gamma2);
  cfg.aversion.phi = Eigen::Vector2d(phi1, phi2);
  cfg.aversion.Q.resize(2, 2);
  cfg.aversion.Q << -x, x, y, -y;
  cfg.aversion.p0 = Eigen::Vector2d(0.5, 0.5);
  cfg.population.E0 = Eigen::Vector2d::Zero();
  return cfg;
}

ModelConfig epsilon_nash_preset() { return two_state(0.0, 0.0, 10.0, 2.0, 0.5, 0.5, Mode::Overall); }

std::vector<NamedConfig> all_presets() {
  std::vector<NamedConfig> out;
  const double values[] = {0.0, 0.1, 2.0};
  const double phis[] = {0.0, 5.0, 10.0};
  for (double G : values) {
    for (double f : phis) out.push_back({fmt("baseline_Gamma%g_phi%g", G, f), baseline_partial(G, f)});
  }
  for (double f : {0.0, 1.0, 5.0}) out.push_back({fmt("overall_Gamma%g_phi%g", 0.0, f), baseline_overall(0.0, f)});
  for (double G : {0.1, 2.0}) out.push_back({fmt("overall_Gamma%g_phi%g", G, 0.0), baseline_overall(G, 0.0)});
  const double pairs[][2] = {{0.0, 0.0}, {0.2, 0.8}, {0.5, 0.5}, {0.8, 0.2}};
  for (const auto& xy : pairs) {
    out.push_back({fmt("two_state_partial_x%g_y%g", xy[0], xy[1]),
                   two_state(0.0, 0.0, 10.0, 2.0, xy[0], xy[1], Mode::Partial)});
  }
  out.push_back({"two_state_mixed_partial", two_state(0.0, 2.0, 10.0, 0.0, 0.5, 0.5, Mode::Partial)});
  out.push_back({"two_state_overall", two_state(0.0, 0.0, 10.0, 2.0, 0.2, 0.8, Mode::Overall)});
  out.push_back({"epsilon_nash", epsilon_nash_preset()});
  return out;
}

}  // namespace hftmfg
