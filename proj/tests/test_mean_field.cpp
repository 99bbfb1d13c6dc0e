#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "hftmfg/mean_field.hpp"
#include "hftmfg/presets.hpp"
#include "oracles.hpp"

using namespace hftmfg;

namespace {

ModelConfig random_two_state(std::mt19937& gen) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  ModelConfig cfg = two_state(10.0 * U(gen), 2.0 * U(gen), 10.0 * U(gen), 2.0 * U(gen),
                              0.1 + U(gen), 0.1 + U(gen), Mode::Partial);
  cfg.aversion.p0 = Eigen::Vector2d(0.3, 0.7);
  return cfg;
}

}  // namespace

TEST_CASE("numerical solve matches the scalar closed form") {
  for (double G : {0.0, 0.1, 2.0}) {
    for (double phi : {0.0, 5.0, 10.0}) {
      CAPTURE(G);
      CAPTURE(phi);
      ModelConfig cfg = baseline_partial(G, phi);
      cfg.solver.grid_steps_per_unit_time = 10000;
      MeanFieldSystem sys(cfg);
      const MeanFieldSolution num = sys.solve(cfg.population.E0, cfg.schedule.quantities);
      const MeanFieldSolution ref = closed_form_n1(cfg, cfg.schedule.quantities, sys.grid());
      CHECK(sup_distance(num.E, ref.E) <= 1e-6);
      CHECK(sup_distance(num.mu, ref.mu) <= 1e-6);

      const oracle::ScalarMeanField ref_fn(cfg);
      for (double t = 0.0; t <= 1.0; t += 0.0371) {
        double E, mu;
        ref_fn.at(t, E, mu);
        CHECK(std::abs(num.E.eval(t)(0) - E) < 1e-8);
        CHECK(std::abs(num.mu.eval(t)(0) - mu) < 1e-7);
      }
    }
  }
}

TEST_CASE("scalar system matrix") {
  const ModelConfig cfg = baseline_partial(0.0, 0.0);
  const TimeGrid grid(1.0, cfg.schedule.times, 100);
  MeanFieldSystem sys(cfg, grid);
  const Eigen::MatrixXd A = assemble_A(0.3, Side::Right, sys.chain(), sys.h2(), cfg.aversion, cfg.market);
  CHECK(A(0, 0) == doctest::Approx(-3.5));
  CHECK(A(0, 1) == doctest::Approx(0.0));
  CHECK(A(1, 0) == doctest::Approx(1.0));
  CHECK(A(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("speed jumps at trades") {
  for (const auto& p : all_presets()) {
    if (p.cfg.mode != Mode::Partial) continue;
    CAPTURE(p.name);
    const MeanFieldSolution mf = solve_partial(p.cfg, p.cfg.schedule.quantities);
    for (const JumpResidual& r : jump_conditions_report(mf, p.cfg)) {
      CHECK(r.expected == doctest::Approx(5.0));
      CHECK(r.aggregate_residual <= 1e-6);
      CHECK(r.state_residual <= 1e-6);
      CHECK(r.E_continuity <= 1e-12);
    }
  }
}

TEST_CASE("boundary conditions and the aggregate identity") {
  for (const auto& p : all_presets()) {
    if (p.cfg.mode != Mode::Partial) continue;
    CAPTURE(p.name);
    ModelConfig cfg = p.cfg;
    // Finite differences of a mean field with |mu| ~ 400 need the fine grid.
    cfg.solver.grid_steps_per_unit_time = 10000;
    MeanFieldSystem sys(cfg);
    const MeanFieldSolution mf = sys.solve(cfg.population.E0, cfg.schedule.quantities);
    CHECK(terminal_residual(mf, sys.chain(), cfg) <= 1e-6);
    CHECK(mf.E.front() == cfg.population.E0);
    CHECK(aggregate_identity_residual(mf) <= 1e-4);
    CHECK(per_state_drift_residual(mf, sys.chain()) <= 1e-6);
    CHECK(mf.residuals.condition_number < kMaxTerminalCondition);
  }
}

TEST_CASE("mean field is linear in (E0, xi)") {
  std::mt19937 gen(2024);
  std::normal_distribution<double> Z(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig cfg = random_two_state(gen);
    cfg.population.inventory_bound = 10.0;
    MeanFieldSystem sys(cfg);
    auto draw = [&] {
      std::vector<double> xi(9);
      for (double& x : xi) x = Z(gen);
      return std::make_pair(Eigen::Vector2d(Z(gen), Z(gen)).eval(), xi);
    };
    const auto [e1, x1] = draw();
    const auto [e2, x2] = draw();
    const double a = Z(gen), b = Z(gen);
    std::vector<double> xc(9);
    for (int k = 0; k < 9; ++k) xc[k] = a * x1[k] + b * x2[k];
    const MeanFieldSolution s1 = sys.solve(e1, x1);
    const MeanFieldSolution s2 = sys.solve(e2, x2);
    const MeanFieldSolution sc = sys.solve(a * e1 + b * e2, xc);
    for (int s = 0; s < sys.grid().segments(); ++s) {
      worst = std::max(worst, (sc.E.values(s) - a * s1.E.values(s) - b * s2.E.values(s)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (sc.mu.values(s) - a * s1.mu.values(s) - b * s2.mu.values(s)).cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("no trades and no initial inventory gives a flat mean field") {
  ModelConfig cfg = baseline_partial(2.0, 10.0);
  MeanFieldSystem sys(cfg);
  const MeanFieldSolution mf = sys.solve(Eigen::VectorXd::Zero(1), std::vector<double>(9, 0.0));
  CHECK(mf.E.max_abs() == 0.0);
  CHECK(mf.mu.max_abs() == 0.0);
}

TEST_CASE("high terminal aversion round-trips over the whole period") {
  const ModelConfig cfg = baseline_partial(2.0, 0.0);
  const MeanFieldSolution mf = solve_partial(cfg, cfg.schedule.quantities);
  CHECK(mf.mu_agg.eval(0.01)(0) > 0.0);
  CHECK(mf.mu_agg.eval(0.99)(0) < 0.0);
}

TEST_CASE("high running aversion round-trips around each trade") {
  const ModelConfig cfg = baseline_partial(0.0, 10.0);
  const MeanFieldSolution mf = solve_partial(cfg, cfg.schedule.quantities);
  const TimeGrid& g = mf.grid();
  // xi_k > 0: inventory first falls, then rises within each inter-trade interval.
  for (int s = 1; s < g.segments() - 1; ++s) {
    const Eigen::MatrixXd& E = mf.E_agg.values(s);
    Eigen::Index lo;
    E.row(0).minCoeff(&lo);
    CAPTURE(s);
    CHECK(lo > 0);
    CHECK(lo < g.steps(s));
    CHECK(E(0, 1) < E(0, 0));
    CHECK(E(0, g.steps(s)) > E(0, lo));
  }
}

TEST_CASE("Euler and RK4 agree on a fine grid") {
  ModelConfig cfg = two_state(0.0, 0.0, 10.0, 2.0, 0.5, 0.5, Mode::Partial);
  const MeanFieldSolution rk = solve_partial(cfg, cfg.schedule.quantities);
  cfg.solver.integrator = Integrator::Euler;
  cfg.solver.grid_steps_per_unit_time = 20000;
  const MeanFieldSolution eu = solve_partial(cfg, cfg.schedule.quantities);
  for (double t = 0.05; t < 1.0; t += 0.1) {
    CHECK(std::abs(rk.E_agg.eval(t)(0) - eu.E_agg.eval(t)(0)) < 1e-3);
  }
}
