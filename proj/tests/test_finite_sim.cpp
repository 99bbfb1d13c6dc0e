#include <doctest.h>

#include <cmath>

#include "hftmfg/errors.hpp"
#include "hftmfg/finite_sim.hpp"
#include "hftmfg/lt_strategy.hpp"
#include "hftmfg/presets.hpp"
#include "hftmfg/riccati.hpp"

using namespace hftmfg;

namespace {

struct Fixture {
  ModelConfig cfg;
  MeanFieldSystem sys;
  MeanFieldSolution mf;

  explicit Fixture(const ModelConfig& c, int steps = 1000)
      : cfg(with_steps(c, steps)), sys(cfg), mf(sys.solve(cfg.population.E0, quantities(cfg))) {}

  static ModelConfig with_steps(ModelConfig c, int steps) {
    c.solver.grid_steps_per_unit_time = steps;
    return c;
  }
  static std::vector<double> quantities(const ModelConfig& c) {
    return c.schedule.quantities.empty() ? std::vector<double>(c.K(), -*c.schedule.xi0 / c.K())
                                         : c.schedule.quantities;
  }
};

bool same(const PiecewiseCurve& a, const PiecewiseCurve& b) {
  for (int s = 0; s < a.grid().segments(); ++s) {
    if (a.values(s) != b.values(s)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("identical single-state agents reproduce the mean field") {
  ModelConfig cfg = baseline_partial(2.0, 10.0);
  cfg.population.E0 = Eigen::VectorXd::Constant(1, 0.3);
  Fixture f(cfg);
  SimulationOptions o;
  o.M = 50;
  o.identical_initial = true;
  const SimulationResult r = simulate_population(f.sys, f.mf, o);
  CHECK(r.metrics.theta_dev == 0.0);
  CHECK(r.metrics.Z_dev < 1e-24);
  CHECK(r.metrics.vbar_l2 < 1e-24);
  CHECK(sup_distance(r.path.Xbar, f.mf.E_agg) < 1e-12);
}

TEST_CASE("fractions stay fixed without switching and always sum to one") {
  Fixture still(two_state(0.0, 0.0, 10.0, 2.0, 0.0, 0.0, Mode::Partial));
  Fixture moving(two_state(0.0, 0.0, 10.0, 2.0, 0.5, 0.5, Mode::Partial));
  SimulationOptions o;
  o.M = 300;
  const SimulationResult a = simulate_population(still.sys, still.mf, o);
  const SimulationResult b = simulate_population(moving.sys, moving.mf, o);
  const Eigen::VectorXd th0 = a.path.theta.front();
  for (int s = 0; s < a.path.theta.grid().segments(); ++s) {
    for (int n = 0; n <= a.path.theta.grid().steps(s); ++n) {
      CHECK((a.path.theta.values(s).col(n) - th0).cwiseAbs().maxCoeff() == 0.0);
      CHECK(std::abs(b.path.theta.values(s).col(n).sum() - 1.0) < 1e-14);
      CHECK(std::abs(b.path.Z.values(s).col(n).sum() - b.path.Xbar.values(s)(0, n)) < 1e-14);
    }
  }
  CHECK(b.metrics.max_abs_X <= b.metrics.gronwall_bound);
}

TEST_CASE("simulation is identical across thread counts") {
  Fixture f(epsilon_nash_preset());
  SimulationOptions o;
  o.M = 1000;
  o.seed = 42;
  o.dump_agents = 3;
  o.threads = 1;
  const SimulationResult a = simulate_population(f.sys, f.mf, o);
  for (int threads : {4, 16}) {
    o.threads = threads;
    const SimulationResult b = simulate_population(f.sys, f.mf, o);
    CHECK(same(a.path.theta, b.path.theta));
    CHECK(same(a.path.Z, b.path.Z));
    CHECK(same(a.path.vbar, b.path.vbar));
    CHECK(a.metrics.vbar_l2 == b.metrics.vbar_l2);
    REQUIRE(a.path.dump.size() == b.path.dump.size());
    for (std::size_t i = 0; i < a.path.dump.size(); ++i) CHECK(a.path.dump[i].X == b.path.dump[i].X);
  }
  o.seed = 43;
  const SimulationResult c = simulate_population(f.sys, f.mf, o);
  CHECK_FALSE(same(a.path.vbar, c.path.vbar));
}

TEST_CASE("population errors shrink with M") {
  Fixture f(epsilon_nash_preset());
  double prev = INFINITY;
  for (int M : {100, 1000, 10000}) {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      SimulationOptions o;
      o.M = M;
      o.seed = seed;
      total += simulate_population(f.sys, f.mf, o).metrics.vbar_l2;
    }
    CHECK(total < prev);
    prev = total;
  }
}

TEST_CASE("bad simulation inputs") {
  Fixture f(baseline_partial(0.0, 0.0));
  SimulationOptions o;
  o.M = 0;
  CHECK_THROWS_AS(simulate_population(f.sys, f.mf, o), ValidationError);
  o.M = 10;
  o.dump_agents = 1000000;
  CHECK_THROWS_AS(simulate_population(f.sys, f.mf, o), ValidationError);
}

TEST_CASE("deviation payoff in the mean-field limit") {
  Fixture f(two_state(0.0, 0.0, 10.0, 2.0, 0.5, 0.5, Mode::Partial));
  const DeviationEnvironment env = mean_field_environment(f.mf);
  const HFTValue v = build_hft_value(f.mf, f.sys.h2(), f.cfg);
  for (int y = 0; y < 2; ++y) {
    for (double x : {-0.5, 0.0, 0.8}) {
      const double follow = deviation_value(f.sys, f.mf, env, false, x, y);
      const double best = deviation_value(f.sys, f.mf, env, true, x, y);
      CHECK(follow == doctest::Approx(v.value(0.0, x, 0.0, y)).epsilon(1e-7));
      CHECK(std::abs(best - follow) < 1e-6);
    }
  }
}

TEST_CASE("Riccati best response matches the open-loop optimum") {
  ModelConfig cfg = baseline_partial(2.0, 5.0);
  Fixture f(cfg, 400);
  // A small population: the deviator moves the average speed.
  SimulationOptions o;
  o.M = 5;
  const SimulationResult r = simulate_population(f.sys, f.mf, o);
  const DeviationEnvironment env = environment_from_path(r.path);
  const double x0 = 0.2;
  const OpenLoopProblem ol = open_loop_problem(f.sys, f.mf, env, x0);
  const Eigen::VectorXd u = ol.maximizer();
  const double best = deviation_value(f.sys, f.mf, env, true, x0, 0);
  CHECK(ol.value(u) == doctest::Approx(best).epsilon(1e-4));
  // With five agents the mean-field feedback leaves a visible gain on the table.
  CHECK(best - deviation_value(f.sys, f.mf, env, false, x0, 0) > 1e-3);
  // Bumping one speed cell costs exactly its quadratic weight.
  for (int c : {0, 150, 399}) {
    Eigen::VectorXd b = u;
    b(c) += 1.0;
    CHECK(ol.value(b) - ol.value(u) == doctest::Approx(-ol.S(c, c)).epsilon(1e-8));
    CHECK(ol.S(c, c) >= (cfg.market.eta + cfg.market.lambdaH / o.M) * ol.cell_length[c] * (1 - 1e-12));
  }
}

TEST_CASE("deviation gains are small for a large population") {
  Fixture f(epsilon_nash_preset());
  SimulationOptions o;
  o.M = 2000;
  o.seed = 3;
  const SimulationResult r = simulate_population(f.sys, f.mf, o);
  const DeviationResult d = deviation_gain(f.sys, f.mf, r.path);
  CHECK(d.gain >= -1e-9);
  CHECK(d.gain < 0.01 * std::abs(d.j_mfg));
  const LTDeviationResult l = lt_deviation_gain(f.cfg, Fixture::quantities(f.cfg), r.path);
  CHECK(l.gain >= -1e-12);
}

TEST_CASE("simulated impacts approach the mean-field impacts") {
  Fixture f(epsilon_nash_preset());
  SimulationOptions o;
  o.M = 20000;
  const SimulationResult r = simulate_population(f.sys, f.mf, o);
  const Eigen::VectorXd a = simulated_impacts(f.cfg, r.path);
  const Eigen::VectorXd b = lt_impacts(f.mf, f.cfg);
  CHECK((a - b).cwiseAbs().maxCoeff() < 0.05 * b.cwiseAbs().maxCoeff());
}

TEST_CASE("price paths") {
  ModelConfig cfg = baseline_partial(2.0, 10.0);
  const MeanFieldSolution mf = solve_partial(cfg, cfg.schedule.quantities);
  const Eigen::VectorXd a = lt_impacts(mf, cfg);
  cfg.market.sigma = 0.0;
  const LTPathOutcome exact = sample_price_paths(cfg, cfg.schedule.quantities, a, 100, 1, 1);
  CHECK(exact.mean == doctest::Approx(exact.analytic).epsilon(1e-14));
  CHECK(exact.std_error < 1e-12);
  CHECK(exact.analytic == doctest::Approx(lt_profit(cfg, cfg.schedule.quantities, mf, 0.0).profit_with_hft));

  cfg.market.sigma = 1.0;
  const LTPathOutcome noisy = sample_price_paths(cfg, cfg.schedule.quantities, a, 10000, 5, 1);
  CHECK(std::abs(noisy.mean - noisy.analytic) < 3.0 * noisy.std_error);
  // sd of sum_k xi_k W(t_k) with xi_k = 1, t_k = k/10: sqrt(sum_{j,k} min(t_j, t_k)).
  double var = 0.0;
  for (int j = 1; j <= 9; ++j) {
    for (int k = 1; k <= 9; ++k) var += std::min(j, k) / 10.0;
  }
  CHECK(noisy.std_error * 100.0 == doctest::Approx(std::sqrt(var)).epsilon(0.03));
  const LTPathOutcome again = sample_price_paths(cfg, cfg.schedule.quantities, a, 10000, 5, 4);
  CHECK(again.mean == noisy.mean);
}
