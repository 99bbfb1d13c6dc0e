#include <doctest.h>

#include <cmath>
#include <random>

#include "hftmfg/chain.hpp"
#include "hftmfg/errors.hpp"
#include "hftmfg/integrator.hpp"
#include "hftmfg/mean_field.hpp"
#include "hftmfg/presets.hpp"
#include "hftmfg/riccati.hpp"
#include "oracles.hpp"

using namespace hftmfg;

namespace {

TimeGrid grid_for(const ModelConfig& cfg, int steps) {
  return TimeGrid(cfg.schedule.T, cfg.schedule.times, steps);
}

}  // namespace

TEST_CASE("two-state chain matches closed form and conserves mass") {
  const ModelConfig cfg = two_state(0.0, 0.0, 10.0, 2.0, 0.2, 0.8, Mode::Partial);
  const TimeGrid grid = grid_for(cfg, 1000);
  const ChainSolution ch = solve_chain(cfg.aversion, grid, Integrator::RK4);
  CHECK(ch.p.back()(0) == doctest::Approx(0.8 - 0.3 * std::exp(-1.0)).epsilon(1e-12));
  for (double t = 0.0; t <= 1.0; t += 0.0137) {
    const Eigen::VectorXd p = ch.p.eval(t);
    CHECK(p(0) == doctest::Approx(oracle::two_state_p1(0.2, 0.8, 0.5, t)).epsilon(1e-10));
    CHECK(std::abs(p.sum() - 1.0) < 1e-13);
  }
}

TEST_CASE("pQ rows sum to zero") {
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> U(0.05, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd Q(3, 3);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) Q(i, j) = i == j ? 0.0 : U(gen);
      Q(i, i) = -Q.row(i).sum();
    }
    Eigen::Vector3d p(U(gen), U(gen), U(gen));
    p /= p.sum();
    const Eigen::MatrixXd pQ = build_pQ(p, Q);
    CHECK(pQ.rowwise().sum().cwiseAbs().maxCoeff() < 1e-13);
    CHECK(pQ(0, 1) == doctest::Approx(p(1) * Q(1, 0) / p(0)));
  }
}

TEST_CASE("chain losing positivity is reported") {
  AversionSpec av;
  av.Gamma = Eigen::Vector2d(0.0, 0.0);
  av.phi = Eigen::Vector2d(0.0, 0.0);
  av.Q.resize(2, 2);
  av.Q << -1.0, 1.0, 0.0, 0.0;
  av.p0 = Eigen::Vector2d(0.0, 1.0);
  const std::vector<double> times = {0.5};
  CHECK_THROWS_AS(solve_chain(av, TimeGrid(1.0, times, 200), Integrator::RK4), SolverError);
}

TEST_CASE("scalar Riccati closed form") {
  for (double G : {0.0, 0.1, 2.0}) {
    for (double phi : {0.0, 5.0, 10.0}) {
      const ModelConfig cfg = baseline_partial(G, phi);
      const TimeGrid grid = grid_for(cfg, 1000);
      const PiecewiseCurve h2 = solve_h2(cfg.aversion, cfg.market, grid, Integrator::RK4);
      for (double t = 0.0; t <= 1.0; t += 0.01) {
        CAPTURE(G);
        CAPTURE(phi);
        CAPTURE(t);
        CHECK(std::abs(h2.eval(t)(0) - oracle::scalar_h2(0.05, phi, G, 1.0 - t)) < 1e-7);
      }
    }
  }
  const ModelConfig g2 = baseline_partial(2.0, 0.0);
  const PiecewiseCurve h2 = solve_h2(g2.aversion, g2.market, grid_for(g2, 1000), Integrator::RK4);
  CHECK(h2.front()(0) == doctest::Approx(-0.1 / 2.05).epsilon(1e-10));
}

TEST_CASE("Riccati at its fixed point stays put") {
  ModelConfig cfg = baseline_partial(0.5, 5.0);
  const PiecewiseCurve h2 = solve_h2(cfg.aversion, cfg.market, grid_for(cfg, 500), Integrator::RK4);
  for (int s = 0; s < h2.grid().segments(); ++s) {
    CHECK((h2.values(s).array() + 0.5).abs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("Riccati box invariant holds on every preset") {
  for (const auto& p : all_presets()) {
    CAPTURE(p.name);
    const PiecewiseCurve h2 =
        solve_h2(p.cfg.aversion, p.cfg.market, grid_for(p.cfg, 1000), Integrator::RK4);
    CHECK(box_violation(h2, riccati_box_bound(p.cfg.aversion, p.cfg.market)) == 0.0);
    CHECK(h2.max_abs() <= riccati_box_bound(p.cfg.aversion, p.cfg.market) + kBoxLowerSlack);
  }
}

TEST_CASE("observed convergence orders") {
  const ModelConfig cfg = baseline_partial(2.0, 10.0);
  // Compared at t = 0.9, before h2 settles onto its fixed point.
  const double exact = oracle::scalar_h2(0.05, 10.0, 2.0, 0.1);
  for (Integrator m : {Integrator::Euler, Integrator::RK4}) {
    double prev = 0.0;
    for (int steps : {2000, 4000, 8000}) {
      const PiecewiseCurve h2 = solve_h2(cfg.aversion, cfg.market, grid_for(cfg, steps), m);
      const double err = std::abs(h2.right(9)(0) - exact);
      if (prev > 0.0) CHECK(std::log2(prev / err) == doctest::Approx(order(m)).epsilon(0.1));
      prev = err;
    }
  }
}

TEST_CASE("recovered h1 agrees with the backward h1 equation") {
  for (const char* name : {"baseline_Gamma2_phi10", "two_state_partial_x0.2_y0.8", "two_state_mixed_partial"}) {
    CAPTURE(name);
    ModelConfig cfg;
    for (const auto& p : all_presets()) {
      if (p.name == name) cfg = p.cfg;
    }
    REQUIRE(cfg.N() > 0);
    MeanFieldSystem sys(cfg);
    const MeanFieldSolution mf = sys.solve(cfg.population.E0, cfg.schedule.quantities);
    const PiecewiseCurve rec = recover_h1(mf, sys.h2(), cfg.aversion, cfg.market);
    const PiecewiseCurve integ = integrate_h1(mf, sys.h2(), cfg.aversion, cfg.market, Integrator::RK4);
    CHECK(sup_distance(rec, integ) < 1e-7);
    CHECK(rec.back().cwiseAbs().maxCoeff() < 1e-7);
    // h1 jumps by gamma xi_k at each trade.
    for (int k = 1; k <= cfg.K(); ++k) {
      const Eigen::VectorXd jump = rec.left(k) - rec.right(k);
      CHECK((jump.array() - cfg.market.gamma * cfg.schedule.quantities[k - 1]).abs().maxCoeff() < 1e-7);
    }
  }
}

TEST_CASE("h0 with constant h1 and no switching") {
  // With lambdaH = 0 and h1 forced constant the h0 equation integrates to c^2 (T - t) / (4 eta).
  ModelConfig cfg = baseline_partial(0.0, 0.0);
  cfg.market.lambdaH = 0.0;
  MeanFieldSystem sys(cfg);
  const MeanFieldSolution mf = sys.solve(cfg.population.E0, cfg.schedule.quantities);
  PiecewiseCurve h1(sys.grid(), 1, false);
  const double c = 0.8;
  for (int s = 0; s < sys.grid().segments(); ++s) h1.values(s).setConstant(c);
  const PiecewiseCurve h0 = integrate_h0(mf, h1, cfg.aversion, cfg.market, Integrator::RK4);
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    CHECK(h0.eval(t)(0) == doctest::Approx(c * c * (1.0 - t) / (4.0 * 0.05)).epsilon(1e-10));
  }
}

TEST_CASE("feedback forms agree and the value hits its terminal payoff") {
  const ModelConfig cfg = two_state(0.0, 0.0, 10.0, 2.0, 0.5, 0.5, Mode::Partial);
  MeanFieldSystem sys(cfg);
  const MeanFieldSolution mf = sys.solve(cfg.population.E0, cfg.schedule.quantities);
  const HFTValue v = build_hft_value(mf, sys.h2(), cfg);
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> T(0.0, 1.0), X(-1.0, 1.0);
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const double t = T(gen), x = X(gen);
    const int i = n % 2;
    worst = std::max(worst, std::abs(v.control(t, x, i) -
                                     control_from_deviation(mf, sys.h2(), cfg.market.eta, t, x, i)));
  }
  CHECK(worst < 1e-6);
  for (int i = 0; i < 2; ++i) {
    for (double x : {-0.7, 0.0, 0.4}) {
      CHECK(v.value(1.0, x, 3.0, i) ==
            doctest::Approx(3.0 * x - cfg.aversion.Gamma(i) * x * x).epsilon(1e-9));
    }
  }
}
