#include <doctest.h>

#include <cmath>
#include <numeric>

#include "hftmfg/errors.hpp"
#include "hftmfg/lt_strategy.hpp"
#include "hftmfg/presets.hpp"
#include "oracles.hpp"

using namespace hftmfg;

namespace {

double sample_std(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1));
}

double revenue(const MarketParams& mk, const std::vector<double>& xi, const Eigen::VectorXd& a, double P0) {
  double xi0 = 0.0;
  for (double x : xi) xi0 -= x;
  return oracle::revenue(mk, xi, a, P0, xi0);
}

double profit_difference(double lambdaH) {
  ModelConfig cfg = baseline_partial(2.0, 10.0);
  cfg.market.lambdaH = lambdaH;
  const MeanFieldSolution mf = solve_partial(cfg, cfg.schedule.quantities);
  return lt_profit(cfg, cfg.schedule.quantities, mf, 0.0).difference;
}

}  // namespace

TEST_CASE("baseline expected profit without HFTs") {
  const ModelConfig cfg = baseline_partial(0.0, 0.0);
  const MeanFieldSolution mf = solve_partial(cfg, cfg.schedule.quantities);
  const ProfitReport r = lt_profit(cfg, cfg.schedule.quantities, mf, 0.0);
  // -(gamma * 45 + 9 (lambda + eta0)) = -(45 + 4.05)
  CHECK(std::abs(r.profit_no_hft - (-49.05)) <= 1e-10);
  CHECK(r.profit_with_hft == doctest::Approx(r.profit_no_hft + r.difference));
  CHECK(revenue(cfg.market, cfg.schedule.quantities, lt_impacts(mf, cfg), 0.0) ==
        doctest::Approx(r.profit_with_hft).epsilon(1e-12));
}

TEST_CASE("profit difference does not depend on P0") {
  const ModelConfig cfg = baseline_partial(2.0, 10.0);
  const MeanFieldSolution mf = solve_partial(cfg, cfg.schedule.quantities);
  const ProfitReport a = lt_profit(cfg, cfg.schedule.quantities, mf, 0.0);
  const ProfitReport b = lt_profit(cfg, cfg.schedule.quantities, mf, 7.5);
  CHECK(a.difference == doctest::Approx(b.difference).epsilon(1e-13));
  CHECK(b.profit_no_hft - a.profit_no_hft == doctest::Approx(-7.5 * 9.0));
}

TEST_CASE("temporary impact scan changes sign exactly once") {
  int changes = 0;
  double prev = profit_difference(0.02);
  CHECK(prev < 0.0);
  for (int n = 1; n <= 49; ++n) {
    const double cur = profit_difference(0.02 + n * 0.02);
    if ((prev < 0.0) != (cur < 0.0)) {
      CHECK(prev < 0.0);
      ++changes;
    }
    prev = cur;
  }
  CHECK(changes == 1);
  CHECK(prev > 0.0);
}

TEST_CASE("best response to frozen impacts") {
  const MarketParams mk;
  Eigen::VectorXd a(4);
  a << 0.3, -0.2, 0.5, 0.1;
  const std::vector<double> xi = lt_best_response(a, -4.0, mk);
  CHECK(std::accumulate(xi.begin(), xi.end(), 0.0) == doctest::Approx(4.0).epsilon(1e-14));
  // Any feasible perturbation lowers the revenue.
  const double base = revenue(mk, xi, a, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (i == j) continue;
      std::vector<double> p = xi;
      p[i] += 1e-3;
      p[j] -= 1e-3;
      CHECK(revenue(mk, p, a, 0.0) < base);
    }
  }
}

TEST_CASE("no HFT impact gives uniform trading") {
  ModelConfig cfg = baseline_overall(0.0, 5.0);
  cfg.market.gammaH = 0.0;
  cfg.market.lambdaH = 0.0;
  const OverallEquilibrium eq = solve_overall(cfg);
  for (double x : eq.xi_star) CHECK(std::abs(x - 1.0) <= 1e-9);
}

TEST_CASE("overall equilibrium is a fixed point and concave") {
  for (const auto& p : all_presets()) {
    if (p.cfg.mode != Mode::Overall) continue;
    CAPTURE(p.name);
    const OverallEquilibrium eq = solve_overall(p.cfg);
    CHECK(eq.fixed_point_residual < 1e-9);
    CHECK(eq.basis_residual < 1e-9);
    CHECK(std::accumulate(eq.xi_star.begin(), eq.xi_star.end(), 0.0) ==
          doctest::Approx(9.0).epsilon(1e-13));
    CHECK(eq.concavity.frozen_max_eigenvalue < 0.0);
    CHECK(eq.concavity.negative_definite);
    // Frozen-curve optimality: no feasible perturbation helps.
    const Eigen::VectorXd a = lt_impacts(eq.mean_field, p.cfg);
    const double base = revenue(p.cfg.market, eq.xi_star, a, 0.0);
    for (std::size_t i = 0; i + 1 < eq.xi_star.size(); ++i) {
      std::vector<double> q = eq.xi_star;
      q[i] += 1e-3;
      q.back() -= 1e-3;
      CHECK(revenue(p.cfg.market, q, a, 0.0) < base);
    }
  }
}

TEST_CASE("trading dispersion falls with running aversion") {
  double prev = INFINITY;
  for (double phi : {0.0, 1.0, 5.0}) {
    const double s = sample_std(solve_overall(baseline_overall(0.0, phi)).xi_star);
    CHECK(s < prev);
    prev = s;
  }
}

TEST_CASE("high terminal aversion back-loads the large trader") {
  const OverallEquilibrium eq = solve_overall(baseline_overall(2.0, 0.0));
  CHECK(eq.xi_star.back() > eq.xi_star[4]);
}

TEST_CASE("overall mode needs xi0") {
  ModelConfig cfg = baseline_overall(0.0, 0.0);
  cfg.schedule.xi0.reset();
  CHECK_THROWS_AS(solve_overall(cfg), ValidationError);
}
