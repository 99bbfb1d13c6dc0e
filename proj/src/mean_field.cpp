#include "hftmfg/mean_field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "hftmfg/errors.hpp"
#include "hftmfg/integrator.hpp"
#include "hftmfg/riccati.hpp"

namespace hftmfg {

namespace {

Eigen::MatrixXd build_A(const Eigen::VectorXd& p, const Eigen::VectorXd& h2,
                        const AversionSpec& aversion, const MarketParams& market) {
  const Eigen::Index N = p.size();
  const Eigen::MatrixXd& Q = aversion.Q;
  const double eta = market.eta;
  const Eigen::VectorXd e = Eigen::VectorXd::Ones(N);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(N, N);

  // (2 eta I + lambdaH e p^T)^{-1} by Sherman-Morrison, using p^T e = 1.
  const Eigen::MatrixXd Minv =
      (I - (market.lambdaH / (2.0 * eta + market.lambdaH)) * e * p.transpose()) / (2.0 * eta);
  const Eigen::RowVectorXd pT = p.transpose();
  const Eigen::MatrixXd B1 =
      market.gammaH * e * pT + 2.0 * eta * Q + market.lambdaH * e * (pT * Q);
  const Eigen::MatrixXd pQ = build_pQ(p, Q);
  const Eigen::VectorXd Phi = aversion.phi - Q * h2;
  const Eigen::MatrixXd B2 = h2.asDiagonal() * pQ + Eigen::MatrixXd(Phi.asDiagonal()) +
                             Q * h2.asDiagonal();

  Eigen::MatrixXd A(2 * N, 2 * N);
  A.topLeftCorner(N, N) = -Minv * B1;
  A.topRightCorner(N, N) = 2.0 * Minv * B2;
  A.bottomLeftCorner(N, N) = I;
  A.bottomRightCorner(N, N) = pQ;
  return A;
}

double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  return smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
}

void fill_aggregates(MeanFieldSolution& sol, const ChainSolution& chain) {
  const TimeGrid& grid = sol.E.grid();
  sol.E_agg = PiecewiseCurve(grid, 1, true);
  sol.mu_agg = PiecewiseCurve(grid, 1, true);
  for (int s = 0; s < grid.segments(); ++s) {
    const Eigen::MatrixXd& p = chain.p.values(s);
    const Eigen::MatrixXd& dp = chain.p.derivatives(s);
    for (Eigen::Index n = 0; n < p.cols(); ++n) {
      const auto pn = p.col(n);
      const auto dpn = dp.col(n);
      sol.E_agg.values(s)(0, n) = pn.dot(sol.E.values(s).col(n));
      sol.E_agg.derivatives(s)(0, n) =
          dpn.dot(sol.E.values(s).col(n)) + pn.dot(sol.E.derivatives(s).col(n));
      sol.mu_agg.values(s)(0, n) = pn.dot(sol.mu.values(s).col(n));
      sol.mu_agg.derivatives(s)(0, n) =
          dpn.dot(sol.mu.values(s).col(n)) + pn.dot(sol.mu.derivatives(s).col(n));
    }
  }
}

void fill_residuals(MeanFieldSolution& sol, const ChainSolution& chain, const ModelConfig& cfg) {
  sol.residuals.terminal = terminal_residual(sol, chain, cfg);
  sol.residuals.max_jump = 0.0;
  for (const JumpResidual& r : jump_conditions_report(sol, cfg)) {
    sol.residuals.max_jump = std::max(sol.residuals.max_jump, r.state_residual);
  }
  if (sol.residuals.terminal > cfg.solver.shooting_tolerance) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "terminal residual %.3g exceeds tolerance %.3g",
                  sol.residuals.terminal, cfg.solver.shooting_tolerance);
    sol.residuals.warnings.emplace_back(buf);
  }
}

}  // namespace

Eigen::MatrixXd assemble_A(double t, Side side, const ChainSolution& chain,
                           const PiecewiseCurve& h2, const AversionSpec& aversion,
                           const MarketParams& market) {
  return build_A(chain.p.eval(t, side), h2.eval(t, side), aversion, market);
}

Eigen::MatrixXd terminal_operator(const Eigen::VectorXd& pT, const AversionSpec& aversion,
                                  const MarketParams& market) {
  const Eigen::Index N = pT.size();
  Eigen::MatrixXd G(N, 2 * N);
  G.leftCols(N) = 2.0 * market.eta * Eigen::MatrixXd::Identity(N, N) +
                  market.lambdaH * Eigen::VectorXd::Ones(N) * pT.transpose();
  G.rightCols(N) = 2.0 * Eigen::MatrixXd(aversion.Gamma.asDiagonal());
  return G;
}

double speed_jump(const MarketParams& market, double xi_k) {
  return market.gamma * xi_k / (market.lambdaH + 2.0 * market.eta);
}

MeanFieldSystem::MeanFieldSystem(const ModelConfig& cfg)
    : MeanFieldSystem(cfg, TimeGrid(cfg.schedule.T, cfg.schedule.times,
                                    cfg.solver.grid_steps_per_unit_time)) {}

MeanFieldSystem::MeanFieldSystem(const ModelConfig& cfg, const TimeGrid& grid)
    : cfg_(cfg), grid_(grid) {
  build();
}

Eigen::MatrixXd MeanFieldSystem::U_at(int s, int n) const {
  const int d = 2 * cfg_.N();
  return Eigen::Map<const Eigen::MatrixXd>(U_.values(s).col(n).data(), d, d);
}

int MeanFieldSystem::chunk_of(int s, int n) const {
  int c = first_chunk_[static_cast<std::size_t>(s)];
  while (c + 1 < shooting_nodes() && chunks_[static_cast<std::size_t>(c + 1)].segment == s &&
         chunks_[static_cast<std::size_t>(c + 1)].first <= n) {
    ++c;
  }
  return c;
}

Eigen::MatrixXd MeanFieldSystem::global_U(int s, int n) const {
  const int c = chunk_of(s, n);
  Eigen::MatrixXd out = U_at(s, n);
  for (int j = c - 1; j >= 0; --j) out = out * chunks_[static_cast<std::size_t>(j)].end;
  return out;
}

void MeanFieldSystem::build() {
  const Integrator method = cfg_.solver.integrator;
  const int N = cfg_.N();
  const int d = 2 * N;
  chain_ = solve_chain(cfg_.aversion, grid_, method);
  h2_ = solve_h2(cfg_.aversion, cfg_.market, grid_, method);

  const int chunk_steps = std::max(
      1, static_cast<int>(std::lround(kShootingInterval * grid_.steps_per_unit_time())));
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  U_ = PiecewiseCurve(grid_, d * d, true);
  chunks_.clear();
  first_chunk_.clear();
  for (int s = 0; s < grid_.segments(); ++s) {
    auto rhs = [&, s](double t, const Eigen::VectorXd& v) -> Eigen::VectorXd {
      const Eigen::MatrixXd A = build_A(chain_.p.eval_in(s, t), h2_.eval_in(s, t), cfg_.aversion,
                                        cfg_.market);
      Eigen::MatrixXd AU = A * Eigen::Map<const Eigen::MatrixXd>(v.data(), d, d);
      return Eigen::Map<const Eigen::VectorXd>(AU.data(), d * d);
    };
    const double h = grid_.step(s);
    const int ns = grid_.steps(s);
    first_chunk_.push_back(shooting_nodes());
    for (int first = 0; first < ns; first += chunk_steps) {
      const int last = std::min(first + chunk_steps, ns);
      Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(I.data(), d * d);
      U_.values(s).col(first) = y;
      U_.derivatives(s).col(first) = rhs(grid_.time(s, first), y);
      for (int n = first; n < last; ++n) {
        ode_step(method, rhs, grid_.time(s, n), h, y);
        if (!y.allFinite()) throw SolverError("fundamental matrix overflow");
        U_.values(s).col(n + 1) = y;
        U_.derivatives(s).col(n + 1) = rhs(grid_.time(s, n + 1), y);
      }
      chunks_.push_back({s, first, last, Eigen::Map<const Eigen::MatrixXd>(y.data(), d, d)});
    }
  }

  // Unknowns: the state z_c = [mu; E] at every shooting node.
  const int J = shooting_nodes();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d * J, d * J);
  M.block(0, N, N, N).setIdentity();
  for (int c = 0; c + 1 < J; ++c) {
    const int r = N + d * c;
    M.block(r, d * (c + 1), d, d).setIdentity();
    M.block(r, d * c, d, d) = -chunks_[static_cast<std::size_t>(c)].end;
  }
  terminal_ = terminal_operator(chain_.p.back(), cfg_.aversion, cfg_.market);
  M.block(d * J - N, d * (J - 1), N, d) = terminal_ * chunks_.back().end;

  lu_ = M.partialPivLu();
  const double rc = lu_.rcond();
  cond_ = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
  if (!(cond_ <= kMaxTerminalCondition)) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "shooting system is singular (condition number %.3g)", cond_);
    throw SolverError(buf);
  }
}

MeanFieldSolution MeanFieldSystem::solve(const Eigen::VectorXd& E0, std::span<const double> xi) const {
  const int N = cfg_.N();
  const int d = 2 * N;
  const int J = shooting_nodes();
  if (E0.size() != N) throw SolverError("E0 has wrong length");
  if (static_cast<int>(xi.size()) != grid_.trades()) throw SolverError("xi has wrong length");
  const double sg = cfg_.market.gamma / (cfg_.market.lambdaH + 2.0 * cfg_.market.eta);

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d * J);
  rhs.head(N) = E0;
  for (int c = 0; c + 1 < J; ++c) {
    const int next = chunks_[static_cast<std::size_t>(c + 1)].segment;
    if (next != chunks_[static_cast<std::size_t>(c)].segment) {
      rhs.segment(N + d * c, N).setConstant(-sg * xi[static_cast<std::size_t>(next - 1)]);
    }
  }
  const Eigen::VectorXd z = lu_.solve(rhs);

  MeanFieldSolution sol;
  sol.c0 = z.head(d);
  sol.c0.tail(N) = E0;
  sol.E0 = E0;
  sol.xi.assign(xi.begin(), xi.end());
  sol.E = PiecewiseCurve(grid_, N, true);
  sol.mu = PiecewiseCurve(grid_, N, true);

  int c = 0;
  for (int s = 0; s < grid_.segments(); ++s) {
    c = first_chunk_[static_cast<std::size_t>(s)];
    for (int n = 0; n <= grid_.steps(s); ++n) {
      while (c + 1 < J && chunks_[static_cast<std::size_t>(c + 1)].segment == s &&
             chunks_[static_cast<std::size_t>(c + 1)].first <= n) {
        ++c;
      }
      const auto zc = z.segment(d * c, d);
      const Eigen::VectorXd x = Eigen::Map<const Eigen::MatrixXd>(U_.values(s).col(n).data(), d, d) * zc;
      const Eigen::VectorXd dx =
          Eigen::Map<const Eigen::MatrixXd>(U_.derivatives(s).col(n).data(), d, d) * zc;
      sol.mu.values(s).col(n) = x.head(N);
      sol.E.values(s).col(n) = x.tail(N);
      sol.mu.derivatives(s).col(n) = dx.head(N);
      sol.E.derivatives(s).col(n) = dx.tail(N);
    }
  }
  // E(0) is pinned to the input exactly rather than to its floating-point solve.
  sol.E.values(0).col(0) = E0;

  fill_aggregates(sol, chain_);
  sol.residuals.condition_number = cond_;
  fill_residuals(sol, chain_, cfg_);
  return sol;
}

MeanFieldSolution solve_partial(const ModelConfig& cfg, std::span<const double> xi) {
  MeanFieldSystem sys(cfg);
  return sys.solve(cfg.population.E0, xi);
}

ClosedFormRoots closed_form_roots(const MarketParams& market, double phi) {
  const double c = market.lambdaH + 2.0 * market.eta;
  const double r = std::sqrt(market.gammaH * market.gammaH + 8.0 * phi * c);
  return {(-market.gammaH + r) / (2.0 * c), (-market.gammaH - r) / (2.0 * c)};
}

MeanFieldSolution closed_form_n1(const ModelConfig& cfg, std::span<const double> xi,
                                 const TimeGrid& grid) {
  if (cfg.N() != 1) throw SolverError("closed form requires a single aversion state");
  const MarketParams& mk = cfg.market;
  const double c = mk.lambdaH + 2.0 * mk.eta;
  const double sg = mk.gamma / c;
  const double Gam = cfg.aversion.Gamma(0);
  const double E0 = cfg.population.E0(0);
  const double T = grid.T();
  const int K = grid.trades();
  if (static_cast<int>(xi.size()) != K) throw SolverError("xi has wrong length");
  const auto [th1, th2] = closed_form_roots(mk, cfg.aversion.phi(0));

  std::vector<double> A(static_cast<std::size_t>(K + 1)), B(static_cast<std::size_t>(K + 1));
  const bool repeated = (th1 - th2) * T < 1e-6;
  if (!repeated) {
    // E = A_k e^{th1 t} + B_k e^{th2 t}
    std::vector<double> x(static_cast<std::size_t>(K + 1), 0.0), y(x);
    for (int k = 1; k <= K; ++k) {
      const double tk = grid.trade_time(k);
      const double w = sg * xi[static_cast<std::size_t>(k - 1)] / (th2 - th1);
      x[k] = x[k - 1] + w * std::exp(-th1 * tk);
      y[k] = y[k - 1] + w * std::exp(-th2 * tk);
    }
    const double e1 = std::exp(th1 * T);
    const double e2 = std::exp(th2 * T);
    const double xK = x[K];
    const double yK = y[K];
    const double num = -c * (xK * th1 * e1 + (E0 - yK) * th2 * e2) - 2.0 * Gam * (xK * e1 + (E0 - yK) * e2);
    const double den = c * (th1 * e1 - th2 * e2) + 2.0 * Gam * (e1 - e2);
    A[0] = num / den;
    B[0] = E0 - A[0];
    for (int k = 1; k <= K; ++k) {
      A[k] = A[0] + x[k];
      B[k] = B[0] - y[k];
    }
  } else {
    // E = (A_k + B_k t) e^{th t}; a speed jump of -sg xi_k at t_k keeps E continuous.
    const double th = 0.5 * (th1 + th2);
    std::vector<double> dA(static_cast<std::size_t>(K + 1), 0.0), dB(dA);
    for (int k = 1; k <= K; ++k) {
      const double tk = grid.trade_time(k);
      dB[k] = -sg * xi[static_cast<std::size_t>(k - 1)] * std::exp(-th * tk);
      dA[k] = -dB[k] * tk;
    }
    double sumA = 0.0, sumB = 0.0;
    for (int k = 1; k <= K; ++k) {
      sumA += dA[k];
      sumB += dB[k];
    }
    const double AK = E0 + sumA;
    const double BK = -AK * (c * th + 2.0 * Gam) / (c * (1.0 + th * T) + 2.0 * Gam * T);
    A[0] = E0;
    B[0] = BK - sumB;
    for (int k = 1; k <= K; ++k) {
      A[k] = A[k - 1] + dA[k];
      B[k] = B[k - 1] + dB[k];
    }
  }

  MeanFieldSolution sol;
  sol.E = PiecewiseCurve(grid, 1, true);
  sol.mu = PiecewiseCurve(grid, 1, true);
  const double th = 0.5 * (th1 + th2);
  for (int s = 0; s < grid.segments(); ++s) {
    const double a = A[static_cast<std::size_t>(s)];
    const double b = B[static_cast<std::size_t>(s)];
    for (int n = 0; n <= grid.steps(s); ++n) {
      const double t = grid.time(s, n);
      double E, dE, ddE;
      if (!repeated) {
        const double u1 = a * std::exp(th1 * t);
        const double u2 = b * std::exp(th2 * t);
        E = u1 + u2;
        dE = th1 * u1 + th2 * u2;
        ddE = th1 * th1 * u1 + th2 * th2 * u2;
      } else {
        const double et = std::exp(th * t);
        const double lin = a + b * t;
        E = lin * et;
        dE = (b + th * lin) * et;
        ddE = (2.0 * th * b + th * th * lin) * et;
      }
      sol.E.values(s)(0, n) = E;
      sol.E.derivatives(s)(0, n) = dE;
      sol.mu.values(s)(0, n) = dE;
      sol.mu.derivatives(s)(0, n) = ddE;
    }
  }
  sol.E.values(0)(0, 0) = E0;
  sol.E_agg = sol.E;
  sol.mu_agg = sol.mu;
  sol.E0 = Eigen::VectorXd::Constant(1, E0);
  sol.c0 = Eigen::Vector2d(sol.mu.front()(0), E0);
  sol.xi.assign(xi.begin(), xi.end());

  const double pterm = c * sol.mu.back()(0) + 2.0 * Gam * sol.E.back()(0);
  sol.residuals.terminal = std::abs(pterm);
  for (const JumpResidual& r : jump_conditions_report(sol, cfg)) {
    sol.residuals.max_jump = std::max(sol.residuals.max_jump, r.state_residual);
  }
  return sol;
}

std::vector<JumpResidual> jump_conditions_report(const MeanFieldSolution& sol,
                                                 const ModelConfig& cfg) {
  std::vector<JumpResidual> out;
  const TimeGrid& grid = sol.grid();
  for (int k = 1; k <= grid.trades(); ++k) {
    JumpResidual r;
    r.k = k;
    r.t = grid.trade_time(k);
    r.expected = speed_jump(cfg.market, sol.xi[static_cast<std::size_t>(k - 1)]);
    r.aggregate_jump = sol.mu_agg.left(k)(0) - sol.mu_agg.right(k)(0);
    r.aggregate_residual = std::abs(r.aggregate_jump - r.expected);
    const Eigen::VectorXd dmu = sol.mu.left(k) - sol.mu.right(k);
    r.state_residual = (dmu.array() - r.expected).abs().maxCoeff();
    r.E_continuity = (sol.E.left(k) - sol.E.right(k)).cwiseAbs().maxCoeff();
    out.push_back(r);
  }
  return out;
}

double terminal_residual(const MeanFieldSolution& sol, const ChainSolution& chain,
                         const ModelConfig& cfg) {
  const Eigen::MatrixXd G = terminal_operator(chain.p.back(), cfg.aversion, cfg.market);
  Eigen::VectorXd z(2 * cfg.N());
  z << sol.mu.back(), sol.E.back();
  return (G * z).norm();
}

double aggregate_identity_residual(const MeanFieldSolution& sol) {
  const TimeGrid& grid = sol.grid();
  double worst = 0.0;
  for (int s = 0; s < grid.segments(); ++s) {
    const Eigen::MatrixXd& E = sol.E_agg.values(s);
    const Eigen::MatrixXd& mu = sol.mu_agg.values(s);
    const double h = grid.step(s);
    for (int n = 1; n < grid.steps(s); ++n) {
      const double d = (E(0, n + 1) - E(0, n - 1)) / (2.0 * h);
      worst = std::max(worst, std::abs(d - mu(0, n)));
    }
  }
  return worst;
}

double per_state_drift_residual(const MeanFieldSolution& sol, const ChainSolution& chain) {
  const TimeGrid& grid = sol.grid();
  double worst = 0.0;
  for (int s = 0; s < grid.segments(); ++s) {
    const Eigen::MatrixXd& E = sol.E.values(s);
    const Eigen::MatrixXd& mu = sol.mu.values(s);
    const double h = grid.step(s);
    for (int n = 2; n + 2 <= grid.steps(s); ++n) {
      const Eigen::VectorXd dE =
          (-E.col(n + 2) + 8.0 * E.col(n + 1) - 8.0 * E.col(n - 1) + E.col(n - 2)) / (12.0 * h);
      const Eigen::MatrixXd pQ = build_pQ(chain.p.values(s).col(n), chain.Q);
      const Eigen::VectorXd r = dE - mu.col(n) - pQ * E.col(n);
      worst = std::max(worst, r.cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace hftmfg
