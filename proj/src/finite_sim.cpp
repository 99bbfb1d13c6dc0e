#include "hftmfg/finite_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "hftmfg/errors.hpp"
#include "hftmfg/integrator.hpp"
#include "hftmfg/lt_strategy.hpp"
#include "hftmfg/parallel.hpp"
#include "hftmfg/riccati.hpp"
#include "hftmfg/rng.hpp"

namespace hftmfg {

namespace {

// Coefficients of the deviation D = X - E_Y(t) of one agent from its state
// mean: dD/dt = g_Y(t) D + f_Y(t), with g = h2/eta and f = -(p_Q E).
struct DeviationTables {
  std::vector<Eigen::MatrixXd> g_node, f_node;  // N x (steps + 1) per segment
  std::vector<Eigen::MatrixXd> g_mid, f_mid;    // N x steps per segment
};

struct Coeffs {
  Eigen::VectorXd g, f;
};

Coeffs coeffs_at(const MeanFieldSystem& sys, const MeanFieldSolution& mf, int s, double t) {
  const double eta = sys.config().market.eta;
  Coeffs c;
  c.g = sys.h2().eval_in(s, t) / eta;
  c.f = -(build_pQ(sys.chain().p.eval_in(s, t), sys.chain().Q) * mf.E.eval_in(s, t));
  return c;
}

DeviationTables build_tables(const MeanFieldSystem& sys, const MeanFieldSolution& mf) {
  const TimeGrid& grid = sys.grid();
  const int N = sys.config().N();
  const double eta = sys.config().market.eta;
  DeviationTables tb;
  for (int s = 0; s < grid.segments(); ++s) {
    const int ns = grid.steps(s);
    Eigen::MatrixXd gn = sys.h2().values(s) / eta;
    Eigen::MatrixXd fn(N, ns + 1);
    for (int n = 0; n <= ns; ++n) {
      fn.col(n) = -(build_pQ(sys.chain().p.values(s).col(n), sys.chain().Q) * mf.E.values(s).col(n));
    }
    Eigen::MatrixXd gm(N, ns), fm(N, ns);
    for (int n = 0; n < ns; ++n) {
      const Coeffs c = coeffs_at(sys, mf, s, 0.5 * (grid.time(s, n) + grid.time(s, n + 1)));
      gm.col(n) = c.g;
      fm.col(n) = c.f;
    }
    tb.g_node.push_back(std::move(gn));
    tb.f_node.push_back(std::move(fn));
    tb.g_mid.push_back(std::move(gm));
    tb.f_mid.push_back(std::move(fm));
  }
  return tb;
}

// One step of dD/dt = g D + f with coefficients at start, midpoint and end.
double deviation_step(Integrator method, double D, double h, double g0, double f0, double gm,
                      double fm, double g1, double f1) {
  if (method == Integrator::Euler) return D + h * (g0 * D + f0);
  const double k1 = g0 * D + f0;
  const double k2 = gm * (D + 0.5 * h * k1) + fm;
  const double k3 = gm * (D + 0.5 * h * k2) + fm;
  const double k4 = g1 * (D + h * k3) + f1;
  return D + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

int sample_state(const Eigen::VectorXd& probs, double u) {
  double acc = 0.0;
  const int n = static_cast<int>(probs.size());
  for (int i = 0; i + 1 < n; ++i) {
    acc += probs(i);
    if (u < acc) return i;
  }
  return n - 1;
}

struct BlockAccumulator {
  std::vector<int> counts;     // node-major, N per node
  std::vector<double> sum_dev;
  double max_abs_X = 0.0;
  double max_abs_X0 = 0.0;
};

}  // namespace

SimulationResult simulate_population(const MeanFieldSystem& sys, const MeanFieldSolution& mf,
                                     const SimulationOptions& opts) {
  const ModelConfig& cfg = sys.config();
  const TimeGrid& grid = sys.grid();
  const int N = cfg.N();
  const int M = opts.M;
  if (M < 1) throw ValidationError("M", "agent count must be positive");
  const Eigen::VectorXd& E0 = mf.E0;
  const double spread = cfg.population.inventory_bound - E0.cwiseAbs().maxCoeff();
  if (spread < 0.0) {
    throw ValidationError("population.inventory_bound", "bound is smaller than max |E0|");
  }
  const long nodes = grid.total_nodes();
  if (static_cast<long>(opts.dump_agents) * nodes > kMaxDumpRows) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "trajectory dump of %d agents would exceed %ld rows",
                  opts.dump_agents, kMaxDumpRows);
    throw ValidationError("dump_agents", buf);
  }

  const DeviationTables tb = build_tables(sys, mf);
  const Integrator method = cfg.solver.integrator;
  const Eigen::MatrixXd& Q = cfg.aversion.Q;
  const Eigen::VectorXd rates = -Q.diagonal();
  const int blocks = (M + kAgentBlock - 1) / kAgentBlock;
  std::vector<BlockAccumulator> acc(static_cast<std::size_t>(blocks));
  std::vector<std::vector<TrajectoryRow>> dumps(static_cast<std::size_t>(blocks));
  PopulationPath path;
  path.M = M;
  path.v_first = PiecewiseCurve(grid, 1, false);
  const int last_segment = grid.segments() - 1;

  auto run_block = [&](int b) {
    BlockAccumulator& a = acc[static_cast<std::size_t>(b)];
    a.counts.assign(static_cast<std::size_t>(nodes * N), 0);
    a.sum_dev.assign(static_cast<std::size_t>(nodes * N), 0.0);
    const int j_end = std::min(M, (b + 1) * kAgentBlock);
    for (int j = b * kAgentBlock; j < j_end; ++j) {
      CounterRng rng(opts.seed, static_cast<std::uint64_t>(j));
      int Y = sample_state(cfg.aversion.p0, rng.uniform());
      const double u = rng.uniform();
      const double X0 = opts.identical_initial ? E0(Y) : E0(Y) + spread * (2.0 * u - 1.0);
      double D = X0 - E0(Y);
      double next_event = rates(Y) > 0.0 ? rng.exponential(rates(Y)) : std::numeric_limits<double>::infinity();
      a.max_abs_X0 = std::max(a.max_abs_X0, std::abs(X0));
      if (j == 0) {
        path.X0_first = X0;
        path.Y0_first = Y;
      }

      auto record = [&](int s, int n) {
        const std::size_t idx = static_cast<std::size_t>(grid.node_index(s, n)) * N + Y;
        a.counts[idx] += 1;
        a.sum_dev[idx] += D;
        const double X = mf.E.values(s)(Y, n) + D;
        a.max_abs_X = std::max(a.max_abs_X, std::abs(X));
        if (j == 0) {
          path.v_first.values(s)(0, n) = mf.mu.values(s)(Y, n) + tb.g_node[static_cast<std::size_t>(s)](Y, n) * D;
        }
        if (j < opts.dump_agents) {
          const Side side = (n == grid.steps(s) && s < last_segment) ? Side::Left : Side::Right;
          dumps[static_cast<std::size_t>(b)].push_back({j, grid.time(s, n), side, Y, X});
        }
      };

      // Integrates D over [ta, tb] inside segment s with coefficients evaluated on the fly.
      auto free_step = [&](int s, double ta, double tb_) {
        const Coeffs c0 = coeffs_at(sys, mf, s, ta);
        const Coeffs cm = coeffs_at(sys, mf, s, 0.5 * (ta + tb_));
        const Coeffs c1 = coeffs_at(sys, mf, s, tb_);
        D = deviation_step(method, D, tb_ - ta, c0.g(Y), c0.f(Y), cm.g(Y), cm.f(Y), c1.g(Y), c1.f(Y));
      };

      for (int s = 0; s < grid.segments(); ++s) {
        const Eigen::MatrixXd& gn = tb.g_node[static_cast<std::size_t>(s)];
        const Eigen::MatrixXd& fn = tb.f_node[static_cast<std::size_t>(s)];
        const Eigen::MatrixXd& gm = tb.g_mid[static_cast<std::size_t>(s)];
        const Eigen::MatrixXd& fm = tb.f_mid[static_cast<std::size_t>(s)];
        const double h = grid.step(s);
        record(s, 0);
        for (int n = 0; n < grid.steps(s); ++n) {
          const double t1 = grid.time(s, n + 1);
          if (next_event >= t1) {
            D = deviation_step(method, D, h, gn(Y, n), fn(Y, n), gm(Y, n), fm(Y, n), gn(Y, n + 1),
                               fn(Y, n + 1));
          } else {
            double t = grid.time(s, n);
            while (next_event < t1) {
              const double tau = next_event;
              if (tau > t) free_step(s, t, tau);
              // Destination drawn proportionally to the off-diagonal rates.
              const double r = rng.uniform() * rates(Y);
              int dest = Y;
              double cum = 0.0;
              for (int i = 0; i < N; ++i) {
                if (i == Y) continue;
                cum += Q(Y, i);
                dest = i;
                if (r < cum) break;
              }
              D += mf.E.eval_in(s, tau)(Y) - mf.E.eval_in(s, tau)(dest);
              Y = dest;
              t = tau;
              next_event = rates(Y) > 0.0 ? tau + rng.exponential(rates(Y))
                                          : std::numeric_limits<double>::infinity();
            }
            free_step(s, t, t1);
          }
          record(s, n + 1);
        }
      }
    }
  };
  parallel_for(blocks, opts.threads, run_block);

  // Combine block partial sums in block order.
  std::vector<long> counts(static_cast<std::size_t>(nodes * N), 0);
  std::vector<double> sum_dev(static_cast<std::size_t>(nodes * N), 0.0);
  double max_abs_X = 0.0, max_abs_X0 = 0.0;
  for (const BlockAccumulator& a : acc) {
    for (std::size_t i = 0; i < counts.size(); ++i) {
      counts[i] += a.counts[i];
      sum_dev[i] += a.sum_dev[i];
    }
    max_abs_X = std::max(max_abs_X, a.max_abs_X);
    max_abs_X0 = std::max(max_abs_X0, a.max_abs_X0);
  }
  for (auto& d : dumps) path.dump.insert(path.dump.end(), d.begin(), d.end());

  path.theta = PiecewiseCurve(grid, N, false);
  path.Z = PiecewiseCurve(grid, N, false);
  path.Xbar = PiecewiseCurve(grid, 1, false);
  path.vbar = PiecewiseCurve(grid, 1, false);
  ConvergenceMetrics m;
  const double invM = 1.0 / M;
  double C2 = 0.0;
  for (int s = 0; s < grid.segments(); ++s) {
    const Eigen::MatrixXd& gn = tb.g_node[static_cast<std::size_t>(s)];
    const double h = grid.step(s);
    double prev_sq = 0.0;
    for (int n = 0; n <= grid.steps(s); ++n) {
      const std::size_t base = static_cast<std::size_t>(grid.node_index(s, n)) * N;
      const auto p = sys.chain().p.values(s).col(n);
      const auto E = mf.E.values(s).col(n);
      const auto mu = mf.mu.values(s).col(n);
      double xbar = 0.0, vbar = 0.0, th_dev = 0.0, z_dev = 0.0;
      for (int i = 0; i < N; ++i) {
        const double theta = counts[base + i] * invM;
        const double dev = sum_dev[base + i] * invM;
        const double Z = theta * E(i) + dev;
        path.theta.values(s)(i, n) = theta;
        path.Z.values(s)(i, n) = Z;
        xbar += Z;
        vbar += theta * mu(i) + gn(i, n) * dev;
        th_dev += (theta - p(i)) * (theta - p(i));
        z_dev += (Z - p(i) * E(i)) * (Z - p(i) * E(i));
        const double beta = gn(i, n);
        C2 = std::max({C2, std::abs(beta), std::abs(mu(i) - beta * E(i))});
      }
      path.Xbar.values(s)(0, n) = xbar;
      path.vbar.values(s)(0, n) = vbar;
      m.theta_dev = std::max(m.theta_dev, th_dev);
      m.Z_dev = std::max(m.Z_dev, z_dev);
      const double e = vbar - mf.mu_agg.values(s)(0, n);
      const double sq = e * e;
      if (n > 0) m.vbar_l2 += 0.5 * h * (prev_sq + sq);
      prev_sq = sq;
    }
  }
  const double T = grid.T();
  m.max_abs_X = max_abs_X;
  m.gronwall_bound = (max_abs_X0 + C2 * T) * std::exp(C2 * T);
  if (max_abs_X > m.gronwall_bound) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "inventory %.6g exceeds the a priori bound %.6g", max_abs_X,
                  m.gronwall_bound);
    throw SolverError(buf);
  }
  return {std::move(path), m};
}

DeviationEnvironment environment_from_path(const PopulationPath& path) {
  DeviationEnvironment env;
  const TimeGrid& grid = path.vbar.grid();
  env.w = PiecewiseCurve(grid, 1, false);
  if (path.M <= 1) {
    env.delta = 1.0;
    return env;
  }
  env.delta = 1.0 / path.M;
  const double M = path.M;
  for (int s = 0; s < grid.segments(); ++s) {
    env.w.values(s) = (M * path.vbar.values(s) - path.v_first.values(s)) / (M - 1.0);
  }
  return env;
}

DeviationEnvironment mean_field_environment(const MeanFieldSolution& mf) {
  DeviationEnvironment env;
  env.delta = 0.0;
  env.w = mf.mu_agg;
  return env;
}

double deviation_value(const MeanFieldSystem& sys, const MeanFieldSolution& mf,
                       const DeviationEnvironment& env, bool best_response, double x0, int y0) {
  const ModelConfig& cfg = sys.config();
  const MarketParams& mk = cfg.market;
  const TimeGrid& grid = sys.grid();
  const int N = cfg.N();
  const Eigen::MatrixXd& Q = cfg.aversion.Q;
  const Eigen::VectorXd& phi = cfg.aversion.phi;
  const double d = env.delta;
  const double eta_d = mk.eta + mk.lambdaH * d;
  const PiecewiseCurve h1 = best_response ? PiecewiseCurve() : recover_h1(mf, sys.h2(), cfg.aversion, mk);

  // y = [g0; g1; g2], each of length N.
  auto rhs = [&](int s, double t, const Eigen::VectorXd& y) -> Eigen::VectorXd {
    const auto g0 = y.segment(0, N);
    const auto g1 = y.segment(N, N);
    const auto g2 = y.segment(2 * N, N);
    const double w = env.w.eval_in(s, t)(0);
    Eigen::VectorXd alpha(N), beta(N);
    if (best_response) {
      alpha = (g1.array() - mk.lambdaH * (1.0 - d) * w) / (2.0 * eta_d);
      beta = (2.0 * g2.array() + mk.gammaH * d) / (2.0 * eta_d);
    } else {
      const double mu = mf.mu_agg.eval_in(s, t)(0);
      alpha = (h1.eval_in(s, t).array() - mk.lambdaH * mu) / (2.0 * mk.eta);
      beta = sys.h2().eval_in(s, t) / mk.eta;
    }
    const Eigen::ArrayXd a = alpha.array();
    const Eigen::ArrayXd b = beta.array();
    Eigen::VectorXd out(3 * N);
    out.segment(2 * N, N) =
        -((2.0 * b * g2.array() + mk.gammaH * d * b - eta_d * b.square() - phi.array()).matrix() + Q * g2);
    out.segment(N, N) = -((b * g1.array() + 2.0 * a * g2.array() + mk.gammaH * d * a +
                           mk.gammaH * (1.0 - d) * w - mk.lambdaH * (1.0 - d) * w * b -
                           2.0 * eta_d * a * b)
                              .matrix() +
                          Q * g1);
    out.segment(0, N) =
        -((a * g1.array() - mk.lambdaH * (1.0 - d) * w * a - eta_d * a.square()).matrix() + Q * g0);
    return out;
  };

  Eigen::VectorXd y = Eigen::VectorXd::Zero(3 * N);
  y.segment(2 * N, N) = -cfg.aversion.Gamma;
  const Integrator method = cfg.solver.integrator;
  for (int s = grid.segments() - 1; s >= 0; --s) {
    const double h = grid.step(s);
    auto f = [&rhs, s](double t, const Eigen::VectorXd& v) -> Eigen::VectorXd { return rhs(s, t, v); };
    for (int n = grid.steps(s); n > 0; --n) {
      ode_step(method, f, grid.time(s, n), -h, y);
      if (!y.allFinite() || y.cwiseAbs().maxCoeff() > 1e12) {
        throw SolverError("deviation problem is not concave: value coefficients blow up");
      }
    }
    if (s > 0) y.segment(N, N).array() += mk.gamma * mf.xi[static_cast<std::size_t>(s - 1)];
  }
  return y(y0) + y(N + y0) * x0 + y(2 * N + y0) * x0 * x0;
}

DeviationResult deviation_gain(const MeanFieldSystem& sys, const MeanFieldSolution& mf,
                               const PopulationPath& path) {
  const DeviationEnvironment env = environment_from_path(path);
  DeviationResult r;
  r.j_mfg = deviation_value(sys, mf, env, false, path.X0_first, path.Y0_first);
  r.j_best = deviation_value(sys, mf, env, true, path.X0_first, path.Y0_first);
  r.gain = r.j_best - r.j_mfg;
  return r;
}

Eigen::VectorXd OpenLoopProblem::maximizer() const {
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    throw SolverError("deviation problem is not concave: quadratic form is indefinite");
  }
  return 0.5 * llt.solve(g);
}

OpenLoopProblem open_loop_problem(const MeanFieldSystem& sys, const MeanFieldSolution& mf,
                                  const DeviationEnvironment& env, double x0) {
  const ModelConfig& cfg = sys.config();
  if (cfg.N() != 1) throw SolverError("open-loop deviation problem needs a single aversion state");
  const MarketParams& mk = cfg.market;
  const TimeGrid& grid = sys.grid();
  const double d = env.delta;
  const double eta_d = mk.eta + mk.lambdaH * d;
  const double phi = cfg.aversion.phi(0);
  const double Gam = cfg.aversion.Gamma(0);

  // Cells in time order; X_b at boundaries b = 0..C, X = x0 e + L u with L(b, c) = D_c [c < b].
  OpenLoopProblem P;
  std::vector<double> w_a, w_b;
  std::vector<int> trade_boundary;
  for (int s = 0; s < grid.segments(); ++s) {
    if (s > 0) trade_boundary.push_back(static_cast<int>(P.cell_length.size()));
    for (int n = 0; n < grid.steps(s); ++n) {
      P.cell_length.push_back(grid.step(s));
      w_a.push_back(env.w.values(s)(0, n));
      w_b.push_back(env.w.values(s)(0, n + 1));
    }
  }
  const int C = static_cast<int>(P.cell_length.size());
  const Eigen::Map<const Eigen::VectorXd> Dl(P.cell_length.data(), C);
  // L^T v for a boundary vector v: (L^T v)_c = D_c sum_{b > c} v_b.
  auto LT = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out(C);
    double suffix = 0.0;
    for (int c = C - 1; c >= 0; --c) {
      suffix += v(c + 1);
      out(c) = Dl(c) * suffix;
    }
    return out;
  };

  P.g = Eigen::VectorXd::Zero(C);
  P.S = Eigen::MatrixXd::Zero(C, C);
  P.c = 0.0;

  // Trades: gamma xi_k X(t_k).
  Eigen::VectorXd lin = Eigen::VectorXd::Zero(C + 1);
  for (std::size_t k = 0; k < trade_boundary.size(); ++k) lin(trade_boundary[k]) += mk.gamma * mf.xi[k];
  // Others' speed in the drift: gammaH (1 - delta) int w X dt, trapezoid per cell.
  for (int c = 0; c < C; ++c) {
    lin(c) += mk.gammaH * (1.0 - d) * 0.5 * Dl(c) * w_a[static_cast<std::size_t>(c)];
    lin(c + 1) += mk.gammaH * (1.0 - d) * 0.5 * Dl(c) * w_b[static_cast<std::size_t>(c)];
  }
  P.c += x0 * lin.sum();
  P.g += LT(lin);
  // Temporary impact of the others: -lambdaH (1 - delta) int w v dt.
  for (int c = 0; c < C; ++c) {
    P.g(c) -= mk.lambdaH * (1.0 - d) * Dl(c) * 0.5 * (w_a[static_cast<std::size_t>(c)] + w_b[static_cast<std::size_t>(c)]);
  }
  // Own speed: -eta' int v^2 dt.
  for (int c = 0; c < C; ++c) P.S(c, c) += eta_d * Dl(c);
  // Own permanent impact gammaH delta int X v dt = gammaH delta (X(T)^2 - x0^2) / 2,
  // and terminal penalty -Gamma X(T)^2, with X(T) = x0 + D^T u.
  P.g += (mk.gammaH * d * x0 - 2.0 * Gam * x0) * Dl;
  P.S += (Gam - 0.5 * mk.gammaH * d) * Dl * Dl.transpose();
  P.c -= Gam * x0 * x0;
  // Running penalty -phi int X^2 dt, exact for piecewise-linear X: X^T R X.
  if (phi != 0.0) {
    // R is tridiagonal over boundaries.
    Eigen::VectorXd Rd = Eigen::VectorXd::Zero(C + 1), Ro = Eigen::VectorXd::Zero(C);
    for (int c = 0; c < C; ++c) {
      Rd(c) += Dl(c) / 3.0;
      Rd(c + 1) += Dl(c) / 3.0;
      Ro(c) += Dl(c) / 6.0;
    }
    Eigen::VectorXd Re(C + 1);
    for (int b = 0; b <= C; ++b) {
      Re(b) = Rd(b) + (b > 0 ? Ro(b - 1) : 0.0) + (b < C ? Ro(b) : 0.0);
    }
    P.c -= phi * x0 * x0 * Re.sum();
    P.g -= 2.0 * phi * x0 * LT(Re);
    // (L^T R L)_{c c'} = D_c D_c' F(c, c'), F(c, c') = sum_{b > c, b' > c'} R_{b b'}.
    Eigen::MatrixXd F(C, C);
    Eigen::VectorXd rs(C + 1);
    for (int cp = 0; cp < C; ++cp) {
      // rs(b) = sum_{b' > cp} R_{b b'}
      for (int b = 0; b <= C; ++b) {
        double v = 0.0;
        if (b > cp) v += Rd(b);
        if (b - 1 > cp) v += Ro(b - 1);
        if (b + 1 <= C && b + 1 > cp) v += Ro(b);
        rs(b) = v;
      }
      double suffix = 0.0;
      for (int c = C - 1; c >= 0; --c) {
        suffix += rs(c + 1);
        F(c, cp) = suffix;
      }
    }
    P.S += phi * Dl.asDiagonal() * F * Dl.asDiagonal();
  }
  return P;
}

Eigen::VectorXd simulated_impacts(const ModelConfig& cfg, const PopulationPath& path) {
  const int K = path.Xbar.grid().trades();
  Eigen::VectorXd a(K);
  const double X0 = path.Xbar.front()(0);
  for (int k = 1; k <= K; ++k) {
    const double v = cfg.solver.lt_mu_convention == MuConvention::Right ? path.vbar.right(k)(0)
                                                                         : path.vbar.left(k)(0);
    a(k - 1) = cfg.market.gammaH * (path.Xbar.right(k)(0) - X0) + cfg.market.lambdaH * v;
  }
  return a;
}

LTDeviationResult lt_deviation_gain(const ModelConfig& cfg, std::span<const double> xi_star,
                                    const PopulationPath& path) {
  if (!cfg.schedule.xi0) throw ValidationError("schedule.xi0", "required to optimize the large trader");
  const Eigen::VectorXd a = simulated_impacts(cfg, path);
  LTDeviationResult r;
  r.xi_best = lt_best_response(a, *cfg.schedule.xi0, cfg.market);
  r.psi_star = lt_expected_profit(cfg.market, xi_star, a, 0.0);
  r.psi_best = lt_expected_profit(cfg.market, r.xi_best, a, 0.0);
  r.gain = r.psi_best - r.psi_star;
  return r;
}

LTPathOutcome sample_price_paths(const ModelConfig& cfg, std::span<const double> xi,
                                 const Eigen::VectorXd& impacts, int replications,
                                 std::uint64_t seed, int threads) {
  if (replications < 1) throw ValidationError("replications", "must be positive");
  const MarketParams& mk = cfg.market;
  const std::vector<double>& times = cfg.schedule.times;
  const int blocks = (replications + kAgentBlock - 1) / kAgentBlock;
  std::vector<double> sums(static_cast<std::size_t>(blocks)), sq(static_cast<std::size_t>(blocks));
  parallel_for(blocks, threads, [&](int b) {
    double s1 = 0.0, s2 = 0.0;
    const int r_end = std::min(replications, (b + 1) * kAgentBlock);
    for (int r = b * kAgentBlock; r < r_end; ++r) {
      CounterRng rng(seed, static_cast<std::uint64_t>(r));
      double W = 0.0, prev = 0.0, cum = 0.0, revenue = 0.0;
      for (std::size_t k = 0; k < xi.size(); ++k) {
        W += std::sqrt(times[k] - prev) * rng.normal();
        prev = times[k];
        cum += xi[k];
        double price = mk.P0 + mk.gamma * cum + (mk.lambda + mk.eta0) * xi[k];
        if (impacts.size() > 0) price += impacts(static_cast<Eigen::Index>(k));
        price += mk.sigma * W;
        revenue -= xi[k] * price;
      }
      s1 += revenue;
      s2 += revenue * revenue;
    }
    sums[static_cast<std::size_t>(b)] = s1;
    sq[static_cast<std::size_t>(b)] = s2;
  });
  double s1 = 0.0, s2 = 0.0;
  for (int b = 0; b < blocks; ++b) {
    s1 += sums[static_cast<std::size_t>(b)];
    s2 += sq[static_cast<std::size_t>(b)];
  }
  LTPathOutcome out;
  out.replications = replications;
  out.mean = s1 / replications;
  const double var = replications > 1
                         ? std::max(0.0, (s2 - s1 * s1 / replications) / (replications - 1))
                         : 0.0;
  out.std_error = std::sqrt(var / replications);
  out.analytic = lt_expected_profit(mk, xi, impacts, mk.P0);
  return out;
}

}  // namespace hftmfg
