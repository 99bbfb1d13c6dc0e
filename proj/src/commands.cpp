#include "hftmfg/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "hftmfg/chain.hpp"
#include "hftmfg/errors.hpp"
#include "hftmfg/finite_sim.hpp"
#include "hftmfg/lt_strategy.hpp"
#include "hftmfg/mean_field.hpp"
#include "hftmfg/parallel.hpp"
#include "hftmfg/presets.hpp"
#include "hftmfg/report.hpp"
#include "hftmfg/riccati.hpp"

namespace hftmfg {

using nlohmann::json;

namespace {

ModelConfig find_preset(const std::string& name) {
  std::string names;
  for (const auto& p : all_presets()) {
    if (p.name == name) return p.cfg;
    names += (names.empty() ? "" : ", ") + p.name;
  }
  throw UsageError("unknown preset '" + name + "' (known: " + names + ")");
}

ModelConfig with_flags(ModelConfig cfg, const CommandOptions& opts) {
  if (opts.grid) cfg.solver.grid_steps_per_unit_time = *opts.grid;
  if (opts.integrator) cfg.solver.integrator = *opts.integrator;
  validate(cfg);
  return cfg;
}

std::vector<double> fixed_quantities(const ModelConfig& cfg) {
  return cfg.schedule.has_quantities() ? cfg.schedule.quantities : std::vector<double>(cfg.K(), 0.0);
}

std::vector<double> uniform_schedule(const ModelConfig& cfg) {
  return std::vector<double>(cfg.K(), -*cfg.schedule.xi0 / cfg.K());
}

void save_csv(const std::filesystem::path& path, const CsvTable& t, std::ostream& log) {
  write_atomic(path, t.str());
  log << "wrote " << path.string() << '\n';
}

void save_svg(const std::filesystem::path& path, const PlotSpec& plot, std::ostream& log) {
  write_atomic(path, render_svg(plot));
  log << "wrote " << path.string() << '\n';
}

std::string yes_no(bool b) { return b ? "true" : "false"; }

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + h, v.end());
  if (v.size() % 2) return v[h];
  const double hi = v[h];
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + h));
}

double log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct Residuals {
  double terminal, max_jump, condition, aggregate, drift, box;
  std::vector<std::string> warnings;
};

Residuals residuals_of(const MeanFieldSystem& sys, const MeanFieldSolution& mf) {
  const ModelConfig& cfg = sys.config();
  Residuals r;
  r.terminal = terminal_residual(mf, sys.chain(), cfg);
  r.max_jump = mf.residuals.max_jump;
  r.condition = mf.residuals.condition_number;
  r.aggregate = aggregate_identity_residual(mf);
  r.drift = per_state_drift_residual(mf, sys.chain());
  r.box = box_violation(sys.h2(), riccati_box_bound(cfg.aversion, cfg.market));
  r.warnings = mf.residuals.warnings;
  auto warn = [&r](bool bad, const char* what, double v, double tol) {
    if (!bad) return;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s residual %.3g exceeds %.0e", what, v, tol);
    r.warnings.emplace_back(buf);
  };
  warn(r.terminal > 1e-6, "terminal", r.terminal, 1e-6);
  warn(r.max_jump > 1e-6, "speed jump", r.max_jump, 1e-6);
  warn(r.aggregate > 1e-4, "aggregate identity", r.aggregate, 1e-4);
  warn(r.drift > 1e-6, "per-state drift", r.drift, 1e-6);
  return r;
}

CsvTable residual_table(const ModelConfig& cfg, const Residuals& r) {
  return key_value_table(cfg, {{"terminal", num(r.terminal)},
                               {"max_jump", num(r.max_jump)},
                               {"condition_number", num(r.condition)},
                               {"aggregate_identity", num(r.aggregate)},
                               {"per_state_drift", num(r.drift)},
                               {"box_violation", num(r.box)},
                               {"warnings", std::to_string(r.warnings.size())}});
}

void write_equilibrium(const std::filesystem::path& dir, const ModelConfig& cfg,
                       const MeanFieldSolution& mf, std::ostream& log) {
  save_csv(dir / "equilibrium.csv", equilibrium_table(cfg, mf), log);
  const CsvData back = read_csv(dir / "equilibrium.csv");
  save_svg(dir / "E.svg", equilibrium_plot(back, "E", "HFT average position"), log);
  save_svg(dir / "mu.svg", equilibrium_plot(back, "mu", "HFT average trading speed"), log);
}

CsvTable strategy_table(const ModelConfig& cfg, const std::vector<double>& xi) {
  CsvTable t = make_table(cfg, {"k", "t_k", "xi_star_k"});
  for (int k = 0; k < cfg.K(); ++k) {
    t.add_row({std::to_string(k + 1), num(cfg.schedule.times[static_cast<std::size_t>(k)]),
               num(xi[static_cast<std::size_t>(k)])});
  }
  return t;
}

PlotSpec strategy_plot(const CsvData& csv, const std::string& title) {
  PlotSpec p;
  p.title = title;
  p.xlabel = "t";
  p.ylabel = "xi";
  p.series.push_back({"xi*", csv.numbers("t_k"), csv.numbers("xi_star_k"), true});
  return p;
}

}  // namespace

ModelConfig apply_overrides(const ModelConfig& cfg, const CommandOptions& opts) {
  if (!opts.env_overrides) return with_flags(cfg, opts);
  json j = to_json(cfg);
  apply_env_overrides(j, kEnvPrefix);
  return with_flags(parse_config(j), opts);
}

ModelConfig resolve_config(const CommandOptions& opts) {
  json j;
  if (opts.config) {
    std::ifstream in(*opts.config);
    if (!in) throw ParseError("cannot open config file '" + opts.config->string() + "'");
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError(opts.config->string() + ": " + e.what());
    }
  } else if (!opts.preset.empty()) {
    j = to_json(find_preset(opts.preset));
  } else {
    throw UsageError("either --config or --preset is required");
  }
  if (opts.env_overrides) apply_env_overrides(j, kEnvPrefix);
  return with_flags(parse_config(j), opts);
}

int cmd_solve_partial(const CommandOptions& opts, std::ostream& log) {
  const ModelConfig cfg = resolve_config(opts);
  if (cfg.mode != Mode::Partial) throw ValidationError("mode", "solve-partial needs a partial-mode config");
  const std::vector<double> xi = fixed_quantities(cfg);
  const MeanFieldSystem sys(cfg);
  const MeanFieldSolution mf = sys.solve(cfg.population.E0, xi);
  const Residuals r = residuals_of(sys, mf);
  write_equilibrium(opts.out, cfg, mf, log);
  save_csv(opts.out / "residuals.csv", residual_table(cfg, r), log);
  const ProfitReport pr = lt_profit(cfg, xi, mf, cfg.market.P0);
  save_csv(opts.out / "profit.csv",
           key_value_table(cfg, {{"profit_no_hft", num(pr.profit_no_hft)},
                                 {"profit_with_hft", num(pr.profit_with_hft)},
                                 {"difference", num(pr.difference)}}),
           log);
  for (const std::string& w : r.warnings) log << "WARN " << w << '\n';
  return 0;
}

int cmd_solve_overall(const CommandOptions& opts, std::ostream& log) {
  const ModelConfig cfg = resolve_config(opts);
  if (cfg.mode != Mode::Overall) throw ValidationError("mode", "solve-overall needs an overall-mode config");
  validate_schedule_feasibility(cfg);
  const MeanFieldSystem sys(cfg);
  const OverallEquilibrium eq = solve_overall(sys);
  Residuals r = residuals_of(sys, eq.mean_field);
  for (const std::string& w : eq.warnings) {
    if (std::find(r.warnings.begin(), r.warnings.end(), w) == r.warnings.end()) r.warnings.push_back(w);
  }
  save_csv(opts.out / "xi_star.csv", strategy_table(cfg, eq.xi_star), log);
  save_svg(opts.out / "xi_star.svg", strategy_plot(read_csv(opts.out / "xi_star.csv"), "Large-trader schedule"), log);
  write_equilibrium(opts.out, cfg, eq.mean_field, log);
  save_csv(opts.out / "residuals.csv", residual_table(cfg, r), log);

  const ProfitReport pr = lt_profit(cfg, eq.xi_star, eq.mean_field, cfg.market.P0);
  const double uniform = lt_expected_profit(cfg.market, uniform_schedule(cfg), Eigen::VectorXd(), cfg.market.P0);
  save_csv(opts.out / "profit.csv",
           key_value_table(cfg, {{"profit_no_hft", num(pr.profit_no_hft)},
                                 {"profit_with_hft", num(pr.profit_with_hft)},
                                 {"difference", num(pr.difference)},
                                 {"profit_uniform_no_hft", num(uniform)},
                                 {"difference_vs_uniform", num(pr.profit_with_hft - uniform)}}),
           log);
  const ConcavityReport& c = eq.concavity;
  save_csv(opts.out / "concavity.csv",
           key_value_table(cfg, {{"frozen_max_eigenvalue", num(c.frozen_max_eigenvalue)},
                                 {"composite_max_eigenvalue", num(c.composite_max_eigenvalue)},
                                 {"negative_definite", yes_no(c.negative_definite)},
                                 {"stationary_only", yes_no(c.stationary_only)},
                                 {"system_condition", num(eq.system_condition)},
                                 {"fixed_point_residual", num(eq.fixed_point_residual)},
                                 {"basis_residual", num(eq.basis_residual)}}),
           log);
  for (const std::string& w : r.warnings) log << "WARN " << w << '\n';
  return 0;
}

int cmd_simulate(const CommandOptions& opts, const SimulateSettings& sim, std::ostream& log) {
  if (sim.M.empty()) throw UsageError("at least one --M value is required");
  if (sim.seeds < 1) throw UsageError("--seeds must be positive");
  for (int M : sim.M) {
    if (M < 1) throw UsageError("--M values must be positive");
  }
  const ModelConfig cfg = resolve_config(opts);
  validate_schedule_feasibility(cfg);
  const MeanFieldSystem sys(cfg);
  std::vector<double> xi;
  MeanFieldSolution mf;
  if (cfg.mode == Mode::Overall && !cfg.schedule.has_quantities()) {
    OverallEquilibrium eq = solve_overall(sys);
    xi = eq.xi_star;
    mf = std::move(eq.mean_field);
  } else {
    xi = fixed_quantities(cfg);
    mf = sys.solve(cfg.population.E0, xi);
  }
  // The large trader's deviation is only meaningful for a feasible schedule.
  bool lt_feasible = cfg.schedule.xi0.has_value();
  if (lt_feasible) {
    const double s = std::accumulate(xi.begin(), xi.end(), *cfg.schedule.xi0);
    lt_feasible = std::abs(s) <= 1e-9;
  }

  struct Task {
    int M;
    std::uint64_t seed;
    ConvergenceMetrics metrics;
    DeviationResult hft;
    LTDeviationResult lt;
    std::vector<TrajectoryRow> dump;
  };
  std::vector<Task> tasks;
  for (int M : sim.M) {
    for (int s = 0; s < sim.seeds; ++s) tasks.push_back({M, opts.seed + static_cast<std::uint64_t>(s), {}, {}, {}, {}});
  }
  parallel_for(static_cast<int>(tasks.size()), opts.threads, [&](int i) {
    Task& t = tasks[static_cast<std::size_t>(i)];
    SimulationOptions so;
    so.M = t.M;
    so.seed = t.seed;
    so.dump_agents = i == 0 ? sim.dump_agents : 0;
    SimulationResult r = simulate_population(sys, mf, so);
    t.metrics = r.metrics;
    t.hft = deviation_gain(sys, mf, r.path);
    if (lt_feasible) {
      t.lt = lt_deviation_gain(cfg, xi, r.path);
    } else {
      t.lt.psi_star = t.lt.psi_best = t.lt.gain = std::nan("");
    }
    t.dump = std::move(r.path.dump);
  });

  CsvTable metrics = make_table(cfg, {"M", "seed", "theta_dev", "Z_dev", "vbar_l2", "max_abs_X", "gronwall_bound"});
  CsvTable dev = make_table(cfg, {"M", "seed", "j_mfg", "j_best", "hft_gain", "psi_star", "psi_best", "lt_gain"});
  for (const Task& t : tasks) {
    const ConvergenceMetrics& m = t.metrics;
    metrics.add_row({std::to_string(t.M), std::to_string(t.seed), num(m.theta_dev), num(m.Z_dev),
                     num(m.vbar_l2), num(m.max_abs_X), num(m.gronwall_bound)});
    dev.add_row({std::to_string(t.M), std::to_string(t.seed), num(t.hft.j_mfg), num(t.hft.j_best),
                 num(t.hft.gain), num(t.lt.psi_star), num(t.lt.psi_best), num(t.lt.gain)});
  }
  save_csv(opts.out / "metrics.csv", metrics, log);
  save_csv(opts.out / "deviation.csv", dev, log);

  CsvTable conv = make_table(cfg, {"M", "median_vbar_l2", "median_hft_gain", "median_lt_gain"});
  std::vector<double> Ms, l2s;
  for (int M : sim.M) {
    std::vector<double> l2, g, lg;
    for (const Task& t : tasks) {
      if (t.M != M) continue;
      l2.push_back(t.metrics.vbar_l2);
      g.push_back(t.hft.gain);
      lg.push_back(t.lt.gain);
    }
    const double ml2 = median(l2);
    conv.add_row({std::to_string(M), num(ml2), num(median(g)), num(median(lg))});
    if (std::find(Ms.begin(), Ms.end(), static_cast<double>(M)) == Ms.end() && ml2 > 0.0) {
      Ms.push_back(M);
      l2s.push_back(ml2);
    }
  }
  if (Ms.size() >= 2) {
    const double slope = log_slope(Ms, l2s);
    conv.add_row({"fit_slope", num(slope), "nan", "nan"});
    log << "log-log slope of median vbar_l2 over M: " << num(slope) << '\n';
  }
  save_csv(opts.out / "convergence.csv", conv, log);

  if (sim.dump_agents > 0) {
    CsvTable traj = make_table(cfg, {"agent", "time", "side", "state", "X"});
    for (const TrajectoryRow& r : tasks.front().dump) {
      traj.add_row({std::to_string(r.agent), num(r.t), r.side == Side::Left ? "L" : "R",
                    std::to_string(r.state + 1), num(r.X)});
    }
    save_csv(opts.out / "trajectories.csv", traj, log);
  }
  if (sim.replications > 0) {
    const LTPathOutcome o =
        sample_price_paths(cfg, xi, lt_impacts(mf, cfg), sim.replications, opts.seed, opts.threads);
    save_csv(opts.out / "price_paths.csv",
             key_value_table(cfg, {{"replications", std::to_string(o.replications)},
                                   {"mean_revenue", num(o.mean)},
                                   {"std_error", num(o.std_error)},
                                   {"analytic", num(o.analytic)}}),
             log);
  }
  return 0;
}

std::vector<double> lambdaH_scan() {
  std::vector<double> v;
  for (int i = 1; i <= 50; ++i) v.push_back(0.02 * i);
  return v;
}

std::vector<FigureSpec> figure_specs() {
  using K = FigurePanel::Kind;
  std::vector<FigureSpec> out;
  const char letters[] = "abcd";
  auto sweep = [&](const std::string& id, const std::string& title, K kind,
                   const std::vector<std::pair<std::string, ModelConfig>>& cfgs) {
    FigureSpec f{id, title, {}};
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
      f.panels.push_back({id + letters[i], cfgs[i].first, kind, cfgs[i].second});
    }
    out.push_back(std::move(f));
  };
  auto pairs = [](double p1, double G1, double p2, double G2, Mode mode) {
    std::vector<std::pair<std::string, ModelConfig>> v;
    const double xy[][2] = {{0.0, 0.0}, {0.2, 0.8}, {0.5, 0.5}, {0.8, 0.2}};
    for (const auto& q : xy) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "x=%g, y=%g", q[0], q[1]);
      v.emplace_back(buf, two_state(p1, G1, p2, G2, q[0], q[1], mode));
    }
    return v;
  };
  auto gammas = [](Mode m) {
    std::vector<std::pair<std::string, ModelConfig>> v;
    for (double G : {0.0, 0.1, 2.0}) {
      const ModelConfig c = m == Mode::Partial ? baseline_partial(G, 0.0) : baseline_overall(G, 0.0);
      v.emplace_back("Gamma=" + num(G), c);
    }
    return v;
  };
  auto phis = [](Mode m, std::initializer_list<double> values) {
    std::vector<std::pair<std::string, ModelConfig>> v;
    for (double f : values) {
      const ModelConfig c = m == Mode::Partial ? baseline_partial(0.0, f) : baseline_overall(0.0, f);
      v.emplace_back("phi=" + num(f), c);
    }
    return v;
  };

  sweep("F1", "phi=0, HFT average position", K::Mean, gammas(Mode::Partial));
  sweep("F2", "Gamma=0, HFT average position", K::Mean, phis(Mode::Partial, {0.0, 5.0, 10.0}));
  out.push_back({"F3", "Large-trader profit difference (phi=10, Gamma=2)",
                 {{"F3", "lambdaH scan", K::ProfitScan, baseline_partial(2.0, 10.0)}}});
  sweep("F4", "phi(1)=0, Gamma(1)=0, phi(2)=10, Gamma(2)=2, HFT average position", K::Mean,
        pairs(0.0, 0.0, 10.0, 2.0, Mode::Partial));
  sweep("F5", "phi(1)=0, Gamma(1)=2, phi(2)=10, Gamma(2)=0, HFT average position", K::Mean,
        pairs(0.0, 2.0, 10.0, 0.0, Mode::Partial));
  sweep("F6", "phi=0, large-trader schedule", K::Strategy, gammas(Mode::Overall));
  sweep("F7", "phi=0, HFT average position (overall)", K::Mean, gammas(Mode::Overall));
  sweep("F8", "Gamma=0, large-trader schedule", K::Strategy, phis(Mode::Overall, {0.0, 1.0, 5.0}));
  sweep("F9", "Gamma=0, HFT average position (overall)", K::Mean, phis(Mode::Overall, {0.0, 1.0, 5.0}));
  out.push_back({"F10", "Large-trader profit difference, overall (phi=10, Gamma=2)",
                 {{"F10", "lambdaH scan", K::ProfitScan, baseline_overall(2.0, 10.0)}}});
  sweep("F11", "phi(1)=0, Gamma(1)=2, phi(2)=10, Gamma(2)=0, large-trader schedule", K::Strategy,
        pairs(0.0, 2.0, 10.0, 0.0, Mode::Overall));
  sweep("F12", "phi(1)=0, Gamma(1)=2, phi(2)=10, Gamma(2)=0, HFT average position (overall)", K::Mean,
        pairs(0.0, 2.0, 10.0, 0.0, Mode::Overall));
  return out;
}

int cmd_figures(const CommandOptions& opts, const std::vector<std::string>& ids, std::ostream& log) {
  const std::vector<FigureSpec> specs = figure_specs();
  std::vector<const FigureSpec*> chosen;
  for (const std::string& id : ids) {
    if (id == "all") {
      for (const auto& s : specs) chosen.push_back(&s);
      continue;
    }
    const auto it = std::find_if(specs.begin(), specs.end(), [&](const FigureSpec& s) { return s.id == id; });
    if (it == specs.end()) throw UsageError("unknown figure id '" + id + "' (expected F1..F12 or all)");
    chosen.push_back(&*it);
  }
  struct Job {
    const FigureSpec* fig;
    const FigurePanel* panel;
  };
  std::vector<Job> jobs;
  for (const FigureSpec* f : chosen) {
    for (const FigurePanel& p : f->panels) {
      if (std::none_of(jobs.begin(), jobs.end(), [&](const Job& j) { return j.panel == &p; })) jobs.push_back({f, &p});
    }
  }
  std::vector<std::string> logs(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), opts.threads, [&](int i) {
    const FigurePanel& p = *jobs[static_cast<std::size_t>(i)].panel;
    const std::string title = jobs[static_cast<std::size_t>(i)].fig->title + " (" + p.label + ")";
    const ModelConfig cfg = apply_overrides(p.cfg, opts);
    const std::filesystem::path csv = opts.out / (p.file + ".csv");
    const std::filesystem::path svg = opts.out / (p.file + ".svg");
    std::ostringstream lg;
    switch (p.kind) {
      case FigurePanel::Kind::Mean: {
        MeanFieldSolution mf = cfg.mode == Mode::Partial ? solve_partial(cfg, fixed_quantities(cfg))
                                                         : solve_overall(cfg).mean_field;
        save_csv(csv, equilibrium_table(cfg, mf), lg);
        save_svg(svg, equilibrium_plot(read_csv(csv), "E", title), lg);
        break;
      }
      case FigurePanel::Kind::Strategy: {
        save_csv(csv, strategy_table(cfg, solve_overall(cfg).xi_star), lg);
        save_svg(svg, strategy_plot(read_csv(csv), title), lg);
        break;
      }
      case FigurePanel::Kind::ProfitScan: {
        CsvTable t = make_table(cfg, {"lambdaH", "profit_no_hft", "profit_with_hft", "difference"});
        for (double lh : lambdaH_scan()) {
          ModelConfig c = cfg;
          c.market.lambdaH = lh;
          if (c.mode == Mode::Partial) {
            const std::vector<double> xi = fixed_quantities(c);
            const ProfitReport r = lt_profit(c, xi, solve_partial(c, xi), c.market.P0);
            t.add_row(std::vector<double>{lh, r.profit_no_hft, r.profit_with_hft, r.difference});
          } else {
            const OverallEquilibrium eq = solve_overall(c);
            const double with = lt_profit(c, eq.xi_star, eq.mean_field, c.market.P0).profit_with_hft;
            const double without =
                lt_expected_profit(c.market, uniform_schedule(c), Eigen::VectorXd(), c.market.P0);
            t.add_row(std::vector<double>{lh, without, with, with - without});
          }
        }
        save_csv(csv, t, lg);
        PlotSpec plot;
        plot.title = title;
        plot.xlabel = "lambdaH";
        plot.ylabel = "profit difference";
        const CsvData back = read_csv(csv);
        plot.series.push_back({"difference", back.numbers("lambdaH"), back.numbers("difference"), true});
        save_svg(svg, plot, lg);
        break;
      }
    }
    logs[static_cast<std::size_t>(i)] = lg.str();
  });
  for (const std::string& s : logs) log << s;
  return 0;
}

namespace {

struct CheckResult {
  std::string name;
  bool passed;
  double value;
  double threshold;
  std::string detail;
};

class Checks {
 public:
  void add(std::string name, bool passed, double value, double threshold, std::string detail = "") {
    list_.push_back({std::move(name), passed, value, threshold, std::move(detail)});
  }
  // value <= threshold
  void at_most(std::string name, double value, double threshold, std::string detail = "") {
    add(std::move(name), value <= threshold, value, threshold, std::move(detail));
  }
  // Runs fn and records a failure instead of propagating solver errors.
  template <class Fn>
  void guarded(const std::string& name, Fn&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      add(name, false, std::nan(""), std::nan(""), e.what());
    }
  }
  const std::vector<CheckResult>& list() const { return list_; }

 private:
  std::vector<CheckResult> list_;
};

json to_json_value(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

int cmd_validate(const CommandOptions& opts, const ValidateSettings& v, std::ostream& log) {
  if (v.coarsen < 1) throw UsageError("--coarsen must be >= 1");
  if (!v.inject.empty() && v.inject != "q_row_sum") {
    throw UsageError("unknown fault '" + v.inject + "' (supported: q_row_sum)");
  }
  const int fine = std::max(100, 10000 / v.coarsen);
  const int base = std::max(100, (opts.grid ? *opts.grid : 1000) / v.coarsen);
  auto tune = [&](ModelConfig c, int steps) {
    c.solver.grid_steps_per_unit_time = steps;
    if (opts.integrator) c.solver.integrator = *opts.integrator;
    return c;
  };

  std::vector<NamedConfig> presets = all_presets();
  if (v.inject == "q_row_sum") {
    for (auto& p : presets) {
      if (p.name == "two_state_partial_x0.5_y0.5") p.cfg.aversion.Q(0, 0) += 0.1;
    }
  }
  Checks checks;

  // Configuration layer.
  std::vector<NamedConfig> valid;
  {
    std::string failed;
    double worst_row = 0.0;
    for (const auto& p : presets) {
      worst_row = std::max(worst_row, p.cfg.aversion.Q.rowwise().sum().cwiseAbs().maxCoeff());
      try {
        validate(p.cfg);
        valid.push_back(p);
      } catch (const ValidationError& e) {
        failed += (failed.empty() ? "" : "; ") + p.name + ": " + e.what();
      }
    }
    checks.add("config.presets_valid", failed.empty(), static_cast<double>(presets.size() - valid.size()), 0.0, failed);
    checks.at_most("chain.q_row_sum", worst_row, 1e-12);
  }

  checks.guarded("chain.two_state_closed_form", [&] {
    const ModelConfig cfg = tune(two_state(0.0, 0.0, 10.0, 2.0, 0.2, 0.8, Mode::Partial), base);
    const ChainSolution ch = solve_chain(cfg.aversion, TimeGrid(1.0, cfg.schedule.times, base), cfg.solver.integrator);
    checks.at_most("chain.two_state_closed_form", std::abs(ch.p.back()(0) - (0.8 - 0.3 * std::exp(-1.0))), 1e-8);
  });

  checks.guarded("chain.mass_conservation", [&] {
    double worst = 0.0;
    for (const auto& p : valid) {
      const ModelConfig cfg = tune(p.cfg, base);
      const ChainSolution ch =
          solve_chain(cfg.aversion, TimeGrid(1.0, cfg.schedule.times, base), cfg.solver.integrator);
      for (int s = 0; s < ch.p.grid().segments(); ++s) {
        worst = std::max(worst, (ch.p.values(s).colwise().sum().array() - 1.0).abs().maxCoeff());
      }
    }
    checks.at_most("chain.mass_conservation", worst, 1e-12);
  });

  checks.guarded("riccati.box_invariant", [&] {
    double worst = 0.0;
    std::string where;
    for (const auto& p : valid) {
      const ModelConfig cfg = tune(p.cfg, base);
      try {
        const PiecewiseCurve h2 = solve_h2(cfg.aversion, cfg.market,
                                           TimeGrid(1.0, cfg.schedule.times, base), cfg.solver.integrator);
        const double b = box_violation(h2, riccati_box_bound(cfg.aversion, cfg.market));
        if (b > worst) worst = b, where = p.name;
      } catch (const SolverError& e) {
        worst = INFINITY;
        where = p.name + ": " + e.what();
      }
    }
    checks.at_most("riccati.box_invariant", worst, 0.0, where);
  });

  checks.guarded("mean_field.oracle_n1", [&] {
    double worst = 0.0;
    std::string where;
    for (double G : {0.0, 0.1, 2.0}) {
      for (double phi : {0.0, 5.0, 10.0}) {
        const ModelConfig cfg = tune(baseline_partial(G, phi), fine);
        const MeanFieldSystem sys(cfg);
        const MeanFieldSolution num_sol = sys.solve(cfg.population.E0, cfg.schedule.quantities);
        const MeanFieldSolution ref = closed_form_n1(cfg, cfg.schedule.quantities, sys.grid());
        const double e = std::max(sup_distance(num_sol.E, ref.E), sup_distance(num_sol.mu, ref.mu));
        if (e > worst) {
          worst = e;
          char buf[64];
          std::snprintf(buf, sizeof buf, "Gamma=%g phi=%g grid=%d", G, phi, fine);
          where = buf;
        }
      }
    }
    checks.at_most("mean_field.oracle_n1", worst, 1e-6, where);
  });

  checks.guarded("mean_field.residuals", [&] {
    double jump = 0.0, term = 0.0, init = 0.0, agg = 0.0, drift = 0.0;
    for (const auto& p : valid) {
      if (p.cfg.mode != Mode::Partial) continue;
      const ModelConfig cfg = tune(p.cfg, fine);
      const MeanFieldSystem sys(cfg);
      const MeanFieldSolution mf = sys.solve(cfg.population.E0, cfg.schedule.quantities);
      for (const JumpResidual& r : jump_conditions_report(mf, cfg)) {
        jump = std::max({jump, r.aggregate_residual, r.state_residual});
      }
      term = std::max(term, terminal_residual(mf, sys.chain(), cfg));
      init = std::max(init, (mf.E.front() - cfg.population.E0).cwiseAbs().maxCoeff());
      agg = std::max(agg, aggregate_identity_residual(mf));
      drift = std::max(drift, per_state_drift_residual(mf, sys.chain()));
    }
    checks.at_most("mean_field.jump_conditions", jump, 1e-6);
    checks.at_most("mean_field.terminal_condition", term, 1e-6);
    checks.at_most("mean_field.initial_condition", init, 0.0);
    checks.at_most("mean_field.aggregate_identity", agg, 1e-4);
    checks.at_most("mean_field.per_state_drift", drift, 1e-6);
  });

  checks.guarded("mean_field.linearity", [&] {
    std::mt19937_64 gen(opts.seed);
    std::normal_distribution<double> Z(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      ModelConfig cfg = tune(two_state(5.0, 0.5, 10.0, 2.0, 0.3, 0.6, Mode::Partial), base);
      const MeanFieldSystem sys(cfg);
      std::vector<double> x1(9), x2(9), xc(9);
      for (double& x : x1) x = Z(gen);
      for (double& x : x2) x = Z(gen);
      const Eigen::Vector2d e1(Z(gen), Z(gen)), e2(Z(gen), Z(gen));
      const double a = Z(gen), b = Z(gen);
      for (int k = 0; k < 9; ++k) xc[k] = a * x1[k] + b * x2[k];
      const MeanFieldSolution s1 = sys.solve(e1, x1), s2 = sys.solve(e2, x2), sc = sys.solve(a * e1 + b * e2, xc);
      for (int s = 0; s < sys.grid().segments(); ++s) {
        worst = std::max(worst, (sc.E.values(s) - a * s1.E.values(s) - b * s2.E.values(s)).cwiseAbs().maxCoeff());
        worst = std::max(worst, (sc.mu.values(s) - a * s1.mu.values(s) - b * s2.mu.values(s)).cwiseAbs().maxCoeff());
      }
    }
    checks.at_most("mean_field.linearity", worst, 1e-8);
  });

  checks.guarded("lt.uniform_without_hft_impact", [&] {
    ModelConfig cfg = tune(baseline_overall(0.0, 0.0), base);
    cfg.market.gammaH = cfg.market.lambdaH = 0.0;
    double worst = 0.0;
    for (double x : solve_overall(cfg).xi_star) worst = std::max(worst, std::abs(x - 1.0));
    checks.at_most("lt.uniform_without_hft_impact", worst, 1e-9);
  });

  checks.guarded("lt.fixed_point", [&] {
    double worst = 0.0;
    bool concave = true;
    for (const auto& p : valid) {
      if (p.cfg.mode != Mode::Overall) continue;
      const OverallEquilibrium eq = solve_overall(tune(p.cfg, base));
      worst = std::max(worst, eq.fixed_point_residual);
      concave = concave && eq.concavity.negative_definite;
    }
    checks.at_most("lt.fixed_point", worst, 1e-6);
    checks.add("lt.concavity", concave, concave ? 1.0 : 0.0, 1.0);
  });

  checks.guarded("lt.baseline_profit", [&] {
    const ModelConfig cfg = baseline_partial(0.0, 0.0);
    const double p = lt_expected_profit(cfg.market, cfg.schedule.quantities, Eigen::VectorXd(), 0.0);
    checks.at_most("lt.baseline_profit", std::abs(p + 49.05), 1e-10);
  });

  checks.guarded("shape.whole_period_round_trip", [&] {
    const ModelConfig cfg = tune(baseline_partial(2.0, 0.0), base);
    const MeanFieldSolution mf = solve_partial(cfg, cfg.schedule.quantities);
    const bool ok = mf.mu_agg.front()(0) > 0.0 && mf.mu_agg.back()(0) < 0.0;
    checks.add("shape.whole_period_round_trip", ok, mf.mu_agg.back()(0), 0.0);
  });

  checks.guarded("shape.per_trade_round_trip", [&] {
    const ModelConfig cfg = tune(baseline_partial(0.0, 10.0), base);
    const MeanFieldSolution mf = solve_partial(cfg, cfg.schedule.quantities);
    const TimeGrid& g = mf.grid();
    int bad = 0;
    for (int s = 1; s < g.segments() - 1; ++s) {
      const double sign = cfg.schedule.quantities[static_cast<std::size_t>(s - 1)] > 0 ? 1.0 : -1.0;
      const Eigen::RowVectorXd E = sign * mf.E_agg.values(s).row(0);
      Eigen::Index lo;
      E.minCoeff(&lo);
      if (!(lo > 0 && lo < g.steps(s) && E(1) < E(0) && E(g.steps(s)) > E(lo))) ++bad;
    }
    checks.add("shape.per_trade_round_trip", bad == 0, bad, 0.0, "intervals without a dip-then-rise");
  });

  checks.guarded("shape.profit_sign_change", [&] {
    int changes = 0;
    bool upward = true;
    double prev = 0.0;
    const std::vector<double> scan = lambdaH_scan();
    for (std::size_t i = 0; i < scan.size(); ++i) {
      ModelConfig cfg = tune(baseline_partial(2.0, 10.0), base);
      cfg.market.lambdaH = scan[i];
      const MeanFieldSolution mf = solve_partial(cfg, cfg.schedule.quantities);
      const double d = lt_profit(cfg, cfg.schedule.quantities, mf, 0.0).difference;
      if (i > 0 && (d < 0.0) != (prev < 0.0)) {
        ++changes;
        upward = upward && prev < 0.0;
      }
      prev = d;
    }
    checks.add("shape.profit_sign_change", changes == 1 && upward, changes, 1.0);
  });

  checks.guarded("shape.schedule_dispersion", [&] {
    std::vector<double> sd;
    for (double phi : {0.0, 1.0, 5.0}) {
      const std::vector<double> xi = solve_overall(tune(baseline_overall(0.0, phi), base)).xi_star;
      const double m = std::accumulate(xi.begin(), xi.end(), 0.0) / xi.size();
      double s = 0.0;
      for (double x : xi) s += (x - m) * (x - m);
      sd.push_back(std::sqrt(s / (xi.size() - 1)));
    }
    checks.add("shape.schedule_dispersion", sd[0] > sd[1] && sd[1] > sd[2], sd[2], sd[1]);
  });

  checks.guarded("sim.identical_agents", [&] {
    ModelConfig cfg = tune(baseline_partial(2.0, 10.0), base);
    const MeanFieldSystem sys(cfg);
    const MeanFieldSolution mf = sys.solve(cfg.population.E0, cfg.schedule.quantities);
    SimulationOptions so;
    so.M = 20;
    so.identical_initial = true;
    const ConvergenceMetrics m = simulate_population(sys, mf, so).metrics;
    checks.at_most("sim.identical_agents", std::max({m.theta_dev, m.Z_dev, m.vbar_l2}), 1e-20);
  });

  json report;
  report["coarsen"] = v.coarsen;
  report["inject"] = v.inject.empty() ? json(nullptr) : json(v.inject);
  bool all = true;
  json list = json::array();
  for (const CheckResult& c : checks.list()) {
    all = all && c.passed;
    list.push_back({{"name", c.name},
                    {"passed", c.passed},
                    {"value", to_json_value(c.value)},
                    {"threshold", to_json_value(c.threshold)},
                    {"detail", c.detail}});
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", c.value);
    log << (c.passed ? "PASS " : "FAIL ") << c.name << " value=" << buf
        << (c.detail.empty() ? "" : " (" + c.detail + ")") << '\n';
  }
  report["checks"] = list;
  report["passed"] = all;
  write_atomic(opts.out / "validation.json", report.dump(2) + "\n");
  log << "wrote " << (opts.out / "validation.json").string() << '\n';
  return all ? 0 : 1;
}

}  // namespace hftmfg
