#include <CLI11.hpp>

#include <iostream>

#include "hftmfg/commands.hpp"
#include "hftmfg/errors.hpp"

using namespace hftmfg;

int main(int argc, char** argv) {
  CLI::App app{"Mean-field equilibrium of a large trader and a crowd of HFTs"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CommandOptions opts;
  std::string config, out = "out", integrator;
  int grid = 0;
  app.add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--preset", opts.preset, "built-in config name instead of --config");
  app.add_option("--out", out, "output directory")->capture_default_str();
  app.add_option("--seed", opts.seed, "base random seed")->capture_default_str();
  app.add_option("--grid", grid, "grid steps per unit time")->check(CLI::Range(100, 100000000));
  app.add_option("--integrator", integrator, "euler or rk4")->check(CLI::IsMember({"euler", "rk4"}));
  app.add_option("--threads", opts.threads, "worker threads")->check(CLI::Range(1, 1024))->capture_default_str();
  app.add_flag_callback("--no-env", [&opts] { opts.env_overrides = false; },
                        "ignore HFTMFG_* environment overrides");

  auto* partial = app.add_subcommand("solve-partial", "HFT equilibrium for a fixed large-trader schedule");
  auto* overall = app.add_subcommand("solve-overall", "joint equilibrium with the optimal schedule");

  SimulateSettings sim;
  auto* simulate = app.add_subcommand("simulate", "finite-population simulation and deviation gains");
  simulate->add_option("--M", sim.M, "population sizes")->delimiter(',')->check(CLI::PositiveNumber);
  simulate->add_option("--seeds", sim.seeds, "number of seeds")->check(CLI::PositiveNumber)->capture_default_str();
  simulate->add_option("--dump-agents", sim.dump_agents, "write trajectories of the first agents")
      ->check(CLI::NonNegativeNumber);
  simulate->add_option("--replications", sim.replications, "Monte Carlo price paths of the large trader")
      ->check(CLI::NonNegativeNumber);

  std::vector<std::string> ids;
  auto* figures = app.add_subcommand("figures", "reproduce the figure panels as CSV and SVG");
  figures->add_option("ids", ids, "figure ids F1..F12 or all");

  ValidateSettings val;
  auto* validate = app.add_subcommand("validate", "run the invariant suite and write validation.json");
  validate->add_option("--inject", val.inject, "fault to inject (q_row_sum)");
  validate->add_option("--coarsen", val.coarsen, "divide every grid resolution")->check(CLI::PositiveNumber);

  for (auto* sub : {partial, overall, simulate, figures, validate}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (!config.empty()) opts.config = config;
  opts.out = out;
  if (grid > 0) opts.grid = grid;
  if (!integrator.empty()) opts.integrator = integrator == "euler" ? Integrator::Euler : Integrator::RK4;

  try {
    if (*partial) return cmd_solve_partial(opts, std::cout);
    if (*overall) return cmd_solve_overall(opts, std::cout);
    if (*simulate) return cmd_simulate(opts, sim, std::cout);
    if (*figures) return cmd_figures(opts, ids, std::cout);
    if (*validate) return cmd_validate(opts, val, std::cout);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return 1;
  } catch (const InfeasibleScheduleError& e) {
    std::cerr << "infeasible schedule: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 1;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
