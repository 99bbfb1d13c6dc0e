#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hftmfg/config.hpp"

namespace hftmfg {

/// Bad command-line usage (exit status 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::string preset;  // built-in config name, used when no file is given
  std::filesystem::path out = "out";
  std::uint64_t seed = 0;
  std::optional<int> grid;
  std::optional<Integrator> integrator;
  int threads = 1;
  bool env_overrides = true;
};

/// Loads --config or --preset, applies HFTMFG_* environment overrides and the
/// --grid / --integrator flags, then validates.
ModelConfig resolve_config(const CommandOptions& opts);
/// Applies only the overrides (environment and flags) to a built-in config.
ModelConfig apply_overrides(const ModelConfig& cfg, const CommandOptions& opts);

int cmd_solve_partial(const CommandOptions& opts, std::ostream& log);
int cmd_solve_overall(const CommandOptions& opts, std::ostream& log);

struct SimulateSettings {
  std::vector<int> M = {1000};
  int seeds = 1;            // seeds opts.seed .. opts.seed + seeds - 1
  int dump_agents = 0;      // per-agent trajectories of the first agents (first seed, first M)
  int replications = 0;     // Monte Carlo price paths of the large trader (0 = skip)
};

int cmd_simulate(const CommandOptions& opts, const SimulateSettings& sim, std::ostream& log);

struct FigurePanel {
  std::string file;   // stem of the CSV and SVG, e.g. "F1a"
  std::string label;  // panel caption
  enum class Kind { Mean, Strategy, ProfitScan } kind;
  ModelConfig cfg;
};

struct FigureSpec {
  std::string id;  // F1..F12
  std::string title;
  std::vector<FigurePanel> panels;
};

std::vector<FigureSpec> figure_specs();
/// Unknown ids raise UsageError before anything is written.
int cmd_figures(const CommandOptions& opts, const std::vector<std::string>& ids, std::ostream& log);

/// lambdaH values of the profit-difference scans.
std::vector<double> lambdaH_scan();

struct ValidateSettings {
  std::string inject;  // "q_row_sum" perturbs a generator row of one preset
  int coarsen = 1;     // divides every grid resolution
};

int cmd_validate(const CommandOptions& opts, const ValidateSettings& v, std::ostream& log);

}  // namespace hftmfg
