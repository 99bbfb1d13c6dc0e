#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace hftmfg {

/// Price impact, fee and volatility coefficients.
struct MarketParams {
  double gamma = 1.0;    // permanent impact of the large trader
  double gammaH = 0.7;   // permanent impact of aggregate HFT speed
  double lambda = 0.4;   // temporary impact of the large trader
  double lambdaH = 0.1;  // temporary impact of aggregate HFT speed
  double eta0 = 0.05;    // large-trader fee
  double eta = 0.05;     // HFT fee
  double sigma = 0.0;    // price volatility, only read by path sampling
  double P0 = 0.0;       // initial fair price, reporting only

  bool operator==(const MarketParams&) const = default;
};

/// Inventory-aversion states and the Markov chain switching between them.
struct AversionSpec {
  Eigen::VectorXd Gamma;  // terminal aversion per state
  Eigen::VectorXd phi;    // running aversion per state
  Eigen::MatrixXd Q;      // transition-rate matrix, rows sum to zero
  Eigen::VectorXd p0;     // initial distribution

  int n_states() const { return static_cast<int>(Gamma.size()); }
  bool operator==(const AversionSpec& o) const {
    return Gamma == o.Gamma && phi == o.phi && Q == o.Q && p0 == o.p0;
  }
};

/// Large-trader trade times t_1 < ... < t_K inside (0, T) and quantities.
struct LTSchedule {
  double T = 1.0;
  std::vector<double> times;
  std::vector<double> quantities;  // empty when omitted (overall mode)
  std::optional<double> xi0;

  int K() const { return static_cast<int>(times.size()); }
  bool has_quantities() const { return !quantities.empty() || times.empty(); }
  bool operator==(const LTSchedule&) const = default;
};

struct PopulationInit {
  Eigen::VectorXd E0;           // per-state initial mean inventory
  double inventory_bound = 1.0; // |X_j(0)| <= m for the finite simulator

  bool operator==(const PopulationInit& o) const {
    return E0 == o.E0 && inventory_bound == o.inventory_bound;
  }
};

enum class Integrator { Euler, RK4 };
/// Which one-sided value of the HFT speed the large trader's price uses at t_k.
enum class MuConvention { Right, Left };
enum class Mode { Partial, Overall };

struct SolverSettings {
  int grid_steps_per_unit_time = 1000;
  Integrator integrator = Integrator::RK4;
  double shooting_tolerance = 1e-6;
  MuConvention lt_mu_convention = MuConvention::Right;

  bool operator==(const SolverSettings&) const = default;
};

struct ModelConfig {
  MarketParams market;
  AversionSpec aversion;
  LTSchedule schedule;
  PopulationInit population;
  SolverSettings solver;
  Mode mode = Mode::Partial;

  int N() const { return aversion.n_states(); }
  int K() const { return schedule.K(); }
  bool operator==(const ModelConfig&) const = default;
};

std::string to_string(Integrator);
std::string to_string(Mode);
std::string to_string(MuConvention);

/// Parses and validates. Throws ParseError or ValidationError.
ModelConfig parse_config(const nlohmann::json& j);
ModelConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ModelConfig& cfg);
void save_config(const ModelConfig& cfg, const std::filesystem::path& path);

/// Checks every field invariant; throws ValidationError naming the field.
void validate(const ModelConfig& cfg);

/// Overall mode with user-fixed quantities: xi0 + sum(xi) must vanish to
/// 1e-12. Partial mode carries no sum constraint.
void validate_schedule_feasibility(const ModelConfig& cfg);

/// Overrides config keys from environment-style pairs. `PREFIX_SECTION_KEY`
/// maps to json[section][key] (case-insensitive); `PREFIX_MODE` maps to the
/// top-level mode. Values are parsed as JSON, falling back to a plain string.
void apply_env_overrides(nlohmann::json& j, const std::string& prefix,
                         const std::vector<std::pair<std::string, std::string>>& env);
/// Same, reading the process environment.
void apply_env_overrides(nlohmann::json& j, const std::string& prefix);

inline constexpr const char* kEnvPrefix = "HFTMFG_";

/// FNV-1a hash of the canonical JSON serialization, as 16 hex digits.
std::string config_hash(const ModelConfig& cfg);

}  // namespace hftmfg
