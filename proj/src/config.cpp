#include "hftmfg/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "hftmfg/errors.hpp"

extern char** environ;

namespace hftmfg {

namespace {

using nlohmann::json;

constexpr double kRowSumTol = 1e-12;
constexpr double kFeasibilityTol = 1e-12;

const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) {
    throw ValidationError(path + key, "missing required key");
  }
  return j.at(key);
}

double number(const json& j, const std::string& field) {
  if (!j.is_number()) throw ValidationError(field, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw ValidationError(field, "must be finite");
  return v;
}

Eigen::VectorXd vector_of(const json& j, const std::string& field) {
  if (!j.is_array()) throw ValidationError(field, "expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = number(j[i], field + "[" + std::to_string(i) + "]");
  }
  return v;
}

std::vector<double> std_vector_of(const json& j, const std::string& field) {
  Eigen::VectorXd v = vector_of(j, field);
  return {v.data(), v.data() + v.size()};
}

Eigen::MatrixXd matrix_of(const json& j, const std::string& field) {
  if (!j.is_array()) throw ValidationError(field, "expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  if (!j[0].is_array()) throw ValidationError(field, "expected an array of rows");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ValidationError(field, "rows must all have the same length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = number(row[static_cast<std::size_t>(c)],
                       field + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
  }
  return m;
}

json to_json_vector(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

Integrator parse_integrator(const json& j) {
  if (!j.is_string()) throw ValidationError("solver.integrator", "expected \"euler\" or \"rk4\"");
  const std::string s = lower(j.get<std::string>());
  if (s == "euler") return Integrator::Euler;
  if (s == "rk4") return Integrator::RK4;
  throw ValidationError("solver.integrator", "unknown integrator '" + s + "'");
}

void check_positive(double v, const std::string& field) {
  if (!(v > 0.0)) throw ValidationError(field, "must be > 0 (got " + std::to_string(v) + ")");
}

void check_nonnegative(double v, const std::string& field) {
  if (!(v >= 0.0)) throw ValidationError(field, "must be >= 0 (got " + std::to_string(v) + ")");
}

// Keys accepted per section, used to resolve case-insensitive env overrides.
const std::map<std::string, std::vector<std::string>>& schema_keys() {
  static const std::map<std::string, std::vector<std::string>> keys = {
      {"market", {"gamma", "gammaH", "lambda", "lambdaH", "eta", "eta0", "sigma", "P0"}},
      {"aversion", {"Gamma", "phi", "Q", "p0"}},
      {"schedule", {"T", "times", "quantities", "xi0"}},
      {"population", {"E0", "inventory_bound"}},
      {"solver",
       {"grid_steps_per_unit_time", "integrator", "shooting_tolerance", "lt_mu_convention"}},
  };
  return keys;
}

}  // namespace

std::string to_string(Integrator i) { return i == Integrator::Euler ? "euler" : "rk4"; }
std::string to_string(Mode m) { return m == Mode::Partial ? "partial" : "overall"; }
std::string to_string(MuConvention c) { return c == MuConvention::Right ? "right" : "left"; }

ModelConfig parse_config(const json& j) {
  if (!j.is_object()) throw ParseError("config root must be a JSON object");
  ModelConfig cfg;

  const json& mode = require(j, "mode", "");
  if (!mode.is_string()) throw ValidationError("mode", "expected \"partial\" or \"overall\"");
  const std::string m = lower(mode.get<std::string>());
  if (m == "partial") {
    cfg.mode = Mode::Partial;
  } else if (m == "overall") {
    cfg.mode = Mode::Overall;
  } else {
    throw ValidationError("mode", "expected \"partial\" or \"overall\", got '" + m + "'");
  }

  const json& mk = require(j, "market", "");
  cfg.market.gamma = number(require(mk, "gamma", "market."), "market.gamma");
  cfg.market.gammaH = number(require(mk, "gammaH", "market."), "market.gammaH");
  cfg.market.lambda = number(require(mk, "lambda", "market."), "market.lambda");
  cfg.market.lambdaH = number(require(mk, "lambdaH", "market."), "market.lambdaH");
  cfg.market.eta = number(require(mk, "eta", "market."), "market.eta");
  cfg.market.eta0 = number(require(mk, "eta0", "market."), "market.eta0");
  cfg.market.sigma = number(require(mk, "sigma", "market."), "market.sigma");
  if (mk.contains("P0")) cfg.market.P0 = number(mk["P0"], "market.P0");

  const json& av = require(j, "aversion", "");
  cfg.aversion.Gamma = vector_of(require(av, "Gamma", "aversion."), "aversion.Gamma");
  cfg.aversion.phi = vector_of(require(av, "phi", "aversion."), "aversion.phi");
  cfg.aversion.Q = matrix_of(require(av, "Q", "aversion."), "aversion.Q");
  cfg.aversion.p0 = vector_of(require(av, "p0", "aversion."), "aversion.p0");

  const json& sc = require(j, "schedule", "");
  cfg.schedule.T = number(require(sc, "T", "schedule."), "schedule.T");
  cfg.schedule.times = std_vector_of(require(sc, "times", "schedule."), "schedule.times");
  if (sc.contains("quantities") && !sc["quantities"].is_null()) {
    cfg.schedule.quantities = std_vector_of(sc["quantities"], "schedule.quantities");
  }
  if (sc.contains("xi0") && !sc["xi0"].is_null()) {
    cfg.schedule.xi0 = number(sc["xi0"], "schedule.xi0");
  }

  const json& pop = require(j, "population", "");
  cfg.population.E0 = vector_of(require(pop, "E0", "population."), "population.E0");
  cfg.population.inventory_bound =
      number(require(pop, "inventory_bound", "population."), "population.inventory_bound");

  if (j.contains("solver")) {
    const json& so = j["solver"];
    if (so.contains("grid_steps_per_unit_time")) {
      const json& g = so["grid_steps_per_unit_time"];
      if (!g.is_number_integer()) {
        throw ValidationError("solver.grid_steps_per_unit_time", "expected an integer");
      }
      cfg.solver.grid_steps_per_unit_time = g.get<int>();
    }
    if (so.contains("integrator")) cfg.solver.integrator = parse_integrator(so["integrator"]);
    if (so.contains("shooting_tolerance")) {
      cfg.solver.shooting_tolerance =
          number(so["shooting_tolerance"], "solver.shooting_tolerance");
    }
    if (so.contains("lt_mu_convention")) {
      const json& c = so["lt_mu_convention"];
      const std::string s = c.is_string() ? lower(c.get<std::string>()) : "";
      if (s == "right") {
        cfg.solver.lt_mu_convention = MuConvention::Right;
      } else if (s == "left") {
        cfg.solver.lt_mu_convention = MuConvention::Left;
      } else {
        throw ValidationError("solver.lt_mu_convention", "expected \"right\" or \"left\"");
      }
    }
  }

  validate(cfg);
  return cfg;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed config '" + path.string() + "': " + e.what());
  }
  return parse_config(j);
}

json to_json(const ModelConfig& cfg) {
  json j;
  j["mode"] = to_string(cfg.mode);
  j["market"] = {{"gamma", cfg.market.gamma}, {"gammaH", cfg.market.gammaH},
                 {"lambda", cfg.market.lambda}, {"lambdaH", cfg.market.lambdaH},
                 {"eta", cfg.market.eta},     {"eta0", cfg.market.eta0},
                 {"sigma", cfg.market.sigma}, {"P0", cfg.market.P0}};
  json q = json::array();
  for (Eigen::Index r = 0; r < cfg.aversion.Q.rows(); ++r) {
    q.push_back(to_json_vector(cfg.aversion.Q.row(r).transpose()));
  }
  j["aversion"] = {{"Gamma", to_json_vector(cfg.aversion.Gamma)},
                   {"phi", to_json_vector(cfg.aversion.phi)},
                   {"Q", q},
                   {"p0", to_json_vector(cfg.aversion.p0)}};
  j["schedule"] = {{"T", cfg.schedule.T}, {"times", cfg.schedule.times}};
  if (!cfg.schedule.quantities.empty()) j["schedule"]["quantities"] = cfg.schedule.quantities;
  if (cfg.schedule.xi0) j["schedule"]["xi0"] = *cfg.schedule.xi0;
  j["population"] = {{"E0", to_json_vector(cfg.population.E0)},
                     {"inventory_bound", cfg.population.inventory_bound}};
  j["solver"] = {{"grid_steps_per_unit_time", cfg.solver.grid_steps_per_unit_time},
                 {"integrator", to_string(cfg.solver.integrator)},
                 {"shooting_tolerance", cfg.solver.shooting_tolerance},
                 {"lt_mu_convention", to_string(cfg.solver.lt_mu_convention)}};
  return j;
}

void save_config(const ModelConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write config file '" + path.string() + "'");
  out << to_json(cfg).dump(2) << '\n';
}

void validate(const ModelConfig& cfg) {
  const MarketParams& mk = cfg.market;
  check_positive(mk.gamma, "market.gamma");
  // gammaH = lambdaH = 0 is the decoupled benchmark; only negatives are rejected.
  check_nonnegative(mk.gammaH, "market.gammaH");
  check_positive(mk.lambda, "market.lambda");
  check_nonnegative(mk.lambdaH, "market.lambdaH");
  check_positive(mk.eta, "market.eta");
  check_positive(mk.eta0, "market.eta0");
  check_nonnegative(mk.sigma, "market.sigma");

  const AversionSpec& av = cfg.aversion;
  const Eigen::Index n = av.Gamma.size();
  if (n < 1) throw ValidationError("aversion.Gamma", "at least one aversion state required");
  if (av.phi.size() != n) throw ValidationError("aversion.phi", "length must equal len(Gamma)");
  if (av.p0.size() != n) throw ValidationError("aversion.p0", "length must equal len(Gamma)");
  if (av.Q.rows() != n || av.Q.cols() != n) {
    throw ValidationError("aversion.Q", "must be an N x N matrix with N = len(Gamma)");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    check_nonnegative(av.Gamma(i), "aversion.Gamma[" + std::to_string(i) + "]");
    check_nonnegative(av.phi(i), "aversion.phi[" + std::to_string(i) + "]");
    check_nonnegative(av.p0(i), "aversion.p0[" + std::to_string(i) + "]");
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k != i && av.Q(i, k) < 0.0) {
        throw ValidationError("aversion.Q", "off-diagonal rate Q[" + std::to_string(i) + "][" +
                                                std::to_string(k) + "] is negative");
      }
    }
    const double row_sum = av.Q.row(i).sum();
    if (std::abs(row_sum) > kRowSumTol) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3g", row_sum);
      throw ValidationError("aversion.Q", "Q row sum of row " + std::to_string(i) +
                                              " is " + buf + ", expected 0");
    }
  }
  if (std::abs(av.p0.sum() - 1.0) > kRowSumTol) {
    throw ValidationError("aversion.p0", "entries must sum to 1");
  }

  const LTSchedule& sc = cfg.schedule;
  check_positive(sc.T, "schedule.T");
  for (std::size_t k = 0; k < sc.times.size(); ++k) {
    const double t = sc.times[k];
    if (!(t > 0.0 && t < sc.T)) {
      throw ValidationError("schedule.times",
                            "trade time t_" + std::to_string(k + 1) + " must lie in (0, T)");
    }
    if (k > 0 && !(t > sc.times[k - 1])) {
      throw ValidationError("schedule.times", "trade times must be strictly increasing");
    }
  }
  if (!sc.quantities.empty() && sc.quantities.size() != sc.times.size()) {
    throw ValidationError("schedule.quantities", "length must equal len(times)");
  }
  if (cfg.mode == Mode::Partial && !sc.has_quantities()) {
    throw ValidationError("schedule.quantities", "required in partial mode");
  }
  if (cfg.mode == Mode::Overall && !sc.xi0) {
    throw ValidationError("schedule.xi0", "required in overall mode");
  }
  if (cfg.mode == Mode::Overall && sc.times.empty() && *sc.xi0 != 0.0) {
    throw InfeasibleScheduleError(*sc.xi0, "schedule.xi0: nonzero position with no trade times");
  }

  const PopulationInit& pop = cfg.population;
  if (pop.E0.size() != n) throw ValidationError("population.E0", "length must equal N");
  check_nonnegative(pop.inventory_bound, "population.inventory_bound");
  if (pop.E0.size() > 0 && pop.inventory_bound < pop.E0.cwiseAbs().maxCoeff()) {
    throw ValidationError("population.inventory_bound", "must be >= max |E0_i|");
  }

  if (cfg.solver.grid_steps_per_unit_time < 100) {
    throw ValidationError("solver.grid_steps_per_unit_time", "must be >= 100");
  }
  check_positive(cfg.solver.shooting_tolerance, "solver.shooting_tolerance");
}

void validate_schedule_feasibility(const ModelConfig& cfg) {
  if (cfg.mode != Mode::Overall || cfg.schedule.quantities.empty()) return;
  double sum = *cfg.schedule.xi0;
  for (double q : cfg.schedule.quantities) sum += q;
  if (std::abs(sum) > kFeasibilityTol) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "xi0 + sum(xi) = %.17g, expected 0", sum);
    throw InfeasibleScheduleError(sum, buf);
  }
}

void apply_env_overrides(json& j, const std::string& prefix,
                         const std::vector<std::pair<std::string, std::string>>& env) {
  for (const auto& [name, value] : env) {
    if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0) continue;
    const std::string rest = lower(name.substr(prefix.size()));
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::parse_error&) {
      parsed = value;
    }
    if (rest == "mode") {
      j["mode"] = parsed;
      continue;
    }
    const auto us = rest.find('_');
    if (us == std::string::npos) throw ValidationError(name, "cannot map to a config key");
    const std::string section = rest.substr(0, us);
    const std::string key = rest.substr(us + 1);
    const auto it = schema_keys().find(section);
    if (it == schema_keys().end()) throw ValidationError(name, "unknown config section");
    const auto& keys = it->second;
    const auto k = std::find_if(keys.begin(), keys.end(),
                                [&](const std::string& s) { return lower(s) == key; });
    if (k == keys.end()) throw ValidationError(name, "unknown key in section " + section);
    j[section][*k] = parsed;
  }
}

void apply_env_overrides(json& j, const std::string& prefix) {
  std::vector<std::pair<std::string, std::string>> env;
  for (char** e = environ; e && *e; ++e) {
    std::string kv(*e);
    const auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    env.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  std::sort(env.begin(), env.end());
  apply_env_overrides(j, prefix, env);
}

std::string config_hash(const ModelConfig& cfg) {
  const std::string s = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hftmfg
