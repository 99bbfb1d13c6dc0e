#include <doctest.h>

#include <filesystem>
#include <string>

#include "hftmfg/config.hpp"
#include "hftmfg/errors.hpp"
#include "hftmfg/presets.hpp"

using namespace hftmfg;
using nlohmann::json;

namespace {

std::string field_of(const json& j) {
  try {
    parse_config(j);
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_CASE("json round trip preserves every preset") {
  for (const auto& p : all_presets()) {
    CAPTURE(p.name);
    const ModelConfig back = parse_config(to_json(p.cfg));
    CHECK(back == p.cfg);
    CHECK(config_hash(back) == config_hash(p.cfg));
  }
}

TEST_CASE("file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "hftmfg_cfg_roundtrip.json";
  const ModelConfig cfg = two_state(0.0, 0.0, 10.0, 2.0, 0.2, 0.8, Mode::Partial);
  save_config(cfg, path);
  CHECK(load_config(path) == cfg);
  std::filesystem::remove(path);
}

TEST_CASE("hash changes with content") {
  ModelConfig a = baseline_partial(0.0, 0.0);
  ModelConfig b = a;
  b.market.lambdaH = 0.2;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("validation names the offending field") {
  const json base = to_json(two_state(0.0, 0.0, 10.0, 2.0, 0.5, 0.5, Mode::Partial));

  json j = base;
  j["aversion"]["Q"][0][1] = 0.7;
  CHECK(field_of(j) == "aversion.Q");

  j = base;
  j["aversion"]["Q"][0] = {0.5, -0.5};
  CHECK(field_of(j) == "aversion.Q");

  j = base;
  j["aversion"]["p0"] = {0.4, 0.4};
  CHECK(field_of(j) == "aversion.p0");

  j = base;
  j["schedule"]["times"] = {0.5, 0.2};
  CHECK(field_of(j) == "schedule.times");

  j = base;
  j["schedule"]["times"] = {0.0, 0.5};
  j["schedule"]["quantities"] = {1.0, 1.0};
  CHECK(field_of(j) == "schedule.times");

  j = base;
  j["schedule"]["quantities"] = {1.0};
  CHECK(field_of(j) == "schedule.quantities");

  j = base;
  j["market"]["eta"] = 0.0;
  CHECK(field_of(j) == "market.eta");

  j = base;
  j["aversion"]["phi"] = {-1.0, 0.0};
  CHECK(field_of(j) == "aversion.phi[0]");

  j = base;
  j["population"]["E0"] = {2.0, 0.0};
  CHECK(field_of(j) == "population.inventory_bound");

  j = base;
  j["solver"]["integrator"] = "midpoint";
  CHECK(field_of(j) == "solver.integrator");

  j = base;
  j["mode"] = "overall";
  j["schedule"].erase("xi0");
  j["schedule"].erase("quantities");
  CHECK(field_of(j) == "schedule.xi0");
}

TEST_CASE("zero HFT impacts are accepted") {
  json j = to_json(baseline_overall(0.0, 0.0));
  j["market"]["gammaH"] = 0.0;
  j["market"]["lambdaH"] = 0.0;
  CHECK_NOTHROW(parse_config(j));
}

TEST_CASE("malformed json raises ParseError") {
  const auto path = std::filesystem::temp_directory_path() / "hftmfg_cfg_bad.json";
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("{\"mode\": ", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_config(path), ParseError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config("/nonexistent/cfg.json"), ParseError);
}

TEST_CASE("overall mode with fixed quantities must clear the position") {
  ModelConfig cfg = baseline_overall(0.0, 0.0);
  cfg.schedule.quantities.assign(9, 1.0);
  CHECK_NOTHROW(validate_schedule_feasibility(cfg));
  cfg.schedule.quantities[0] = 1.5;
  CHECK_THROWS_AS(validate_schedule_feasibility(cfg), InfeasibleScheduleError);
}

TEST_CASE("environment overrides") {
  json j = to_json(baseline_partial(0.0, 0.0));
  apply_env_overrides(j, "HFTMFG_",
                      {{"HFTMFG_MARKET_LAMBDAH", "0.3"},
                       {"HFTMFG_SOLVER_INTEGRATOR", "euler"},
                       {"HFTMFG_MODE", "partial"},
                       {"OTHER_MARKET_GAMMA", "5"}});
  const ModelConfig cfg = parse_config(j);
  CHECK(cfg.market.lambdaH == doctest::Approx(0.3));
  CHECK(cfg.solver.integrator == Integrator::Euler);
  CHECK(cfg.market.gamma == 1.0);
}
