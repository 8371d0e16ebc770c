#include <doctest.h>

#include <fstream>
#include <sstream>

#include "atg/experiment.hpp"

using namespace atg;

namespace {

const char* kSmall = R"({
  "name": "small",
  "problem": {"kind": "quadratic", "n_agents": 5, "dim": 2, "seed": 4},
  "graph": {"kind": "ring"},
  "algorithms": [
    {"name": "ATG", "gamma": 0.5, "delta": 0.3, "alpha": 0.9, "rho": 1.0},
    {"name": "GT", "gamma": 0.3, "delta": 0.4}
  ],
  "horizon": 200,
  "init_seed": 2
})";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

nlohmann::json small() { return nlohmann::json::parse(kSmall); }

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("atg_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("bundled configs parse") {
  for (const char* name : {"quadratic_fig2.json", "logistic_fig3.json", "inexact_fig4.json"}) {
    const auto c = load_config(std::filesystem::path(ATG_SOURCE_DIR) / "configs" / name);
    CHECK_FALSE(c.algorithms.empty());
    CHECK(c.horizon >= 1);
  }
}

TEST_CASE("config defaults") {
  const auto c = parse_config(kSmall);
  CHECK(c.scenarios.size() == 1);
  CHECK(c.scenarios[0].name == "nominal");
  CHECK(c.algorithms[0].label == "ATG");
  CHECK(c.problem.eig_lo == 1.0);
  CHECK(c.problem.r_hi == 20.0);
  CHECK(c.algorithms[1].params.gamma == 0.3);
}

TEST_CASE("config errors point at the problem") {
  CHECK(error_of("{\n  \"name\": \"x\",\n  \"problem\": {,\n}").find("line 3") != std::string::npos);

  auto j = small();
  j["problem"].erase("seed");
  CHECK(error_of(j.dump()).find("/problem/seed") != std::string::npos);

  j = small();
  j["horizon"] = 0;
  CHECK(error_of(j.dump()).find("/horizon") != std::string::npos);

  j = small();
  j["algorithms"] = nlohmann::json::array();
  CHECK(error_of(j.dump()).find("/algorithms") != std::string::npos);

  j = small();
  j["algorithms"][0]["gamma"] = 1.5;
  CHECK(error_of(j.dump()).find("/algorithms/0") != std::string::npos);

  j = small();
  j["algorithms"][0]["name"] = "RATG";
  CHECK(error_of(j.dump()).find("needs a schedule") != std::string::npos);

  j = small();
  j["graph"] = {{"kind", "erdos_renyi"}, {"p", 0.3}};
  CHECK(error_of(j.dump()).find("/graph/seed") != std::string::npos);

  j = small();
  j["problem"]["dim"] = "two";
  CHECK(error_of(j.dump()).find("/problem/dim") != std::string::npos);
}

TEST_CASE("run_experiment writes deterministic traces and a manifest") {
  const auto c = parse_config(kSmall);
  const auto a = scratch_dir("run_a"), b = scratch_dir("run_b");
  const auto ra = run_experiment(c, a, true);
  run_experiment(c, b);
  CHECK(ra.cells.size() == 2);
  for (const char* f : {"ATG_nominal.csv", "GT_nominal.csv"}) {
    CHECK(std::filesystem::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(std::filesystem::exists(a / "ATG_nominal.svg"));
  CHECK_FALSE(std::filesystem::exists(b / "ATG_nominal.svg"));

  const auto m = nlohmann::json::parse(slurp(a / "manifest.json"));
  const Eigen::VectorXd x_star = centralized_solve(build_problem(c.problem));
  CHECK(m["x_star"][0].get<double>() == x_star(0));
  CHECK(m["x_star"][1].get<double>() == x_star(1));
  CHECK(m["config"]["problem"]["seed"] == 4);
  CHECK(m["config"]["init_seed"] == 2);
  CHECK(m["cells"].size() == 2);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST_CASE("scenario seeds appear in the manifest") {
  auto j = small();
  j["algorithms"] = {{{"name", "RATG"}, {"gamma", 0.2}, {"delta", 0.2}}};
  j["scenarios"] = {{{"name", "lossy"}, {"schedule", {{"kind", "bernoulli"}, {"seed", 8}}}},
                    {{"name", "noisy"},
                     {"schedule", {{"kind", "bernoulli"}, {"seed", 8}}},
                     {"noise", {{"variance", 1e-4}, {"seed", 3}}}}};
  const auto r = run_experiment(parse_config(j.dump()), std::nullopt);
  CHECK(r.cells.size() == 2);
  CHECK(r.cells[1].name == "RATG_noisy");
  const auto& sc = r.manifest["config"]["scenarios"];
  CHECK(sc[0]["schedule"]["seed"] == 8);
  CHECK(sc[0]["schedule"]["draw_seed"] == derive_seed(8, 1));
  CHECK(sc[1]["noise"]["seed"] == 3);
}

TEST_CASE("tune_experiment") {
  SUBCASE("single point echoes") {
    auto j = small();
    j["tune"] = {{"grid", {{"gamma", {0.5}}, {"delta", {0.3}}, {"alpha", {0.8}}, {"rho", {0.6}}}}};
    const auto out = tune_experiment(parse_config(j.dump()));
    const auto& atg = out["results"][0];
    CHECK(atg["algorithm"] == "ATG");
    CHECK(atg["params"]["gamma"] == 0.5);
    CHECK(atg["params"]["rho"] == 0.6);
    CHECK(atg["rate"].get<double>() < 1);
  }
  SUBCASE("degenerate grid") {
    auto j = small();
    j["tune"] = {{"grid", {{"gamma", {0.0}}, {"delta", {0.3}}}}, {"algorithms", {"ATG"}}};
    CHECK_THROWS_AS(tune_experiment(parse_config(j.dump())), SpectrumError);
  }
  SUBCASE("logistic problems are rejected") {
    auto j = small();
    j["problem"]["kind"] = "logistic";
    j["tune"] = {{"grid", {{"gamma", {0.5}}, {"delta", {0.3}}}}};
    CHECK_THROWS_AS(tune_experiment(parse_config(j.dump())), ConfigError);
  }
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(5, 3) == derive_seed(5, 3));
}
