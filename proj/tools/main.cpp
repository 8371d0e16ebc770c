#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atg/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

struct VerifyArgs {
  std::string graph = "ring";
  int n_agents = 5;
  double p = 0.5;
  std::uint64_t seed = 0;
  int dim = 1;
  double rho = 0.3;
  std::vector<double> alphas{0.1, 0.5, 0.9};
  double svd_tol = 1e-10;
};

atg::Topology verify_topology(const VerifyArgs& a) {
  if (a.graph == "ring") return atg::ring_graph(a.n_agents);
  if (a.graph == "path") return atg::path_graph(a.n_agents);
  if (a.graph == "complete") return atg::complete_graph(a.n_agents);
  if (a.graph == "star") return atg::star_graph(a.n_agents);
  return atg::erdos_renyi(a.n_agents, a.p, a.seed);
}

int cmd_verify(const VerifyArgs& a) {
  const atg::Topology t = verify_topology(a);
  const auto m = atg::build_aggregate_matrices(t, a.dim, a.rho);
  const auto kb = atg::kernel_basis(m, a.svd_tol);

  // Equilibrium at a random x; the instance comes from the same seed.
  const atg::Problem p = atg::random_quadratic(a.n_agents, a.dim, 1.0, 5.0, -10.0, 20.0, a.seed);
  std::mt19937_64 rng(atg::derive_seed(a.seed, 7));
  std::uniform_real_distribution<double> unif(-5.0, 5.0);
  Eigen::VectorXd x(a.n_agents * a.dim);
  for (auto& v : x) v = unif(rng);

  std::vector<atg::CheckReport> reports{atg::check_lemma1(kb, m), atg::check_schur_F(kb, m, a.alphas),
                                        atg::equilibrium_residuals(kb, m, p, x).report};
  nlohmann::json out = {{"check", "verify"},
                        {"params",
                         {{"graph", a.graph},
                          {"n_agents", a.n_agents},
                          {"p", a.p},
                          {"seed", a.seed},
                          {"dim", a.dim},
                          {"rho", a.rho},
                          {"alphas", a.alphas},
                          {"svd_tol", a.svd_tol},
                          {"edges", t.edges().size()},
                          {"kernel_dim", kb.b}}},
                        {"reports", nlohmann::json::array()}};
  bool pass = true;
  for (const auto& r : reports) {
    out["reports"].push_back(r.to_json());
    if (!r.pass) {
      pass = false;
      std::cerr << "verify: " << r.check << " failed at " << r.worst_residual() << " = "
                << r.residuals.at(r.worst_residual()) << "\n";
    }
  }
  out["pass"] = pass;
  std::cout << out.dump(2) << "\n";
  return pass ? kOk : kCheckFailed;
}

int cmd_run(const std::string& config, const std::optional<std::string>& out, bool svg) {
  const auto c = atg::load_config(config);
  const std::filesystem::path dir = out ? *out : c.output_dir;
  const auto r = atg::run_experiment(c, dir, svg);
  for (const auto& cell : r.cells) {
    const auto& last = cell.trace.records.back();
    std::cout << cell.name << ": t=" << last.t << " err_opt=" << last.err_opt << "\n";
  }
  std::cout << "wrote " << (dir / "manifest.json").string() << "\n";
  return kOk;
}

int cmd_tune(const std::string& config, const std::optional<std::string>& out) {
  const auto c = atg::load_config(config);
  const auto tuned = atg::tune_experiment(c);
  const std::filesystem::path dir = out ? *out : c.output_dir;
  std::filesystem::create_directories(dir);
  atg::write_file_atomic(dir / "tuned.json", tuned.dump(2) + "\n");
  for (const auto& r : tuned["results"]) {
    std::cout << r["algorithm"].get<std::string>() << ": rate=" << r["rate"].get<double>()
              << " params=" << r["params"].dump() << "\n";
  }
  std::cout << "wrote " << (dir / "tuned.json").string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ADMM-tracking gradient simulator"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::string> out;
  bool svg = false;
  auto* run = app.add_subcommand("run", "run every algorithm x scenario cell of a config");
  run->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory (default: output_dir from the config)");
  run->add_flag("--svg", svg, "also write an SVG error plot per cell");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "check the aggregate-matrix identities on one topology");
  verify->add_option("--graph", va.graph)->check(CLI::IsMember({"ring", "path", "complete", "star", "er"}));
  verify->add_option("--n-agents", va.n_agents)->check(CLI::Range(2, 200));
  verify->add_option("--p", va.p, "edge probability for --graph er")->check(CLI::Range(0.0, 1.0));
  verify->add_option("--seed", va.seed);
  verify->add_option("--dim", va.dim)->check(CLI::Range(1, 50));
  verify->add_option("--rho", va.rho)->check(CLI::PositiveNumber);
  verify->add_option("--alphas", va.alphas)->delimiter(',')->check(CLI::Range(0.0, 1.0));
  verify->add_option("--svd-tol", va.svd_tol)->check(CLI::PositiveNumber);

  std::string tune_config;
  std::optional<std::string> tune_out;
  auto* tune = app.add_subcommand("tune", "spectral line search on a quadratic config");
  tune->add_option("--config", tune_config)->required()->check(CLI::ExistingFile);
  tune->add_option("--out", tune_out, "directory for tuned.json (default: output_dir from the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return cmd_run(config, out, svg);
    if (*verify) return cmd_verify(va);
    return cmd_tune(tune_config, tune_out);
  } catch (const atg::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const atg::SpectrumError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
}
