#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "atg/analysis.hpp"
#include "atg/netsim.hpp"

namespace atg {

/// Config parse or validation failure. The message carries the line number
/// for syntax errors and the JSON pointer of the offending value otherwise.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProblemSpec {
  std::string kind;  ///< "quadratic" | "logistic"
  int n_agents = 10;
  int dim = 2;
  double eig_lo = 1.0, eig_hi = 5.0;
  double r_lo = -10.0, r_hi = 20.0;
  int m_per_agent = 3;
  double C = 0.1;
  std::uint64_t seed = 0;
};

struct GraphSpec {
  std::string kind = "erdos_renyi";  ///< erdos_renyi | ring | path | complete | star | edges
  double p = 0.1;
  std::uint64_t seed = 0;
  std::vector<Edge> edges;  ///< kind == "edges"
};

struct AlgorithmSpec {
  Algorithm algo = Algorithm::ATG;
  std::string label;  ///< file-name prefix; defaults to the algorithm name
  HyperParams params;
};

struct ScheduleSpec {
  double prob_lo = 0.1;
  double prob_hi = 1.0;
  std::uint64_t seed = 0;
  int max_window = 0;
  bool symmetric = false;  ///< beta_ij and beta_ji share one success draw
};

struct ScenarioSpec {
  std::string name;
  std::optional<ScheduleSpec> schedule;
  std::optional<NoiseSpec> noise;
};

struct TuneSpec {
  ParamGrid grid;
  SearchMode mode = SearchMode::Exhaustive;
  std::vector<Algorithm> algorithms{Algorithm::ATG, Algorithm::GT};
};

struct ExperimentConfig {
  std::string name;
  ProblemSpec problem;
  GraphSpec graph;
  std::vector<AlgorithmSpec> algorithms;
  std::vector<ScenarioSpec> scenarios;
  int horizon = 1000;
  std::uint64_t init_seed = 0;
  std::string output_dir = "out";
  std::optional<TuneSpec> tune;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Normalized config with every default and seed spelled out.
nlohmann::json resolved_json(const ExperimentConfig& c);

Problem build_problem(const ProblemSpec& spec);
Topology build_topology(const GraphSpec& spec, int n_agents);
/// Probabilities ~ U[prob_lo, prob_hi) from `seed`, then a Bernoulli draw
/// from a seed derived from it.
BernoulliScheduleResult build_schedule(const ScheduleSpec& spec, const Topology& t, int horizon);

/// splitmix64 of seed + stream; used wherever one seed feeds several streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct CellResult {
  std::string name;  ///< <algo>_<scenario>
  Trace trace;
};

struct RunResult {
  std::vector<CellResult> cells;
  nlohmann::json manifest;
};

/// Runs every (algorithm x scenario) cell. When `out_dir` is set, writes
/// <cell>.csv (and <cell>.svg with `svg`) plus manifest.json there.
RunResult run_experiment(const ExperimentConfig& c,
                         const std::optional<std::filesystem::path>& out_dir, bool svg = false);

/// Spectral tuning of each configured algorithm; the problem must be
/// quadratic. Returns the content of tuned.json.
nlohmann::json tune_experiment(const ExperimentConfig& c);

/// Log-scale error-vs-iteration polyline.
std::string trace_svg(const Trace& tr, const std::string& title);

/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace atg
