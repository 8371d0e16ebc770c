#include "atg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace atg {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config " + (path.empty() ? std::string("/") : path) + ": " + what);
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(path + "/" + key, "missing required field");
  return *it;
}

template <typename T>
T as(const json& v, const std::string& path) {
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    fail(path, std::string("wrong type (") + v.type_name() + ")");
  }
}

template <typename T>
T field(const json& obj, const std::string& key, const std::string& path) {
  return as<T>(require(obj, key, path), path + "/" + key);
}

template <typename T>
T field_or(const json& obj, const std::string& key, const std::string& path, T fallback) {
  if (!obj.is_object()) fail(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  return as<T>(*it, path + "/" + key);
}

std::pair<double, double> range_or(const json& obj, const std::string& key, const std::string& path,
                                   std::pair<double, double> fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  const auto v = as<std::vector<double>>(*it, path + "/" + key);
  if (v.size() != 2 || !(v[0] <= v[1])) fail(path + "/" + key, "expected [lo, hi] with lo <= hi");
  return {v[0], v[1]};
}

std::vector<double> axis(const json& grid, const std::string& key, const std::string& path) {
  const auto& v = require(grid, key, path);
  const std::string p = path + "/" + key;
  if (v.is_array()) return as<std::vector<double>>(v, p);
  const double lo = field<double>(v, "lo", p);
  const double hi = field<double>(v, "hi", p);
  const double step = field<double>(v, "step", p);
  if (!(step > 0) || hi < lo) fail(p, "need lo <= hi and step > 0");
  return ParamGrid::range(lo, hi, step);
}

// Line/column of a byte offset, for syntax errors.
std::pair<int, int> line_of(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t k = 0; k < std::min(byte, text.size()); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

std::string format_double(double v) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << std::setprecision(17) << v;
  return out.str();
}

json to_json_params(const HyperParams& h) {
  return {{"gamma", h.gamma}, {"delta", h.delta}, {"alpha", h.alpha}, {"rho", h.rho}};
}

std::vector<double> eigen_to_vec(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_of(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ConfigError("config parse error at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }
  if (!root.is_object()) fail("", "top level must be an object");

  ExperimentConfig c;
  c.name = field_or<std::string>(root, "name", "", "experiment");

  {
    const auto& p = require(root, "problem", "");
    const std::string path = "/problem";
    auto& s = c.problem;
    s.kind = field<std::string>(p, "kind", path);
    if (s.kind != "quadratic" && s.kind != "logistic") fail(path + "/kind", "expected quadratic or logistic");
    s.n_agents = field<int>(p, "n_agents", path);
    s.dim = field<int>(p, "dim", path);
    s.seed = field<std::uint64_t>(p, "seed", path);
    if (s.n_agents < 1) fail(path + "/n_agents", "must be >= 1");
    if (s.dim < 1 || (s.kind == "logistic" && s.dim < 2)) fail(path + "/dim", "too small");
    std::tie(s.eig_lo, s.eig_hi) = range_or(p, "eig_range", path, {s.eig_lo, s.eig_hi});
    std::tie(s.r_lo, s.r_hi) = range_or(p, "r_range", path, {s.r_lo, s.r_hi});
    if (!(s.eig_lo > 0)) fail(path + "/eig_range", "eigenvalues must be positive");
    s.m_per_agent = field_or<int>(p, "m_per_agent", path, s.m_per_agent);
    s.C = field_or<double>(p, "C", path, s.C);
    if (s.m_per_agent < 1) fail(path + "/m_per_agent", "must be >= 1");
    if (!(s.C > 0)) fail(path + "/C", "must be positive");
  }

  {
    const auto& g = require(root, "graph", "");
    const std::string path = "/graph";
    auto& s = c.graph;
    s.kind = field<std::string>(g, "kind", path);
    if (s.kind == "erdos_renyi") {
      s.p = field<double>(g, "p", path);
      s.seed = field<std::uint64_t>(g, "seed", path);
      if (!(s.p > 0 && s.p <= 1)) fail(path + "/p", "must lie in (0, 1]");
    } else if (s.kind == "edges") {
      for (const auto& e : as<std::vector<std::vector<int>>>(require(g, "edges", path), path + "/edges")) {
        if (e.size() != 2) fail(path + "/edges", "each edge must be [i, j]");
        s.edges.emplace_back(e[0], e[1]);
      }
    } else if (s.kind != "ring" && s.kind != "path" && s.kind != "complete" && s.kind != "star") {
      fail(path + "/kind", "unknown graph kind '" + s.kind + "'");
    }
  }

  const auto& algos = require(root, "algorithms", "");
  if (!algos.is_array() || algos.empty()) fail("/algorithms", "must be a non-empty array");
  for (std::size_t k = 0; k < algos.size(); ++k) {
    const std::string path = "/algorithms/" + std::to_string(k);
    AlgorithmSpec a;
    try {
      a.algo = algorithm_from_string(field<std::string>(algos[k], "name", path));
    } catch (const std::invalid_argument& e) {
      fail(path + "/name", e.what());
    }
    a.label = field_or<std::string>(algos[k], "label", path, to_string(a.algo));
    a.params.gamma = field<double>(algos[k], "gamma", path);
    a.params.delta = field<double>(algos[k], "delta", path);
    a.params.alpha = field_or<double>(algos[k], "alpha", path, a.params.alpha);
    a.params.rho = field_or<double>(algos[k], "rho", path, a.params.rho);
    try {
      a.params.validate();
    } catch (const std::invalid_argument& e) {
      fail(path, e.what());
    }
    c.algorithms.push_back(a);
  }

  if (auto it = root.find("scenarios"); it != root.end()) {
    if (!it->is_array() || it->empty()) fail("/scenarios", "must be a non-empty array");
    for (std::size_t k = 0; k < it->size(); ++k) {
      const auto& sc = (*it)[k];
      const std::string path = "/scenarios/" + std::to_string(k);
      ScenarioSpec s;
      s.name = field<std::string>(sc, "name", path);
      if (auto sit = sc.find("schedule"); sit != sc.end() && !sit->is_null()) {
        const std::string sp = path + "/schedule";
        const auto kind = field<std::string>(*sit, "kind", sp);
        if (kind != "bernoulli") fail(sp + "/kind", "only 'bernoulli' schedules are supported");
        ScheduleSpec sched;
        std::tie(sched.prob_lo, sched.prob_hi) = range_or(*sit, "prob_range", sp, {0.1, 1.0});
        if (!(sched.prob_lo > 0 && sched.prob_hi <= 1)) fail(sp + "/prob_range", "must lie in (0, 1]");
        sched.seed = field<std::uint64_t>(*sit, "seed", sp);
        sched.max_window = field_or<int>(*sit, "max_window", sp, 0);
        sched.symmetric = field_or<bool>(*sit, "symmetric", sp, false);
        s.schedule = sched;
      }
      if (auto nit = sc.find("noise"); nit != sc.end() && !nit->is_null()) {
        const std::string np = path + "/noise";
        NoiseSpec noise;
        noise.variance = field<double>(*nit, "variance", np);
        noise.seed = field<std::uint64_t>(*nit, "seed", np);
        noise.perturb_x = field_or<bool>(*nit, "perturb_x", np, true);
        noise.perturb_consensus = field_or<bool>(*nit, "perturb_consensus", np, true);
        if (!(noise.variance >= 0)) fail(np + "/variance", "must be >= 0");
        s.noise = noise;
      }
      c.scenarios.push_back(s);
    }
  } else {
    c.scenarios.push_back({"nominal", std::nullopt, std::nullopt});
  }

  for (std::size_t a = 0; a < c.algorithms.size(); ++a) {
    for (std::size_t s = 0; s < c.scenarios.size(); ++s) {
      const bool has = c.scenarios[s].schedule.has_value();
      if (needs_schedule(c.algorithms[a].algo) && !has) {
        fail("/scenarios/" + std::to_string(s), to_string(c.algorithms[a].algo) + " needs a schedule");
      }
      if (!needs_schedule(c.algorithms[a].algo) && has) {
        fail("/scenarios/" + std::to_string(s),
             to_string(c.algorithms[a].algo) + " is synchronous; remove the schedule");
      }
    }
  }

  c.horizon = field<int>(root, "horizon", "");
  if (c.horizon < 1) fail("/horizon", "must be >= 1");
  c.init_seed = field<std::uint64_t>(root, "init_seed", "");
  c.output_dir = field_or<std::string>(root, "output_dir", "", "out/" + c.name);

  if (auto it = root.find("tune"); it != root.end() && !it->is_null()) {
    const std::string path = "/tune";
    TuneSpec t;
    const auto& grid = require(*it, "grid", path);
    t.grid.gamma = axis(grid, "gamma", path + "/grid");
    t.grid.delta = axis(grid, "delta", path + "/grid");
    t.grid.alpha = grid.contains("alpha") ? axis(grid, "alpha", path + "/grid") : std::vector<double>{0.5};
    t.grid.rho = grid.contains("rho") ? axis(grid, "rho", path + "/grid") : std::vector<double>{1.0};
    const auto mode = field_or<std::string>(*it, "mode", path, "exhaustive");
    if (mode == "exhaustive") {
      t.mode = SearchMode::Exhaustive;
    } else if (mode == "coordinate") {
      t.mode = SearchMode::Coordinate;
    } else {
      fail(path + "/mode", "expected exhaustive or coordinate");
    }
    if (auto ait = it->find("algorithms"); ait != it->end()) {
      t.algorithms.clear();
      for (const auto& name : as<std::vector<std::string>>(*ait, path + "/algorithms")) {
        const Algorithm a = algorithm_from_string(name);
        if (a != Algorithm::ATG && a != Algorithm::GT) fail(path + "/algorithms", "only ATG and GT can be tuned");
        t.algorithms.push_back(a);
      }
    }
    c.tune = t;
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

json resolved_json(const ExperimentConfig& c) {
  json problem = {{"kind", c.problem.kind}, {"n_agents", c.problem.n_agents},
                  {"dim", c.problem.dim},   {"seed", c.problem.seed}};
  if (c.problem.kind == "quadratic") {
    problem["eig_range"] = {c.problem.eig_lo, c.problem.eig_hi};
    problem["r_range"] = {c.problem.r_lo, c.problem.r_hi};
  } else {
    problem["m_per_agent"] = c.problem.m_per_agent;
    problem["C"] = c.problem.C;
  }
  json graph = {{"kind", c.graph.kind}};
  if (c.graph.kind == "erdos_renyi") {
    graph["p"] = c.graph.p;
    graph["seed"] = c.graph.seed;
  }
  json algos = json::array();
  for (const auto& a : c.algorithms) {
    json j = to_json_params(a.params);
    j["name"] = to_string(a.algo);
    j["label"] = a.label;
    algos.push_back(j);
  }
  json scenarios = json::array();
  for (const auto& s : c.scenarios) {
    json j = {{"name", s.name}, {"schedule", nullptr}, {"noise", nullptr}};
    if (s.schedule) {
      j["schedule"] = {{"kind", "bernoulli"},
                       {"prob_range", {s.schedule->prob_lo, s.schedule->prob_hi}},
                       {"seed", s.schedule->seed},
                       {"draw_seed", derive_seed(s.schedule->seed, 1)},
                       {"max_window", s.schedule->max_window},
                       {"symmetric", s.schedule->symmetric}};
    }
    if (s.noise) {
      j["noise"] = {{"variance", s.noise->variance},
                    {"seed", s.noise->seed},
                    {"perturb_x", s.noise->perturb_x},
                    {"perturb_consensus", s.noise->perturb_consensus}};
    }
    scenarios.push_back(j);
  }
  return {{"name", c.name},           {"problem", problem},     {"graph", graph},
          {"algorithms", algos},      {"scenarios", scenarios}, {"horizon", c.horizon},
          {"init_seed", c.init_seed}, {"output_dir", c.output_dir}};
}

Problem build_problem(const ProblemSpec& s) {
  if (s.kind == "quadratic") {
    return random_quadratic(s.n_agents, s.dim, s.eig_lo, s.eig_hi, s.r_lo, s.r_hi, s.seed);
  }
  return random_logistic(s.n_agents, s.dim, s.m_per_agent, s.C, s.seed);
}

Topology build_topology(const GraphSpec& s, int n_agents) {
  if (s.kind == "erdos_renyi") return erdos_renyi(n_agents, s.p, s.seed);
  if (s.kind == "ring") return ring_graph(n_agents);
  if (s.kind == "path") return path_graph(n_agents);
  if (s.kind == "complete") return complete_graph(n_agents);
  if (s.kind == "star") return star_graph(n_agents);
  return Topology(n_agents, s.edges);
}

BernoulliScheduleResult build_schedule(const ScheduleSpec& spec, const Topology& t, int horizon) {
  const auto probs = random_probabilities(t, spec.prob_lo, spec.prob_hi, spec.seed);
  return bernoulli_schedule(t, probs.act, probs.delivery, horizon, derive_seed(spec.seed, 1),
                            spec.max_window, 100, spec.symmetric);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string trace_svg(const Trace& tr, const std::string& title) {
  const double width = 640, height = 400, margin = 40;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : tr.records) {
    if (r.err_opt > 0 && std::isfinite(r.err_opt)) {
      lo = std::min(lo, std::log10(r.err_opt));
      hi = std::max(hi, std::log10(r.err_opt));
    }
  }
  if (!std::isfinite(lo)) lo = hi = 0;
  if (hi - lo < 1e-9) hi = lo + 1;
  const double t_max = std::max<double>(1, tr.records.back().t);
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << std::setprecision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n<title>" << title << "</title>\n"
      << "<text x=\"" << margin << "\" y=\"20\" font-size=\"12\">" << title
      << " (log10 err_opt: " << lo << " .. " << hi << ")</text>\n"
      << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1\" points=\"";
  for (const auto& r : tr.records) {
    if (!(r.err_opt > 0) || !std::isfinite(r.err_opt)) continue;
    const double px = margin + (width - 2 * margin) * r.t / t_max;
    const double py = height - margin - (height - 2 * margin) * (std::log10(r.err_opt) - lo) / (hi - lo);
    out << px << ',' << py << ' ';
  }
  out << "\"/>\n</svg>\n";
  return out.str();
}

RunResult run_experiment(const ExperimentConfig& c,
                         const std::optional<std::filesystem::path>& out_dir, bool svg) {
  const Problem problem = build_problem(c.problem);
  const Topology topo = build_topology(c.graph, c.problem.n_agents);
  const Eigen::VectorXd x_star = centralized_solve(problem);

  RunResult result;
  json manifest = {{"config", resolved_json(c)},
                   {"x_star", eigen_to_vec(x_star)},
                   {"x_star_decimal", json::array()},
                   {"topology", to_json(topo)},
                   {"cells", json::array()}};
  for (double v : eigen_to_vec(x_star)) manifest["x_star_decimal"].push_back(format_double(v));
  json warnings = json::array();
  for (const auto& a : c.algorithms) {
    if (auto w = a.params.step_bound_warning(problem)) warnings.push_back(a.label + ": " + *w);
  }
  manifest["warnings"] = warnings;

  if (out_dir) std::filesystem::create_directories(*out_dir);
  for (const auto& scenario : c.scenarios) {
    std::optional<BernoulliScheduleResult> sched;
    if (scenario.schedule) sched = build_schedule(*scenario.schedule, topo, c.horizon);
    for (const auto& a : c.algorithms) {
      CellResult cell;
      cell.name = a.label + "_" + scenario.name;
      cell.trace = run_simulation(a.algo, problem, topo, a.params, sched ? &sched->schedule : nullptr,
                                  scenario.noise, c.horizon, c.init_seed, x_star);
      const auto& last = cell.trace.records.back();
      json entry = {{"cell", cell.name},
                    {"algorithm", to_string(a.algo)},
                    {"scenario", scenario.name},
                    {"csv", cell.name + ".csv"},
                    {"final_err_opt", last.err_opt},
                    {"final_err_max_agent", last.err_max_agent}};
      if (sched) entry["schedule_window"] = sched->window;
      manifest["cells"].push_back(entry);
      if (out_dir) {
        write_file_atomic(*out_dir / (cell.name + ".csv"), cell.trace.to_csv());
        if (svg) write_file_atomic(*out_dir / (cell.name + ".svg"), trace_svg(cell.trace, cell.name));
      }
      result.cells.push_back(std::move(cell));
    }
  }
  if (out_dir) write_file_atomic(*out_dir / "manifest.json", manifest.dump(2) + "\n");
  result.manifest = std::move(manifest);
  return result;
}

json tune_experiment(const ExperimentConfig& c) {
  if (c.problem.kind != "quadratic") {
    throw ConfigError("config /problem/kind: tuning needs a quadratic problem (got " + c.problem.kind + ")");
  }
  if (!c.tune) throw ConfigError("config /tune: missing tuning grid");
  const Problem problem = build_problem(c.problem);
  const Topology topo = build_topology(c.graph, c.problem.n_agents);
  json out = {{"config", resolved_json(c)}, {"results", json::array()}};
  for (Algorithm algo : c.tune->algorithms) {
    const TuneResult r = rate_line_search(algo, problem.quadratic(), topo, c.tune->grid, c.tune->mode);
    json params = to_json_params(r.params);
    if (algo == Algorithm::GT) {
      params.erase("alpha");
      params.erase("rho");
    }
    out["results"].push_back({{"algorithm", to_string(algo)},
                              {"params", params},
                              {"rate", r.rate},
                              {"evaluations", r.evaluations},
                              {"mode", c.tune->mode == SearchMode::Exhaustive ? "exhaustive" : "coordinate"}});
  }
  return out;
}

}  // namespace atg
