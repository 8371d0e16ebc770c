#include "atg/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace atg {

namespace {

// Smallest w such that every length-w run of the row contains a 1.
std::optional<int> required_window(const auto& row) {
  const int T = static_cast<int>(row.size());
  int last = -1;
  int need = 0;
  for (int t = 0; t < T; ++t) {
    if (row(t)) {
      need = std::max(need, t - last);
      last = t;
    }
  }
  if (last < 0) return std::nullopt;
  return std::max(need, T - last);
}

}  // namespace

Schedule::Schedule(BitMatrix active, BitMatrix delivered)
    : active_(std::move(active)), delivered_(std::move(delivered)) {
  if (active_.cols() < 1 || active_.cols() != delivered_.cols()) {
    throw std::invalid_argument("Schedule: activation and delivery horizons differ or are empty");
  }
}

Schedule Schedule::all_ones(const Topology& t, int horizon) {
  return Schedule(BitMatrix::Ones(t.n_agents(), horizon), BitMatrix::Ones(t.total_degree(), horizon));
}

BitMatrix Schedule::psi(const Topology& t) const {
  BitMatrix out(delivered_.rows(), delivered_.cols());
  for (int s = 0; s < n_slots(); ++s) out.row(s) = delivered_.row(s) * active_.row(t.slot_owner(s));
  return out;
}

ScheduleSlice Schedule::slice(int t) const {
  const int c = t % horizon();
  ScheduleSlice s;
  s.active.resize(n_agents());
  s.delivered.resize(n_slots());
  for (int i = 0; i < n_agents(); ++i) s.active[i] = active_(i, c);
  for (int k = 0; k < n_slots(); ++k) s.delivered[k] = delivered_(k, c);
  return s;
}

std::optional<int> Schedule::measured_window(const Topology& t) const {
  if (n_agents() != t.n_agents() || n_slots() != t.total_degree()) {
    throw std::invalid_argument("Schedule: does not match topology");
  }
  int window = 1;
  for (int i = 0; i < n_agents(); ++i) {
    const auto w = required_window(active_.row(i));
    if (!w) return std::nullopt;
    window = std::max(window, *w);
  }
  const BitMatrix p = psi(t);
  for (int s = 0; s < n_slots(); ++s) {
    const auto w = required_window(p.row(s));
    if (!w) return std::nullopt;
    window = std::max(window, *w);
  }
  return window;
}

bool verify_essentially_cyclic(const Schedule& s, const Topology& t, int window) {
  if (window < 1) throw std::invalid_argument("verify_essentially_cyclic: window must be >= 1");
  const auto measured = s.measured_window(t);
  // measured never exceeds the horizon, so long windows reduce to "fires once".
  return measured.has_value() && *measured <= window;
}

BernoulliScheduleResult bernoulli_schedule(const Topology& t, std::span<const double> act_probs,
                                           std::span<const double> delivery_probs, int horizon,
                                           std::uint64_t seed, int max_window, int redraw_cap,
                                           bool symmetric) {
  const int N = t.n_agents();
  const int S = t.total_degree();
  if (static_cast<int>(act_probs.size()) != N || static_cast<int>(delivery_probs.size()) != S) {
    throw std::invalid_argument("bernoulli_schedule: probability vectors do not match topology");
  }
  if (horizon < 1) throw std::invalid_argument("bernoulli_schedule: horizon must be >= 1");
  auto in_range = [](double p) { return p > 0.0 && p <= 1.0; };
  if (!std::all_of(act_probs.begin(), act_probs.end(), in_range) ||
      !std::all_of(delivery_probs.begin(), delivery_probs.end(), in_range)) {
    throw std::invalid_argument("bernoulli_schedule: probabilities must lie in (0, 1]");
  }
  const int limit = max_window > 0 ? max_window : horizon;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int attempt = 0; attempt <= redraw_cap; ++attempt) {
    BitMatrix active(N, horizon);
    BitMatrix delivered(S, horizon);
    std::vector<std::uint8_t> ok(S);
    for (int c = 0; c < horizon; ++c) {
      for (int i = 0; i < N; ++i) active(i, c) = unif(rng) < act_probs[i];
      for (int s = 0; s < S; ++s) ok[s] = unif(rng) < delivery_probs[s];
      for (int s = 0; s < S; ++s) {
        const int link = symmetric ? std::min(s, t.reverse_slot(s)) : s;
        delivered(s, c) = ok[link] && active(t.slot_peer(s), c);
      }
    }
    Schedule schedule(std::move(active), std::move(delivered));
    const auto window = schedule.measured_window(t);
    if (window && *window <= limit) return {std::move(schedule), *window, attempt};
  }
  std::ostringstream msg;
  msg << "bernoulli_schedule: no essentially cyclic draw with window <= " << limit << " after "
      << redraw_cap << " redraws";
  throw std::runtime_error(msg.str());
}

ScheduleProbabilities random_probabilities(const Topology& t, double lo, double hi,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(lo, hi);
  ScheduleProbabilities p;
  for (int i = 0; i < t.n_agents(); ++i) p.act.push_back(unif(rng));
  for (int s = 0; s < t.total_degree(); ++s) p.delivery.push_back(unif(rng));
  return p;
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::ATG: return "ATG";
    case Algorithm::RATG: return "RATG";
    case Algorithm::GT: return "GT";
    case Algorithm::PS: return "PS";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "ATG") return Algorithm::ATG;
  if (name == "RATG") return Algorithm::RATG;
  if (name == "GT") return Algorithm::GT;
  if (name == "PS") return Algorithm::PS;
  throw std::invalid_argument("unknown algorithm '" + name + "' (expected ATG, RATG, GT or PS)");
}

bool needs_schedule(Algorithm a) { return a == Algorithm::RATG || a == Algorithm::PS; }

void Trace::write_csv(std::ostream& out) const {
  out << "t,err_opt,err_max_agent,err_consensus\n";
  out << std::setprecision(17);
  for (const auto& r : records) {
    out << r.t << ',' << r.err_opt << ',' << r.err_max_agent << ',' << r.err_consensus << '\n';
  }
}

std::string Trace::to_csv() const {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  write_csv(out);
  return out.str();
}

TraceRecord measure(long t, const Eigen::MatrixXd& X, const Eigen::VectorXd& x_star) {
  const Eigen::MatrixXd err = X.colwise() - x_star;
  const Eigen::VectorXd mean = X.rowwise().mean();
  return {t, err.norm(), err.colwise().norm().maxCoeff(), (X.colwise() - mean).norm()};
}

std::pair<Eigen::MatrixXd, EdgeVariables> initial_state(const Problem& p, const Topology& t,
                                                        std::uint64_t init_seed, double range) {
  std::mt19937_64 rng(init_seed);
  std::uniform_real_distribution<double> unif(-range, range);
  Eigen::MatrixXd x0(p.dim(), p.n_agents());
  for (Eigen::Index c = 0; c < x0.cols(); ++c)
    for (Eigen::Index r = 0; r < x0.rows(); ++r) x0(r, c) = unif(rng);
  EdgeVariables z0(2 * p.dim(), t.total_degree());
  for (Eigen::Index c = 0; c < z0.values.cols(); ++c)
    for (Eigen::Index r = 0; r < z0.values.rows(); ++r) z0.values(r, c) = unif(rng);
  return {std::move(x0), std::move(z0)};
}

namespace {

class Disturbance {
 public:
  explicit Disturbance(const NoiseSpec& spec)
      : spec_(spec), rng_(spec.seed), gauss_(0.0, std::sqrt(spec.variance)) {}

  template <typename Block>
  void add(Block&& block) {
    if (spec_.variance == 0.0) return;
    for (Eigen::Index c = 0; c < block.cols(); ++c)
      for (Eigen::Index r = 0; r < block.rows(); ++r) block(r, c) += gauss_(rng_);
  }

  const NoiseSpec& spec() const { return spec_; }

 private:
  NoiseSpec spec_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_;
};

}  // namespace

Trace run_simulation(Algorithm algo, const Problem& p, const Topology& t, const HyperParams& h,
                     const Schedule* schedule, const std::optional<NoiseSpec>& noise, int horizon,
                     std::uint64_t init_seed, const SimulationOptions& options) {
  return run_simulation(algo, p, t, h, schedule, noise, horizon, init_seed,
                        centralized_solve(p, options.solve_tol), options);
}

Trace run_simulation(Algorithm algo, const Problem& p, const Topology& t, const HyperParams& h,
                     const Schedule* schedule, const std::optional<NoiseSpec>& noise, int horizon,
                     std::uint64_t init_seed, const Eigen::VectorXd& x_star,
                     const SimulationOptions& options) {
  if (p.n_agents() != t.n_agents()) {
    throw std::invalid_argument("run_simulation: problem has " + std::to_string(p.n_agents()) +
                                " agents but topology has " + std::to_string(t.n_agents()));
  }
  if (horizon < 1) throw std::invalid_argument("run_simulation: horizon must be >= 1");
  if (needs_schedule(algo) && schedule == nullptr) {
    throw std::invalid_argument("run_simulation: " + to_string(algo) + " requires a schedule");
  }
  if (!needs_schedule(algo) && schedule != nullptr) {
    throw std::invalid_argument("run_simulation: " + to_string(algo) + " is synchronous and takes no schedule");
  }
  if (schedule != nullptr &&
      (schedule->n_agents() != t.n_agents() || schedule->n_slots() != t.total_degree())) {
    throw std::invalid_argument("run_simulation: schedule does not match topology");
  }
  if (noise && noise->variance < 0) throw std::invalid_argument("run_simulation: negative noise variance");
  h.validate();

  Trace trace;
  trace.x_star = x_star;
  trace.records.reserve(horizon + 1);
  auto record = [&](long step, const Eigen::MatrixXd& X) {
    trace.records.push_back(measure(step, X, x_star));
    if (options.snapshot_stride > 0 && step % options.snapshot_stride == 0) {
      trace.snapshots.emplace_back(step, X);
    }
  };

  auto [x0, z0] = initial_state(p, t, init_seed, options.init_range);
  std::optional<Disturbance> dist;
  if (noise && noise->variance > 0) dist.emplace(*noise);
  auto perturb_x = [&](Eigen::MatrixXd& X) {
    if (dist && dist->spec().perturb_x) dist->add(X);
  };
  auto perturb_consensus = [&](auto&& block) {
    if (dist && dist->spec().perturb_consensus) dist->add(block);
  };

  switch (algo) {
    case Algorithm::ATG:
    case Algorithm::RATG: {
      NetworkState s = NetworkState::init(x0, std::move(z0));
      record(0, s.x);
      for (int k = 0; k < horizon; ++k) {
        s = algo == Algorithm::ATG ? atg_step(s, p, t, h) : ratg_step(s, p, t, h, schedule->slice(k));
        perturb_x(s.x);
        perturb_consensus(s.z.values);
        record(k + 1, s.x);
      }
      break;
    }
    case Algorithm::GT: {
      const Eigen::MatrixXd W = metropolis_weights(t);
      GtState s = GtState::init(x0, p);
      record(0, s.x);
      for (int k = 0; k < horizon; ++k) {
        s = gt_step(s, p, W, h);
        perturb_x(s.x);
        perturb_consensus(s.ys);
        record(k + 1, s.x);
      }
      break;
    }
    case Algorithm::PS: {
      PsTrackingState s = PsTrackingState::init(x0, p, t);
      record(0, s.x);
      for (int k = 0; k < horizon; ++k) {
        s = ps_tracking_step(s, p, t, h, schedule->slice(k));
        perturb_x(s.x);
        // Weights stay exact: a perturbed denominator can cross zero.
        for (auto& a : s.consensus.agents) {
          perturb_consensus(a.mass);
          perturb_consensus(a.sent_mass);
          for (auto& r : a.recv_mass) perturb_consensus(r);
        }
        record(k + 1, s.x);
      }
      break;
    }
  }
  return trace;
}

}  // namespace atg
