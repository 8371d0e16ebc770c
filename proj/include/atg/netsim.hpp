#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "atg/algorithms.hpp"
#include "atg/consensus.hpp"
#include "atg/graph.hpp"
#include "atg/problems.hpp"

namespace atg {

using BitMatrix = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/**
 * Deterministic activation and delivery sequences over a horizon.
 *
 * active(i, t) is lambda_i(t). delivered(s, t) for slot s = (i, j) is
 * beta_ij(t), i.e. whether i would receive j's packet at t. The update flag
 * psi_ij(t) = lambda_i(t) beta_ij(t) is derived.
 */
class Schedule {
 public:
  Schedule(BitMatrix active, BitMatrix delivered);

  static Schedule all_ones(const Topology& t, int horizon);

  int horizon() const { return static_cast<int>(active_.cols()); }
  int n_agents() const { return static_cast<int>(active_.rows()); }
  int n_slots() const { return static_cast<int>(delivered_.rows()); }
  const BitMatrix& active() const { return active_; }
  const BitMatrix& delivered() const { return delivered_; }

  /// psi(s, t); requires the topology for slot ownership.
  BitMatrix psi(const Topology& t) const;

  /// Slice for round t (wraps modulo the horizon).
  ScheduleSlice slice(int t) const;

  /// Smallest window for which the schedule is essentially cyclic, or
  /// nullopt when some sequence never fires.
  std::optional<int> measured_window(const Topology& t) const;

 private:
  BitMatrix active_;
  BitMatrix delivered_;
};

/// True iff every lambda_i and every psi_ij fires at least once in every
/// length-`window` run of consecutive rounds inside the horizon. A window at
/// least as long as the horizon degenerates to "fires at least once".
bool verify_essentially_cyclic(const Schedule& s, const Topology& t, int window);

/**
 * Independent Bernoulli draws: lambda_i(t) ~ B(act_probs[i]); the raw
 * packet success for slot (i, j) ~ B(delivery_probs[s]) and a packet exists
 * only when the sender is active, so beta_ij(t) = lambda_j(t) * success.
 * Schedules in which some sequence never fires, or whose measured window
 * exceeds `max_window` (0 = horizon), are redrawn up to `redraw_cap` times.
 * With `symmetric`, both directions of a link share the success draw of the
 * lower slot.
 */
struct BernoulliScheduleResult {
  Schedule schedule;
  int window;  ///< measured T_max
  int redraws;
};

BernoulliScheduleResult bernoulli_schedule(const Topology& t, std::span<const double> act_probs,
                                           std::span<const double> delivery_probs, int horizon,
                                           std::uint64_t seed, int max_window = 0,
                                           int redraw_cap = 100, bool symmetric = false);

/// Per-agent and per-slot success probabilities drawn U[lo, hi).
struct ScheduleProbabilities {
  std::vector<double> act;
  std::vector<double> delivery;
};
ScheduleProbabilities random_probabilities(const Topology& t, double lo, double hi,
                                           std::uint64_t seed);

/// Zero-mean Gaussian disturbance with the given variance, added to each
/// component of each selected algorithm state after every round.
struct NoiseSpec {
  double variance = 0.0;
  bool perturb_x = true;
  bool perturb_consensus = true;
  std::uint64_t seed = 0;
};

enum class Algorithm { ATG, RATG, GT, PS };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& name);
bool needs_schedule(Algorithm a);

struct TraceRecord {
  long t;
  double err_opt;        ///< ||x - 1 (x) x*||
  double err_max_agent;  ///< max_i ||x_i - x*||
  double err_consensus;  ///< ||x - 1 (x) mean(x)||
};

struct Trace {
  std::vector<TraceRecord> records;
  /// (t, n x N estimates) every `snapshot_stride` rounds, when enabled.
  std::vector<std::pair<long, Eigen::MatrixXd>> snapshots;
  Eigen::VectorXd x_star;

  /// CSV with header t,err_opt,err_max_agent,err_consensus; 17 significant
  /// digits, LF line endings.
  void write_csv(std::ostream& out) const;
  std::string to_csv() const;
};

TraceRecord measure(long t, const Eigen::MatrixXd& X, const Eigen::VectorXd& x_star);

struct SimulationOptions {
  double init_range = 5.0;  ///< x0, z0 ~ U[-init_range, init_range]
  int snapshot_stride = 0;  ///< 0 disables snapshots
  double solve_tol = 1e-12;
};

/// Initial estimates x0 (n x N) and ADMM variables z0 (2n x d_total) drawn
/// from init_seed in that order.
std::pair<Eigen::MatrixXd, EdgeVariables> initial_state(const Problem& p, const Topology& t,
                                                        std::uint64_t init_seed, double range);

/**
 * Runs `horizon` rounds of the chosen algorithm and records the error of
 * every iterate t = 0..horizon. RATG and PS need a schedule; ATG and GT
 * reject one. With noise, disturbances are added after every round
 * regardless of activity.
 */
Trace run_simulation(Algorithm algo, const Problem& p, const Topology& t, const HyperParams& h,
                     const Schedule* schedule, const std::optional<NoiseSpec>& noise, int horizon,
                     std::uint64_t init_seed, const SimulationOptions& options = {});

/// Same, with x* supplied by the caller.
Trace run_simulation(Algorithm algo, const Problem& p, const Topology& t, const HyperParams& h,
                     const Schedule* schedule, const std::optional<NoiseSpec>& noise, int horizon,
                     std::uint64_t init_seed, const Eigen::VectorXd& x_star,
                     const SimulationOptions& options = {});

}  // namespace atg
