#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "atg/graph.hpp"

namespace atg {

// ---------------------------------------------------------------------------
// ADMM dynamic consensus
// ---------------------------------------------------------------------------

/// One 2n-vector z_ij per directed edge slot, stored as column
/// `topology.slot(i, j)` of a (2n x d_total) matrix. Column-major storage
/// makes `values.reshaped()` the stacked vector col(z_1, ..., z_N).
struct EdgeVariables {
  Eigen::MatrixXd values;

  EdgeVariables() = default;
  EdgeVariables(int rows, int slots) : values(Eigen::MatrixXd::Zero(rows, slots)) {}
  explicit EdgeVariables(Eigen::MatrixXd v) : values(std::move(v)) {}

  int rows() const { return static_cast<int>(values.rows()); }
  int slots() const { return static_cast<int>(values.cols()); }
  auto operator[](int slot) { return values.col(slot); }
  auto operator[](int slot) const { return values.col(slot); }

  /// Sum of z_ij over j in N_i.
  Eigen::VectorXd row_sum(const Topology& t, int i) const {
    return values.middleCols(t.slot_offset(i), t.degree(i)).rowwise().sum();
  }
};

/// [y_i; s_i] = (u_i + z_sum) / (1 + rho d_i), the closed-form minimizer of
/// the local augmented cost, where z_sum = sum_j z_ij.
template <typename DerivedU, typename DerivedZ>
Eigen::VectorXd admm_local_estimate(const Eigen::MatrixBase<DerivedU>& u,
                                    const Eigen::MatrixBase<DerivedZ>& z_sum, double rho,
                                    int degree) {
  return (u + z_sum) / (1.0 + rho * degree);
}

/// Overload taking the individual z_ij.
inline Eigen::VectorXd admm_local_estimate(const Eigen::VectorXd& u,
                                           std::span<const Eigen::VectorXd> z_row, double rho,
                                           int degree) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(u.size());
  for (const auto& z : z_row) sum += z;
  return admm_local_estimate(u, sum, rho, degree);
}

/// Message q_ij = -z_ij + 2 rho [y_i; s_i] sent from i to j.
template <typename DerivedZ, typename DerivedY>
auto admm_message(const Eigen::MatrixBase<DerivedZ>& z_ij, const Eigen::MatrixBase<DerivedY>& ys_i,
                  double rho) {
  return (2.0 * rho * ys_i - z_ij).eval();
}

/// Relaxed update z_ij <- (1 - alpha) z_ij + alpha q_ji.
template <typename DerivedZ, typename DerivedQ>
auto admm_z_update(const Eigen::MatrixBase<DerivedZ>& z_ij, const Eigen::MatrixBase<DerivedQ>& q_ji,
                   double alpha) {
  return ((1.0 - alpha) * z_ij + alpha * q_ji).eval();
}

/// Synchronous, lossless ADMM consensus round with frozen signals: computes
/// [y_i; s_i] for every agent (columns of `estimates`) and advances z.
/// `signals` is (2n x N).
void admm_consensus_round(const Topology& t, const Eigen::MatrixXd& signals, double rho,
                          double alpha, EdgeVariables& z, Eigen::MatrixXd& estimates);

// ---------------------------------------------------------------------------
// Generic relaxed ADMM for l_i(x) = 1/2 ||x - u_i||^2
// ---------------------------------------------------------------------------

struct RAdmmState {
  Eigen::MatrixXd x;  ///< n x N
  EdgeVariables z;    ///< n x d_total
};

/// x_i <- (u_i + sum_j z_ij) / (1 + rho d_i); then
/// z_ij <- (1 - alpha) z_ij - alpha z_ji + 2 alpha rho x_j (new x).
RAdmmState r_admm_generic_step(const RAdmmState& s, const Eigen::MatrixXd& targets,
                               const Topology& t, double rho, double alpha);

// ---------------------------------------------------------------------------
// Average consensus
// ---------------------------------------------------------------------------

/// out_i = sum_j w_ij values_j + increments_i; columns are agents.
template <typename DerivedV, typename DerivedI>
Eigen::MatrixXd average_consensus_step(const Eigen::MatrixBase<DerivedV>& values,
                                       const Eigen::MatrixBase<DerivedI>& increments,
                                       const Eigen::MatrixXd& W) {
  return values * W.transpose() + increments;
}

// ---------------------------------------------------------------------------
// Robust push-sum (ratio) consensus
// ---------------------------------------------------------------------------

/// Which agents act and which directed deliveries succeed in one round.
/// delivered[s] for slot s = (i, j) means i receives j's packet. A delivery
/// only takes effect when both endpoints are active.
struct ScheduleSlice {
  std::vector<std::uint8_t> active;     ///< size N
  std::vector<std::uint8_t> delivered;  ///< size d_total

  static ScheduleSlice all_ones(const Topology& t) {
    return {std::vector<std::uint8_t>(t.n_agents(), 1),
            std::vector<std::uint8_t>(t.total_degree(), 1)};
  }
  /// psi for slot s: owner active, sender active, packet delivered.
  bool received(const Topology& t, int s) const {
    return active[t.slot_owner(s)] && active[t.slot_peer(s)] && delivered[s];
  }
};

/**
 * Per-agent memory of the cumulative-counter ratio consensus:
 *   mass, weight            running numerator / denominator
 *   sent_mass, sent_weight  cumulative broadcast counters
 *   recv_mass, recv_weight  last counter value received from each neighbor
 * which is 4 + 2 d_i slots. last_signal is the copy of the tracked input
 * that every dynamic protocol keeps and is not counted as protocol memory.
 */
struct PushSumAgent {
  Eigen::VectorXd mass;
  double weight = 1.0;
  Eigen::VectorXd sent_mass;
  double sent_weight = 0.0;
  std::vector<Eigen::VectorXd> recv_mass;
  std::vector<double> recv_weight;
  Eigen::VectorXd last_signal;

  int protocol_slots() const {
    return 4 + static_cast<int>(recv_mass.size() + recv_weight.size());
  }
};

struct PushSumState {
  std::vector<PushSumAgent> agents;

  /// Initializes mass_i = signal_i, weight_i = 1, all counters zero.
  static PushSumState init(const Topology& t, const Eigen::MatrixXd& signals);

  /// Ratio outputs mass_i / weight_i as columns.
  Eigen::MatrixXd estimates() const;

  /// Sum of agent masses plus the mass still in flight on every directed
  /// edge (sender counter minus receiver record). Equals the sum of current
  /// signals at all times.
  Eigen::VectorXd total_mass(const Topology& t) const;
  double total_weight(const Topology& t) const;
};

/**
 * One robust push-sum round. Active agents first inject the change of their
 * signal since their last activation, then keep a 1/(d_i + 1) share of mass
 * and weight and add the same share to their broadcast counters. Finally,
 * every active agent that receives a packet from an active neighbor adds
 * the counter difference to its mass and weight and records the counter.
 */
PushSumState push_sum_step(const PushSumState& state, const Topology& t,
                           const Eigen::MatrixXd& signals, const ScheduleSlice& slice);

nlohmann::json to_json(const EdgeVariables& z);
nlohmann::json to_json(const PushSumState& s);

}  // namespace atg
