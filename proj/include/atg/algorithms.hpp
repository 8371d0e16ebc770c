#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "atg/consensus.hpp"
#include "atg/graph.hpp"
#include "atg/problems.hpp"

namespace atg {

/**
 * Tuning parameters shared by the tracking algorithms.
 *   gamma  timescale of the solution-estimate update, in (0, 1)
 *   delta  weight of the tracked gradient, > 0
 *   alpha  ADMM relaxation, in (0, 1)
 *   rho    ADMM penalty, > 0
 * GT and push-sum only use gamma and delta.
 */
struct HyperParams {
  double gamma = 0.1;
  double delta = 1.0;
  double alpha = 0.9;
  double rho = 0.9;

  /// Throws std::invalid_argument naming the offending parameter.
  void validate() const;
  bool valid() const noexcept;

  /// Non-empty when delta >= 2 mu / (N L^2), the step bound under which
  /// linear convergence is guaranteed for small gamma. Advisory only.
  std::optional<std::string> step_bound_warning(const Problem& p) const;

  bool operator==(const HyperParams&) const = default;
};

/// Whole-network snapshot of the ADMM tracking algorithms.
struct NetworkState {
  Eigen::MatrixXd x;  ///< n x N solution estimates
  EdgeVariables z;    ///< 2n x d_total ADMM edge variables
  /// 2n x N scratch [y_i; s_i] from each agent's most recent active round.
  Eigen::MatrixXd ys;
  long t = 0;

  static NetworkState init(const Eigen::MatrixXd& x0, EdgeVariables z0) {
    NetworkState s;
    s.x = x0;
    s.z = std::move(z0);
    s.ys = Eigen::MatrixXd::Zero(s.z.rows(), x0.cols());
    return s;
  }
};

/// One synchronous round of ADMM-Tracking Gradient.
NetworkState atg_step(const NetworkState& s, const Problem& p, const Topology& t,
                      const HyperParams& h);

/// One round of the robust variant: only active agents update and transmit,
/// and z_ij moves only when i is active and received j's packet.
NetworkState ratg_step(const NetworkState& s, const Problem& p, const Topology& t,
                       const HyperParams& h, const ScheduleSlice& slice);

/// Gradient tracking with dynamic average consensus. ys stacks [y_i; s_i]
/// per column; grad caches grad f_i(x_i).
struct GtState {
  Eigen::MatrixXd x;     ///< n x N
  Eigen::MatrixXd ys;    ///< 2n x N
  Eigen::MatrixXd grad;  ///< n x N
  long t = 0;

  /// y_i = x_i, s_i = grad f_i(x_i).
  static GtState init(const Eigen::MatrixXd& x0, const Problem& p);
};

GtState gt_step(const GtState& s, const Problem& p, const Eigen::MatrixXd& W,
                const HyperParams& h);

/// Solution estimates driven by robust push-sum tracking of
/// [x_j; grad f_j(x_j)].
struct PsTrackingState {
  Eigen::MatrixXd x;  ///< n x N
  PushSumState consensus;
  long t = 0;

  static PsTrackingState init(const Eigen::MatrixXd& x0, const Problem& p, const Topology& t);
};

PsTrackingState ps_tracking_step(const PsTrackingState& s, const Problem& p, const Topology& t,
                                 const HyperParams& h, const ScheduleSlice& slice);

/// Stacks [X; grad] column-wise, i.e. the signals tracked by consensus.
Eigen::MatrixXd tracking_signals(const Problem& p, const Eigen::MatrixXd& X);

}  // namespace atg
