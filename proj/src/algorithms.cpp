#include "atg/algorithms.hpp"

#include <sstream>
#include <stdexcept>

namespace atg {

void HyperParams::validate() const {
  auto fail = [](const char* what, double v) {
    std::ostringstream msg;
    msg << "HyperParams: " << what << " (got " << v << ")";
    throw std::invalid_argument(msg.str());
  };
  if (!(gamma > 0 && gamma < 1)) fail("gamma must lie in (0, 1)", gamma);
  if (!(delta > 0)) fail("delta must be positive", delta);
  if (!(alpha > 0 && alpha < 1)) fail("alpha must lie in (0, 1)", alpha);
  if (!(rho > 0)) fail("rho must be positive", rho);
}

bool HyperParams::valid() const noexcept {
  return gamma > 0 && gamma < 1 && delta > 0 && alpha > 0 && alpha < 1 && rho > 0;
}

std::optional<std::string> HyperParams::step_bound_warning(const Problem& p) const {
  const double L = p.lipschitz();
  const double bound = 2.0 * p.strong_convexity() / (p.n_agents() * L * L);
  if (delta < bound) return std::nullopt;
  std::ostringstream msg;
  msg << "delta = " << delta << " is not below 2 mu / (N L^2) = " << bound
      << "; convergence is not covered by the small-step guarantee";
  return msg.str();
}

Eigen::MatrixXd tracking_signals(const Problem& p, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd u(2 * X.rows(), X.cols());
  u.topRows(X.rows()) = X;
  u.bottomRows(X.rows()) = p.stacked_gradients(X);
  return u;
}

namespace {

// Shared by atg_step and ratg_step so the synchronous case is bit-identical.
NetworkState admm_tracking_round(const NetworkState& s, const Problem& p, const Topology& t,
                                 const HyperParams& h, const ScheduleSlice* slice) {
  const int N = t.n_agents();
  const int n = p.dim();
  if (s.x.rows() != n || s.x.cols() != N || s.z.rows() != 2 * n ||
      s.z.slots() != t.total_degree()) {
    throw std::invalid_argument("ADMM tracking step: state dimensions do not match problem/topology");
  }
  auto active = [&](int i) { return slice == nullptr || slice->active[i]; };

  NetworkState next = s;
  Eigen::VectorXd u(2 * n);
  for (int i = 0; i < N; ++i) {
    if (!active(i)) continue;
    u.head(n) = s.x.col(i);
    u.tail(n) = p.local_gradient(i, s.x.col(i));
    next.ys.col(i) = admm_local_estimate(u, s.z.row_sum(t, i), h.rho, t.degree(i));
    const auto y = next.ys.col(i).head(n);
    const auto sg = next.ys.col(i).tail(n);
    next.x.col(i) = s.x.col(i) + h.gamma * (y - s.x.col(i)) - h.gamma * h.delta * sg;
  }

  // Messages are built from pre-update z; the update of slot (i, j) reads
  // q_ji, which j built on slot (j, i).
  for (int k = 0; k < t.total_degree(); ++k) {
    const int i = t.slot_owner(k);
    const int j = t.slot_peer(k);
    if (slice != nullptr && !slice->received(t, k)) continue;
    if (!active(i) || !active(j)) continue;
    const int back = t.reverse_slot(k);
    const Eigen::VectorXd q_ji = admm_message(s.z[back], next.ys.col(j), h.rho);
    next.z[k] = admm_z_update(s.z[k], q_ji, h.alpha);
  }
  next.t = s.t + 1;
  return next;
}

}  // namespace

NetworkState atg_step(const NetworkState& s, const Problem& p, const Topology& t,
                      const HyperParams& h) {
  return admm_tracking_round(s, p, t, h, nullptr);
}

NetworkState ratg_step(const NetworkState& s, const Problem& p, const Topology& t,
                       const HyperParams& h, const ScheduleSlice& slice) {
  if (static_cast<int>(slice.active.size()) != t.n_agents() ||
      static_cast<int>(slice.delivered.size()) != t.total_degree()) {
    throw std::invalid_argument("ratg_step: schedule slice does not match topology");
  }
  return admm_tracking_round(s, p, t, h, &slice);
}

GtState GtState::init(const Eigen::MatrixXd& x0, const Problem& p) {
  GtState s;
  s.x = x0;
  s.grad = p.stacked_gradients(x0);
  s.ys.resize(2 * x0.rows(), x0.cols());
  s.ys.topRows(x0.rows()) = x0;
  s.ys.bottomRows(x0.rows()) = s.grad;
  return s;
}

GtState gt_step(const GtState& s, const Problem& p, const Eigen::MatrixXd& W,
                const HyperParams& h) {
  const auto n = s.x.rows();
  GtState next;
  next.x = s.x + h.gamma * (s.ys.topRows(n) - s.x) - h.gamma * h.delta * s.ys.bottomRows(n);
  next.grad = p.stacked_gradients(next.x);
  Eigen::MatrixXd increments(2 * n, s.x.cols());
  increments.topRows(n) = next.x - s.x;
  increments.bottomRows(n) = next.grad - s.grad;
  next.ys = average_consensus_step(s.ys, increments, W);
  next.t = s.t + 1;
  return next;
}

PsTrackingState PsTrackingState::init(const Eigen::MatrixXd& x0, const Problem& p,
                                      const Topology& t) {
  PsTrackingState s;
  s.x = x0;
  s.consensus = PushSumState::init(t, tracking_signals(p, x0));
  return s;
}

PsTrackingState ps_tracking_step(const PsTrackingState& s, const Problem& p, const Topology& t,
                                 const HyperParams& h, const ScheduleSlice& slice) {
  const auto n = s.x.rows();
  PsTrackingState next = s;
  const Eigen::MatrixXd ys = s.consensus.estimates();
  for (int i = 0; i < t.n_agents(); ++i) {
    if (!slice.active[i]) continue;
    next.x.col(i) = s.x.col(i) + h.gamma * (ys.col(i).head(n) - s.x.col(i)) -
                    h.gamma * h.delta * ys.col(i).tail(n);
  }
  next.consensus = push_sum_step(s.consensus, t, tracking_signals(p, next.x), slice);
  next.t = s.t + 1;
  return next;
}

}  // namespace atg
