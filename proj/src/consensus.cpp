#include "atg/consensus.hpp"

namespace atg {

void admm_consensus_round(const Topology& t, const Eigen::MatrixXd& signals, double rho,
                          double alpha, EdgeVariables& z, Eigen::MatrixXd& estimates) {
  const int N = t.n_agents();
  estimates.resize(signals.rows(), N);
  for (int i = 0; i < N; ++i) {
    estimates.col(i) = admm_local_estimate(signals.col(i), z.row_sum(t, i), rho, t.degree(i));
  }
  Eigen::MatrixXd messages(z.rows(), z.slots());
  for (int s = 0; s < z.slots(); ++s) {
    messages.col(s) = admm_message(z[s], estimates.col(t.slot_owner(s)), rho);
  }
  for (int s = 0; s < z.slots(); ++s) {
    z[s] = admm_z_update(z[s], messages.col(t.reverse_slot(s)), alpha);
  }
}

RAdmmState r_admm_generic_step(const RAdmmState& s, const Eigen::MatrixXd& targets,
                               const Topology& t, double rho, double alpha) {
  RAdmmState out = s;
  for (int i = 0; i < t.n_agents(); ++i) {
    out.x.col(i) = admm_local_estimate(targets.col(i), s.z.row_sum(t, i), rho, t.degree(i));
  }
  for (int k = 0; k < s.z.slots(); ++k) {
    const int j = t.slot_peer(k);
    out.z[k] = (1.0 - alpha) * s.z[k] - alpha * s.z[t.reverse_slot(k)] +
               2.0 * alpha * rho * out.x.col(j);
  }
  return out;
}

PushSumState PushSumState::init(const Topology& t, const Eigen::MatrixXd& signals) {
  PushSumState s;
  const auto dim = signals.rows();
  s.agents.resize(t.n_agents());
  for (int i = 0; i < t.n_agents(); ++i) {
    auto& a = s.agents[i];
    a.mass = signals.col(i);
    a.weight = 1.0;
    a.sent_mass = Eigen::VectorXd::Zero(dim);
    a.sent_weight = 0.0;
    a.recv_mass.assign(t.degree(i), Eigen::VectorXd::Zero(dim));
    a.recv_weight.assign(t.degree(i), 0.0);
    a.last_signal = signals.col(i);
  }
  return s;
}

Eigen::MatrixXd PushSumState::estimates() const {
  Eigen::MatrixXd out(agents.front().mass.size(), static_cast<Eigen::Index>(agents.size()));
  for (std::size_t i = 0; i < agents.size(); ++i) out.col(i) = agents[i].mass / agents[i].weight;
  return out;
}

Eigen::VectorXd PushSumState::total_mass(const Topology& t) const {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(agents.front().mass.size());
  for (int i = 0; i < t.n_agents(); ++i) {
    total += agents[i].mass;
    for (int k = 0; k < t.degree(i); ++k) {
      const int j = t.neighbors(i)[k];
      total += agents[j].sent_mass - agents[i].recv_mass[k];
    }
  }
  return total;
}

double PushSumState::total_weight(const Topology& t) const {
  double total = 0;
  for (int i = 0; i < t.n_agents(); ++i) {
    total += agents[i].weight;
    for (int k = 0; k < t.degree(i); ++k) {
      total += agents[t.neighbors(i)[k]].sent_weight - agents[i].recv_weight[k];
    }
  }
  return total;
}

PushSumState push_sum_step(const PushSumState& state, const Topology& t,
                           const Eigen::MatrixXd& signals, const ScheduleSlice& slice) {
  PushSumState next = state;
  const int N = t.n_agents();
  for (int i = 0; i < N; ++i) {
    if (!slice.active[i]) continue;
    auto& a = next.agents[i];
    a.mass += signals.col(i) - a.last_signal;
    a.last_signal = signals.col(i);
    if (t.degree(i) == 0) continue;
    const double share = 1.0 / (t.degree(i) + 1);
    a.mass *= share;
    a.weight *= share;
    a.sent_mass += a.mass;
    a.sent_weight += a.weight;
  }
  for (int i = 0; i < N; ++i) {
    if (!slice.active[i]) continue;
    auto& a = next.agents[i];
    for (int k = 0; k < t.degree(i); ++k) {
      const int s = t.slot_offset(i) + k;
      if (!slice.received(t, s)) continue;
      const auto& sender = next.agents[t.slot_peer(s)];
      a.mass += sender.sent_mass - a.recv_mass[k];
      a.weight += sender.sent_weight - a.recv_weight[k];
      a.recv_mass[k] = sender.sent_mass;
      a.recv_weight[k] = sender.sent_weight;
    }
  }
  return next;
}

nlohmann::json to_json(const EdgeVariables& z) {
  nlohmann::json cols = nlohmann::json::array();
  for (int s = 0; s < z.slots(); ++s) {
    const Eigen::VectorXd c = z[s];
    cols.push_back(std::vector<double>(c.data(), c.data() + c.size()));
  }
  return {{"rows", z.rows()}, {"slots", cols}};
}

nlohmann::json to_json(const PushSumState& s) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : s.agents) {
    nlohmann::json recv = nlohmann::json::array();
    for (const auto& r : a.recv_mass) recv.push_back(vec(r));
    agents.push_back({{"mass", vec(a.mass)},
                      {"weight", a.weight},
                      {"sent_mass", vec(a.sent_mass)},
                      {"sent_weight", a.sent_weight},
                      {"recv_mass", recv},
                      {"recv_weight", a.recv_weight},
                      {"last_signal", vec(a.last_signal)}});
  }
  return {{"agents", agents}};
}

}  // namespace atg
