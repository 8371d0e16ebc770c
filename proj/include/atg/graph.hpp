#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace atg {

using Edge = std::pair<int, int>;

/// True iff a breadth-first traversal from agent 0 reaches every agent.
bool is_connected(int n_agents, std::span<const Edge> edges);

/**
 * Undirected, connected communication graph.
 *
 * Besides neighbor lists, the topology fixes the library-wide ordering of
 * directed edge slots: slot (i, j) for j in N_i is stored agent-major, with
 * neighbors sorted ascending. Slot k of agent i has global index
 * slot_offset(i) + k. Every per-edge quantity (ADMM variables, delivery
 * flags, aggregate matrices) uses this ordering.
 */
class Topology {
 public:
  /// Throws std::invalid_argument on self-loops, duplicates, out-of-range
  /// endpoints, or a disconnected graph.
  Topology(int n_agents, std::vector<Edge> edges);

  int n_agents() const { return n_agents_; }
  /// Undirected edges with first < second, sorted.
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& neighbors(int i) const { return neighbors_[i]; }
  int degree(int i) const { return static_cast<int>(neighbors_[i].size()); }
  /// Sum of degrees, i.e. number of directed edge slots.
  int total_degree() const { return static_cast<int>(slot_owner_.size()); }

  int slot_offset(int i) const { return offsets_[i]; }
  /// Global slot index of (i, j); throws std::out_of_range if j is not a
  /// neighbor of i.
  int slot(int i, int j) const;
  /// Slot of (j, i) given the slot of (i, j).
  int reverse_slot(int s) const { return reverse_[s]; }
  /// Agent i for slot (i, j).
  int slot_owner(int s) const { return slot_owner_[s]; }
  /// Agent j for slot (i, j).
  int slot_peer(int s) const { return slot_peer_[s]; }

  bool operator==(const Topology& other) const {
    return n_agents_ == other.n_agents_ && edges_ == other.edges_;
  }

 private:
  int n_agents_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<int> offsets_;
  std::vector<int> slot_owner_;
  std::vector<int> slot_peer_;
  std::vector<int> reverse_;
};

bool is_connected(const Topology& t);

/// Erdos-Renyi draw conditioned on connectivity: disconnected draws are
/// discarded and redrawn from the same seeded stream.
Topology erdos_renyi(int n_agents, double p, std::uint64_t seed,
                     int retry_cap = 10000);

Topology path_graph(int n_agents);
Topology ring_graph(int n_agents);
Topology complete_graph(int n_agents);
/// Agent 0 is the center.
Topology star_graph(int n_agents);

/// Metropolis-Hastings weights: w_ij = 1 / (1 + max(d_i, d_j)) on edges,
/// diagonal takes the remainder. Symmetric and doubly stochastic.
Eigen::MatrixXd metropolis_weights(const Topology& t);

/// {"n_agents": N, "edges": [[i, j], ...]}
nlohmann::json to_json(const Topology& t);
Topology topology_from_json(const nlohmann::json& j);

}  // namespace atg
