#include "atg/graph.hpp"

#include <algorithm>
#include <queue>
#include <random>
#include <sstream>
#include <stdexcept>

namespace atg {

bool is_connected(int n_agents, std::span<const Edge> edges) {
  if (n_agents <= 0) return false;
  std::vector<std::vector<int>> adj(n_agents);
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n_agents || j >= n_agents) {
      throw std::invalid_argument("is_connected: edge endpoint out of range");
    }
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  std::vector<char> seen(n_agents, 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == n_agents;
}

bool is_connected(const Topology& t) {
  return is_connected(t.n_agents(), t.edges());
}

Topology::Topology(int n_agents, std::vector<Edge> edges)
    : n_agents_(n_agents) {
  if (n_agents < 1) throw std::invalid_argument("Topology: n_agents must be >= 1");
  for (auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n_agents || j >= n_agents) {
      std::ostringstream msg;
      msg << "Topology: edge (" << i << "," << j << ") out of range for "
          << n_agents << " agents";
      throw std::invalid_argument(msg.str());
    }
    if (i == j) {
      throw std::invalid_argument("Topology: self-loop at agent " + std::to_string(i));
    }
    if (i > j) std::swap(i, j);
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw std::invalid_argument("Topology: duplicate edge");
  }
  if (!is_connected(n_agents, edges)) {
    throw std::invalid_argument("Topology: graph is not connected");
  }
  edges_ = std::move(edges);

  neighbors_.assign(n_agents, {});
  for (const auto& [i, j] : edges_) {
    neighbors_[i].push_back(j);
    neighbors_[j].push_back(i);
  }
  offsets_.assign(n_agents + 1, 0);
  for (int i = 0; i < n_agents; ++i) {
    std::sort(neighbors_[i].begin(), neighbors_[i].end());
    offsets_[i + 1] = offsets_[i] + degree(i);
  }
  slot_owner_.resize(offsets_[n_agents]);
  slot_peer_.resize(offsets_[n_agents]);
  for (int i = 0; i < n_agents; ++i) {
    for (int k = 0; k < degree(i); ++k) {
      slot_owner_[offsets_[i] + k] = i;
      slot_peer_[offsets_[i] + k] = neighbors_[i][k];
    }
  }
  reverse_.resize(slot_owner_.size());
  for (int s = 0; s < total_degree(); ++s) {
    reverse_[s] = slot(slot_peer_[s], slot_owner_[s]);
  }
}

int Topology::slot(int i, int j) const {
  const auto& nb = neighbors_.at(i);
  auto it = std::lower_bound(nb.begin(), nb.end(), j);
  if (it == nb.end() || *it != j) {
    throw std::out_of_range("Topology::slot: " + std::to_string(j) +
                            " is not a neighbor of " + std::to_string(i));
  }
  return offsets_[i] + static_cast<int>(it - nb.begin());
}

Topology erdos_renyi(int n_agents, double p, std::uint64_t seed, int retry_cap) {
  if (n_agents < 2) throw std::invalid_argument("erdos_renyi: n_agents must be >= 2");
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("erdos_renyi: p must be in (0, 1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(p);
  for (int attempt = 0; attempt < retry_cap; ++attempt) {
    std::vector<Edge> edges;
    for (int i = 0; i < n_agents; ++i) {
      for (int j = i + 1; j < n_agents; ++j) {
        if (coin(rng)) edges.emplace_back(i, j);
      }
    }
    if (is_connected(n_agents, edges)) return Topology(n_agents, std::move(edges));
  }
  std::ostringstream msg;
  msg << "erdos_renyi: no connected draw within " << retry_cap
      << " attempts (n_agents=" << n_agents << ", p=" << p << ")";
  throw std::runtime_error(msg.str());
}

Topology path_graph(int n_agents) {
  std::vector<Edge> edges;
  for (int i = 0; i + 1 < n_agents; ++i) edges.emplace_back(i, i + 1);
  return Topology(n_agents, std::move(edges));
}

Topology ring_graph(int n_agents) {
  if (n_agents < 3) return path_graph(n_agents);
  std::vector<Edge> edges;
  for (int i = 0; i < n_agents; ++i) edges.emplace_back(i, (i + 1) % n_agents);
  return Topology(n_agents, std::move(edges));
}

Topology complete_graph(int n_agents) {
  std::vector<Edge> edges;
  for (int i = 0; i < n_agents; ++i)
    for (int j = i + 1; j < n_agents; ++j) edges.emplace_back(i, j);
  return Topology(n_agents, std::move(edges));
}

Topology star_graph(int n_agents) {
  std::vector<Edge> edges;
  for (int i = 1; i < n_agents; ++i) edges.emplace_back(0, i);
  return Topology(n_agents, std::move(edges));
}

Eigen::MatrixXd metropolis_weights(const Topology& t) {
  const int n = t.n_agents();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [i, j] : t.edges()) {
    const double wij = 1.0 / (1.0 + std::max(t.degree(i), t.degree(j)));
    w(i, j) = wij;
    w(j, i) = wij;
  }
  for (int i = 0; i < n; ++i) w(i, i) = 1.0 - w.row(i).sum();
  return w;
}

nlohmann::json to_json(const Topology& t) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [i, j] : t.edges()) edges.push_back({i, j});
  return {{"n_agents", t.n_agents()}, {"edges", edges}};
}

Topology topology_from_json(const nlohmann::json& j) {
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) {
      throw std::invalid_argument("topology json: each edge must be a pair [i, j]");
    }
    edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  return Topology(j.at("n_agents").get<int>(), std::move(edges));
}

}  // namespace atg
