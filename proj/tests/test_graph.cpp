#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "atg/graph.hpp"
#include "oracles.hpp"

using namespace atg;

namespace {

void check_invariants(const Topology& t) {
  int degree_sum = 0;
  for (int i = 0; i < t.n_agents(); ++i) {
    degree_sum += t.degree(i);
    for (int j : t.neighbors(i)) {
      CHECK(j != i);
      const auto& back = t.neighbors(j);
      CHECK(std::find(back.begin(), back.end(), i) != back.end());
    }
  }
  CHECK(degree_sum == t.total_degree());
  CHECK(t.total_degree() == 2 * static_cast<int>(t.edges().size()));
  CHECK(oracle::bfs_connected(t.n_agents(), t.edges()));
}

}  // namespace

TEST_CASE("erdos_renyi with p = 1 gives the complete graph") {
  const auto two = erdos_renyi(2, 1.0, 5);
  CHECK(two.edges().size() == 1);
  CHECK(two.degree(0) == 1);
  CHECK(two.degree(1) == 1);
  CHECK(two.total_degree() == 2);

  const auto tri = erdos_renyi(3, 1.0, 123);
  for (int i = 0; i < 3; ++i) CHECK(tri.degree(i) == 2);
}

TEST_CASE("erdos_renyi draws are connected and consistent") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto t = erdos_renyi(10, 0.1, seed);
    check_invariants(t);
  }
  const auto t7 = erdos_renyi(10, 0.1, 7);
  check_invariants(t7);
  CHECK(t7 == erdos_renyi(10, 0.1, 7));
}

TEST_CASE("erdos_renyi gives up after the retry cap") {
  CHECK_THROWS_AS(erdos_renyi(30, 0.001, 1, 5), std::runtime_error);
  CHECK_THROWS_AS(erdos_renyi(1, 0.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(erdos_renyi(4, 0.0, 1), std::invalid_argument);
}

TEST_CASE("is_connected") {
  const std::vector<Edge> path{{0, 1}, {1, 2}};
  const std::vector<Edge> split{{0, 1}, {2, 3}};
  const std::vector<Edge> tri{{0, 1}, {1, 2}, {0, 2}};
  CHECK(is_connected(3, path));
  CHECK_FALSE(is_connected(4, split));
  CHECK(is_connected(3, tri));
}

TEST_CASE("Topology rejects malformed edge lists") {
  CHECK_THROWS_AS(Topology(3, {{0, 0}, {0, 1}, {1, 2}}), std::invalid_argument);
  CHECK_THROWS_AS(Topology(3, {{0, 1}, {1, 0}, {1, 2}}), std::invalid_argument);
  CHECK_THROWS_AS(Topology(3, {{0, 1}, {1, 3}}), std::invalid_argument);
  CHECK_THROWS_AS(Topology(4, {{0, 1}, {2, 3}}), std::invalid_argument);
}

TEST_CASE("edge slots are agent-major with sorted neighbors") {
  const Topology t(4, {{2, 0}, {0, 1}, {1, 3}, {3, 2}});
  int expected = 0;
  for (int i = 0; i < 4; ++i) {
    CHECK(t.slot_offset(i) == expected);
    for (std::size_t k = 0; k < t.neighbors(i).size(); ++k) {
      const int j = t.neighbors(i)[k];
      if (k > 0) CHECK(t.neighbors(i)[k - 1] < j);
      const int s = t.slot(i, j);
      CHECK(s == expected++);
      CHECK(t.slot_owner(s) == i);
      CHECK(t.slot_peer(s) == j);
      CHECK(t.reverse_slot(s) == t.slot(j, i));
    }
  }
  CHECK_THROWS_AS(t.slot(0, 3), std::out_of_range);
}

TEST_CASE("named topologies") {
  check_invariants(path_graph(5));
  check_invariants(ring_graph(5));
  check_invariants(complete_graph(5));
  check_invariants(star_graph(5));
  CHECK(ring_graph(6).edges().size() == 6);
  CHECK(star_graph(4).degree(0) == 3);
  CHECK(complete_graph(5).edges().size() == 10);
}

TEST_CASE("metropolis weights") {
  SUBCASE("single edge") {
    const auto W = metropolis_weights(path_graph(2));
    CHECK(W.isApprox(Eigen::MatrixXd::Constant(2, 2, 0.5)));
  }
  SUBCASE("star") {
    const auto W = metropolis_weights(star_graph(4));
    CHECK(W(0, 1) == doctest::Approx(0.25));
    CHECK(W(0, 0) == doctest::Approx(0.25));
    CHECK(W(1, 1) == doctest::Approx(0.75));
  }
  SUBCASE("triangle") {
    const auto W = metropolis_weights(complete_graph(3));
    CHECK((W.array() - 1.0 / 3).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("doubly stochastic with a spectral gap on random graphs") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto t = erdos_renyi(8, 0.3, seed);
      const auto W = metropolis_weights(t);
      CHECK((W - W.transpose()).cwiseAbs().maxCoeff() < 1e-15);
      CHECK((W.rowwise().sum().array() - 1).abs().maxCoeff() < 1e-10);
      CHECK((W.colwise().sum().array() - 1).abs().maxCoeff() < 1e-10);
      CHECK(W.minCoeff() >= 0);
      for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
          if (i != j && W(i, j) > 0) CHECK_NOTHROW(t.slot(i, j));
        }
      }
      Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(W).eigenvalues().cwiseAbs();
      std::sort(ev.data(), ev.data() + ev.size());
      CHECK(ev(7) == doctest::Approx(1.0).epsilon(1e-10));
      CHECK(ev(6) < 1 - 1e-10);
    }
  }
}

TEST_CASE("topology JSON round trip") {
  const auto t = erdos_renyi(8, 0.3, 4);
  const auto j = to_json(t);
  CHECK(j["n_agents"] == 8);
  CHECK(topology_from_json(j) == t);
  CHECK(topology_from_json(nlohmann::json::parse(R"({"n_agents": 3, "edges": [[0, 1], [2, 1]]})")) ==
        path_graph(3));
}
