#include <doctest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "atg/analysis.hpp"
#include "oracles.hpp"

using namespace atg;

namespace {

Eigen::VectorXd random_vector(Eigen::Index size, std::uint64_t seed, double scale = 5.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::VectorXd v(size);
  for (auto& c : v) c = u(rng);
  return v;
}

struct SweepCase {
  Topology topology;
  int dim;
  double rho;
};

std::vector<SweepCase> sweep() {
  std::vector<SweepCase> out;
  const double rhos[] = {0.1, 0.3, 1.0};
  for (std::uint64_t k = 0; k < 20; ++k) {
    const int N = 2 + static_cast<int>(k % 7);
    out.push_back({erdos_renyi(N, 0.45, 100 + k), 1 + static_cast<int>(k % 2), rhos[k % 3]});
  }
  return out;
}

double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TEST_CASE("aggregate matrices on a single edge") {
  const double rho = 0.4;
  const auto m = build_aggregate_matrices(path_graph(2), 1, rho);
  Eigen::MatrixXd P(4, 4);
  P << 0, 0, 1, 0,
       0, 0, 0, 1,
       1, 0, 0, 0,
       0, 1, 0, 0;
  CHECK(m.P == P);
  CHECK(m.A == Eigen::MatrixXd::Identity(4, 4));
  Eigen::MatrixXd Ax(4, 2), Ag(4, 2);
  Ax << 1, 0, 0, 0, 0, 1, 0, 0;
  Ag << 0, 0, 1, 0, 0, 0, 0, 1;
  CHECK(m.A_x == Ax);
  CHECK(m.A_grad == Ag);
  CHECK(m.H.isApprox(Eigen::MatrixXd::Identity(2, 2) / (1 + rho)));
  CHECK(m.Hc.isApprox(Eigen::MatrixXd::Identity(4, 4) / (1 + rho)));
}

TEST_CASE("aggregate matrix shapes and the swap") {
  const auto tri = build_aggregate_matrices(complete_graph(3), 1, 0.3);
  CHECK(tri.A.rows() == 12);
  CHECK(tri.A.cols() == 6);
  for (int s = 0; s < 6; ++s) {
    const int owner = s / 2;
    CHECK(tri.A.block(2 * s, 2 * owner, 2, 2) == Eigen::MatrixXd::Identity(2, 2));
    CHECK(tri.A.block(2 * s, 0, 2, 6).cwiseAbs().sum() == 2);
  }
  for (const auto& c : sweep()) {
    const auto m = build_aggregate_matrices(c.topology, c.dim, c.rho);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m.P.rows(), m.P.cols());
    CHECK(m.P * m.P == I);
    CHECK(m.P == m.P.transpose());
  }
}

TEST_CASE("kernel basis") {
  for (const auto& c : sweep()) {
    const auto m = build_aggregate_matrices(c.topology, c.dim, c.rho);
    const auto kb = kernel_basis(m);
    const auto K = m.consensus_operator();
    const int cycles = static_cast<int>(c.topology.edges().size()) - c.topology.n_agents() + 1;
    CHECK(kb.b == 2 * c.dim * cycles);
    CHECK(kb.b + kb.M.cols() == K.rows());
    CHECK(max_abs(kb.B.transpose() * kb.B - Eigen::MatrixXd::Identity(kb.b, kb.b)) < 1e-10);
    CHECK(max_abs(kb.M.transpose() * kb.M - Eigen::MatrixXd::Identity(kb.M.cols(), kb.M.cols())) < 1e-10);
    CHECK(max_abs(kb.B.transpose() * kb.M) < 1e-10);
    CHECK(max_abs(K * kb.B) < 1e-10);
    CHECK(max_abs(m.A.transpose() * kb.B) < 1e-10);
  }
  CHECK_THROWS_AS(kernel_basis(build_aggregate_matrices(ring_graph(4), 1, 0.3), 0.5), std::invalid_argument);
  CHECK(kernel_basis(build_aggregate_matrices(path_graph(2), 1, 0.3)).b == 0);
}

TEST_CASE("kernel identities, Schur F and equilibrium residuals over the sweep") {
  std::uint64_t seed = 0;
  for (const auto& c : sweep()) {
    const auto m = build_aggregate_matrices(c.topology, c.dim, c.rho);
    const auto kb = kernel_basis(m);
    const auto l1 = check_lemma1(kb, m);
    CHECK(l1.pass);
    CHECK(l1.to_json()["params"]["kernel_dim"] == kb.b);
    const auto sf = check_schur_F(kb, m, {0.1, 0.5, 0.9});
    CHECK(sf.pass);
    const Problem p = random_quadratic(c.topology.n_agents(), c.dim, 1, 5, -10, 20, seed);
    const auto eq = equilibrium_residuals(kb, m, p, random_vector(c.topology.n_agents() * c.dim, seed));
    CHECK(eq.report.pass);
    for (const auto& [k, v] : eq.report.residuals) CHECK(v <= 1e-8);
    ++seed;
  }
}

TEST_CASE("Schur radius agrees with an independent eigensolve") {
  for (const auto& t : {path_graph(2), ring_graph(5), erdos_renyi(6, 0.4, 3)}) {
    const auto m = build_aggregate_matrices(t, 1, 0.3);
    const auto kb = kernel_basis(m);
    const auto rep = check_schur_F(kb, m, {0.5});
    const Eigen::MatrixXd K = m.consensus_operator();
    const Eigen::MatrixXd restricted =
        (Eigen::MatrixXd::Identity(K.rows(), K.cols()) - 0.5 * K) * kb.M * kb.M.transpose();
    const double radius = Eigen::EigenSolver<Eigen::MatrixXd>(restricted, false).eigenvalues().cwiseAbs().maxCoeff();
    CHECK(std::abs(rep.residuals.at("spectral_radius[alpha=0.5]") - radius) < 1e-10);
    CHECK(radius < 1);
  }
}

TEST_CASE("equilibrium at the optimum is the consensus fixed point") {
  const auto t = erdos_renyi(5, 0.5, 2);
  const double rho = 0.3, alpha = 0.6;
  const Problem p = random_quadratic(5, 2, 1, 5, -10, 20, 8);
  const Eigen::VectorXd x_star = centralized_solve(p);
  const Eigen::VectorXd x = x_star.replicate(5, 1);
  const auto m = build_aggregate_matrices(t, 2, rho);
  const auto kb = kernel_basis(m);
  const auto eq = equilibrium_residuals(kb, m, p, x);
  CHECK(eq.report.pass);

  Eigen::MatrixXd u(4, 5);
  for (int i = 0; i < 5; ++i) u.col(i) << x_star, p.local_gradient(i, x_star);
  const auto fp = oracle::admm_fixed_point(5, t.edges(), u, rho, alpha);
  Eigen::MatrixXd z(4, t.total_degree());
  for (const auto& [key, val] : fp.z) z.col(t.slot(key.first, key.second)) = val;
  const Eigen::VectorXd z_vec = z.reshaped();
  CHECK((kb.M.transpose() * z_vec - eq.z_perp_eq).norm() < 1e-8);
  CHECK((kb.B.transpose() * z_vec).norm() < 1e-8);
}

TEST_CASE("equilibrium identity by hand on two agents") {
  const double rho = 0.5, c = 1.7;
  const auto m = build_aggregate_matrices(path_graph(2), 1, rho);
  const Eigen::Vector2d x(c, c);
  const Eigen::Vector2d lhs = m.averaging() * x - m.H * x;
  CHECK(lhs.isApprox(Eigen::Vector2d::Constant(c - c / (1 + rho))));
}

TEST_CASE("closed-loop map matches the step functions") {
  const auto t = erdos_renyi(6, 0.4, 1);
  const QuadraticProblem q = random_quadratic(6, 2, 1, 5, -10, 20, 1);
  const Problem p = q;
  const HyperParams h{0.4, 0.3, 0.7, 0.6};
  auto [x0, z0] = initial_state(p, t, 3, 5.0);

  SUBCASE("ATG") {
    const auto map = closed_loop_matrix(Algorithm::ATG, q, t, h);
    auto s = NetworkState::init(x0, z0);
    Eigen::VectorXd v = pack_state(s);
    for (int k = 0; k < 20; ++k) {
      s = atg_step(s, p, t, h);
      v = map.apply(v);
      CHECK((v - pack_state(s)).cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff()));
    }
    const auto back = unpack_atg_state(v, 2, 6);
    CHECK(back.x.isApprox(s.x, 1e-12));
  }
  SUBCASE("GT") {
    const auto map = closed_loop_matrix(Algorithm::GT, q, t, h);
    const auto W = metropolis_weights(t);
    auto s = GtState::init(x0, p);
    Eigen::VectorXd v = pack_state(s);
    for (int k = 0; k < 20; ++k) {
      s = gt_step(s, p, W, h);
      v = map.apply(v);
      CHECK((v - pack_state(s)).cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff()));
    }
  }
  SUBCASE("the fixed point sits at the optimum") {
    const auto map = closed_loop_matrix(Algorithm::ATG, q, t, h);
    const Eigen::Index Nn = 12;
    // Pin the stationary z-directions at zero and solve for the rest.
    const auto m = build_aggregate_matrices(t, 2, h.rho);
    const auto kb = kernel_basis(m);
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(map.matrix.rows(), Nn + kb.M.cols());
    basis.topLeftCorner(Nn, Nn).setIdentity();
    basis.bottomRightCorner(kb.M.rows(), kb.M.cols()) = kb.M;
    const Eigen::MatrixXd lhs = (Eigen::MatrixXd::Identity(map.matrix.rows(), map.matrix.cols()) - map.matrix) * basis;
    const Eigen::VectorXd coords = lhs.colPivHouseholderQr().solve(map.offset);
    const Eigen::VectorXd fixed = basis * coords;
    CHECK((map.apply(fixed) - fixed).norm() < 1e-9);
    const Eigen::VectorXd x_star = centralized_solve(p);
    CHECK((fixed.head(Nn) - x_star.replicate(6, 1)).norm() < 1e-9);
  }
  SUBCASE("gamma = 0 freezes x") {
    HyperParams frozen = h;
    frozen.gamma = 0;
    const auto map = closed_loop_matrix(Algorithm::ATG, q, t, frozen);
    CHECK(map.matrix.topLeftCorner(12, 12) == Eigen::MatrixXd::Identity(12, 12));
    CHECK(max_abs(map.matrix.topRightCorner(12, map.matrix.cols() - 12)) == 0);
    CHECK(map.offset.head(12).norm() == 0);
  }
}

TEST_CASE("spectral_rate drops unit eigenvalues") {
  const Eigen::Vector4d d(1.0, -1.0, 0.5, -0.7);
  CHECK(spectral_rate(d.asDiagonal().toDenseMatrix()) == doctest::Approx(0.7));
  CHECK_THROWS_AS(spectral_rate(Eigen::MatrixXd::Identity(3, 3)), SpectrumError);
}

TEST_CASE("rate_line_search") {
  const auto t = erdos_renyi(6, 0.4, 1);
  const QuadraticProblem q = random_quadratic(6, 2, 1, 5, -10, 20, 1);

  SUBCASE("single point echoes") {
    const ParamGrid g{{0.5}, {0.2}, {0.6}, {0.7}};
    const auto r = rate_line_search(Algorithm::ATG, q, t, g);
    CHECK(r.params == HyperParams{0.5, 0.2, 0.6, 0.7});
    CHECK(r.rate == closed_loop_rate(Algorithm::ATG, q, t, r.params));
  }
  SUBCASE("exhaustive search attains the grid minimum") {
    const ParamGrid g{ParamGrid::range(0.2, 0.8, 0.2), ParamGrid::range(0.1, 0.4, 0.1), {0.5, 0.9}, {0.5, 1.0}};
    const auto r = rate_line_search(Algorithm::ATG, q, t, g);
    double best = 2;
    for (double a : g.gamma)
      for (double b : g.delta)
        for (double c : g.alpha)
          for (double d : g.rho) best = std::min(best, closed_loop_rate(Algorithm::ATG, q, t, {a, b, c, d}));
    CHECK(r.rate == best);
    CHECK(r.evaluations == 64);
    const auto coord = rate_line_search(Algorithm::ATG, q, t, g, SearchMode::Coordinate);
    CHECK(coord.rate >= best);
  }
  SUBCASE("GT searches gamma and delta only") {
    const ParamGrid g{ParamGrid::range(0.1, 0.9, 0.1), ParamGrid::range(0.1, 0.5, 0.1), {}, {}};
    const auto r = rate_line_search(Algorithm::GT, q, t, g);
    CHECK(r.evaluations == 45);
    CHECK(r.rate < 1);
  }
  SUBCASE("degenerate grid") {
    const ParamGrid g{{0.0}, {0.5}, {0.5}, {0.5}};
    CHECK_THROWS_AS(rate_line_search(Algorithm::ATG, q, t, g), SpectrumError);
  }
  SUBCASE("grid ranges") {
    const auto r = ParamGrid::range(0.005, 0.995, 0.005);
    CHECK(r.size() == 199);
    CHECK(r.back() == 0.995);
    CHECK(r[2] == 0.015);
  }
}

TEST_CASE("convergence_rate_fit") {
  auto synthetic = [](double c1, double c2, int T) {
    Trace tr;
    for (int t = 0; t <= T; ++t) tr.records.push_back({t, 0, c1 * std::exp(-c2 * t), 0});
    return tr;
  };
  const auto a = convergence_rate_fit(synthetic(1, 0.1, 200), 0.5);
  CHECK(a.c2 == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(a.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  const auto b = convergence_rate_fit(synthetic(5, 0.02, 400), 0.5);
  CHECK(b.c1 == doctest::Approx(5).epsilon(1e-9));
  CHECK(b.c2 == doctest::Approx(0.02).epsilon(1e-9));
  // stops at round-off level: 1e-12 is reached at t ~ 276
  const auto c = convergence_rate_fit(synthetic(1, 0.1, 1000), 0.5);
  CHECK(c.last < 280);
  CHECK(c.c2 == doctest::Approx(0.1).epsilon(1e-9));
  CHECK_THROWS_AS(convergence_rate_fit(synthetic(1, 0.1, 5), 0.5), std::invalid_argument);
}

TEST_CASE("protocol memory") {
  const auto ring = ring_graph(6);
  for (int v : protocol_memory(Protocol::PushSum, ring)) CHECK(v == 8);
  for (int v : protocol_memory(Protocol::Admm, ring)) CHECK(v == 2);
  for (int v : protocol_memory(Protocol::Average, ring)) CHECK(v == 1);
  CHECK(protocol_memory(Protocol::Admm, star_graph(4))[0] == 3);
  for (const auto& c : sweep()) CHECK(check_protocol_memory(c.topology, c.dim).pass);
}
