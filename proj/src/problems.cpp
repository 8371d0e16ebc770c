#include "atg/problems.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace atg {

namespace {

// log(1 + exp(t)) without overflow.
double softplus(double t) {
  return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void check_agent(int i, int n_agents) {
  if (i < 0 || i >= n_agents) {
    throw std::invalid_argument("agent index " + std::to_string(i) + " out of range");
  }
}

}  // namespace

QuadraticProblem::QuadraticProblem(std::vector<Eigen::MatrixXd> Q,
                                   std::vector<Eigen::VectorXd> r)
    : Q_(std::move(Q)), r_(std::move(r)) {
  if (Q_.empty() || Q_.size() != r_.size()) {
    throw std::invalid_argument("QuadraticProblem: need one (Q_i, r_i) pair per agent");
  }
  const auto n = Q_.front().rows();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < Q_.size(); ++i) {
    const auto& Qi = Q_[i];
    if (Qi.rows() != n || Qi.cols() != n || r_[i].size() != n) {
      throw std::invalid_argument("QuadraticProblem: inconsistent dimensions at agent " +
                                  std::to_string(i));
    }
    if ((Qi - Qi.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Qi.cwiseAbs().maxCoeff())) {
      throw std::invalid_argument("QuadraticProblem: Q_" + std::to_string(i) + " is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Qi, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 1e-12) {
      throw std::invalid_argument("QuadraticProblem: Q_" + std::to_string(i) +
                                  " is not positive definite");
    }
    lipschitz_ = std::max(lipschitz_, es.eigenvalues().maxCoeff());
    sum += Qi;
  }
  mu_ = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sum, Eigen::EigenvaluesOnly)
            .eigenvalues()
            .minCoeff();
}

LogisticProblem::LogisticProblem(std::vector<Eigen::MatrixXd> points,
                                 std::vector<Eigen::VectorXd> labels, double C)
    : points_(std::move(points)), labels_(std::move(labels)), C_(C) {
  if (points_.empty() || points_.size() != labels_.size()) {
    throw std::invalid_argument("LogisticProblem: need one point set per agent");
  }
  if (!(C_ > 0)) throw std::invalid_argument("LogisticProblem: C must be positive");
  dim_ = static_cast<int>(points_.front().cols()) + 1;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (points_[i].rows() < 1 || points_[i].cols() != dim_ - 1 ||
        labels_[i].size() != points_[i].rows()) {
      throw std::invalid_argument("LogisticProblem: bad point set at agent " + std::to_string(i));
    }
    for (double l : labels_[i]) {
      if (l != 1.0 && l != -1.0) throw std::invalid_argument("LogisticProblem: labels must be +-1");
    }
  }
}

double LogisticProblem::local_lipschitz(int i) const {
  const auto& P = points_[i];
  return 0.25 * (P.rowwise().squaredNorm().array() + 1.0).sum() + C_ / n_agents();
}

double LogisticProblem::lipschitz() const {
  double l = 0;
  for (int i = 0; i < n_agents(); ++i) l = std::max(l, local_lipschitz(i));
  return l;
}

int Problem::n_agents() const {
  return std::visit([](const auto& p) { return p.n_agents(); }, impl_);
}
int Problem::dim() const {
  return std::visit([](const auto& p) { return p.dim(); }, impl_);
}
double Problem::strong_convexity() const {
  return std::visit([](const auto& p) { return p.strong_convexity(); }, impl_);
}
double Problem::lipschitz() const {
  return std::visit([](const auto& p) { return p.lipschitz(); }, impl_);
}

Eigen::VectorXd Problem::local_gradient(int i, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_agent(i, n_agents());
  if (x.size() != dim()) throw std::invalid_argument("local_gradient: dimension mismatch");
  if (is_quadratic()) {
    const auto& q = quadratic();
    return q.Q(i) * x + q.r(i);
  }
  const auto& lg = logistic();
  const auto& P = lg.points(i);
  const auto& l = lg.labels(i);
  const auto n = dim();
  const auto w = x.head(n - 1);
  const double b = x(n - 1);
  Eigen::VectorXd g = (lg.regularization() / lg.n_agents()) * x;
  for (Eigen::Index k = 0; k < P.rows(); ++k) {
    const double margin = l(k) * (P.row(k).dot(w) + b);
    const double coeff = -l(k) * sigmoid(-margin);
    g.head(n - 1) += coeff * P.row(k).transpose();
    g(n - 1) += coeff;
  }
  return g;
}

Eigen::MatrixXd Problem::local_hessian(int i, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_agent(i, n_agents());
  if (x.size() != dim()) throw std::invalid_argument("local_hessian: dimension mismatch");
  if (is_quadratic()) return quadratic().Q(i);
  const auto& lg = logistic();
  const auto& P = lg.points(i);
  const auto n = dim();
  Eigen::MatrixXd h = (lg.regularization() / lg.n_agents()) * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd a(n);
  for (Eigen::Index k = 0; k < P.rows(); ++k) {
    a.head(n - 1) = P.row(k).transpose();
    a(n - 1) = 1.0;
    const double s = sigmoid(a.dot(x));
    h.noalias() += s * (1.0 - s) * a * a.transpose();
  }
  return h;
}

double Problem::local_cost(int i, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  check_agent(i, n_agents());
  if (is_quadratic()) {
    const auto& q = quadratic();
    return 0.5 * x.dot(q.Q(i) * x) + q.r(i).dot(x);
  }
  const auto& lg = logistic();
  const auto& P = lg.points(i);
  const auto& l = lg.labels(i);
  const auto n = dim();
  double f = 0.5 * lg.regularization() / lg.n_agents() * x.squaredNorm();
  for (Eigen::Index k = 0; k < P.rows(); ++k) {
    f += softplus(-l(k) * (P.row(k).dot(x.head(n - 1)) + x(n - 1)));
  }
  return f;
}

Eigen::VectorXd Problem::global_gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim());
  for (int i = 0; i < n_agents(); ++i) g += local_gradient(i, x);
  return g;
}

double Problem::global_cost(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double f = 0;
  for (int i = 0; i < n_agents(); ++i) f += local_cost(i, x);
  return f;
}

Eigen::MatrixXd Problem::stacked_gradients(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd G(dim(), n_agents());
  for (int i = 0; i < n_agents(); ++i) G.col(i) = local_gradient(i, X.col(i));
  return G;
}

QuadraticProblem random_quadratic(int n_agents, int dim, double eig_lo, double eig_hi,
                                  double r_lo, double r_hi, std::uint64_t seed) {
  if (!(eig_lo > 0 && eig_lo <= eig_hi)) {
    throw std::invalid_argument("random_quadratic: need 0 < eig_lo <= eig_hi");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> eig(eig_lo, eig_hi);
  std::uniform_real_distribution<double> lin(r_lo, r_hi);
  std::normal_distribution<double> gauss;
  std::vector<Eigen::MatrixXd> Q;
  std::vector<Eigen::VectorXd> r;
  for (int i = 0; i < n_agents; ++i) {
    Eigen::MatrixXd G(dim, dim);
    for (int c = 0; c < dim; ++c)
      for (int k = 0; k < dim; ++k) G(k, c) = gauss(rng);
    const Eigen::MatrixXd V = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ();
    Eigen::VectorXd lambda(dim);
    for (int k = 0; k < dim; ++k) lambda(k) = eig(rng);
    Eigen::MatrixXd Qi = V * lambda.asDiagonal() * V.transpose();
    Qi = 0.5 * (Qi + Qi.transpose()).eval();
    Q.push_back(std::move(Qi));
    Eigen::VectorXd ri(dim);
    for (int k = 0; k < dim; ++k) ri(k) = lin(rng);
    r.push_back(std::move(ri));
  }
  return QuadraticProblem(std::move(Q), std::move(r));
}

LogisticProblem random_logistic(int n_agents, int dim, int m_per_agent, double C,
                                std::uint64_t seed) {
  if (dim < 2) throw std::invalid_argument("random_logistic: dim must be >= 2");
  if (m_per_agent < 1) throw std::invalid_argument("random_logistic: m_per_agent must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<Eigen::MatrixXd> points;
  std::vector<Eigen::VectorXd> labels;
  for (int i = 0; i < n_agents; ++i) {
    Eigen::MatrixXd P(m_per_agent, dim - 1);
    Eigen::VectorXd l(m_per_agent);
    for (int k = 0; k < m_per_agent; ++k) {
      for (int c = 0; c < dim - 1; ++c) P(k, c) = coord(rng);
      l(k) = coin(rng) ? 1.0 : -1.0;
    }
    points.push_back(std::move(P));
    labels.push_back(std::move(l));
  }
  return LogisticProblem(std::move(points), std::move(labels), C);
}

Eigen::VectorXd centralized_solve(const Problem& p, double tol, int max_iterations) {
  const int n = p.dim();
  if (p.is_quadratic()) {
    const auto& q = p.quadratic();
    Eigen::MatrixXd Qsum = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rsum = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < q.n_agents(); ++i) {
      Qsum += q.Q(i);
      rsum += q.r(i);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(Qsum);
    Eigen::VectorXd x = llt.solve(-rsum);
    // One refinement step against the residual of the normal equations.
    x += llt.solve(-(Qsum * x + rsum));
    return x;
  }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g = p.global_gradient(x);
  for (int it = 0; it < max_iterations; ++it) {
    if (g.norm() <= tol) return x;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < p.n_agents(); ++i) h += p.local_hessian(i, x);
    const Eigen::VectorXd step = h.llt().solve(-g);
    // Backtracking on the cost; near the optimum full steps are accepted and
    // the last few iterations are driven by the gradient norm alone.
    double t = 1.0;
    const double f0 = p.global_cost(x);
    const double slope = g.dot(step);
    while (t > 1e-10 && p.global_cost(x + t * step) > f0 + 1e-4 * t * slope &&
           g.norm() > 1e-6) {
      t *= 0.5;
    }
    const Eigen::VectorXd candidate = x + t * step;
    const Eigen::VectorXd g_new = p.global_gradient(candidate);
    if (g_new.norm() >= g.norm() && g.norm() <= 1e-6) break;  // stalled at round-off
    x = candidate;
    g = g_new;
  }
  if (g.norm() <= tol) return x;
  std::ostringstream msg;
  msg << "centralized_solve: gradient norm " << g.norm() << " above tolerance " << tol;
  throw SolverError(msg.str(), g.norm());
}

nlohmann::json to_json(const Problem& p) {
  auto matrix_rows = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(row);
    }
    return rows;
  };
  auto vec = [](const Eigen::VectorXd& v) {
    return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
  };
  nlohmann::json agents = nlohmann::json::array();
  if (p.is_quadratic()) {
    const auto& q = p.quadratic();
    for (int i = 0; i < q.n_agents(); ++i) {
      agents.push_back({{"Q", matrix_rows(q.Q(i))}, {"r", vec(q.r(i))}});
    }
    return {{"kind", "quadratic"}, {"dim", q.dim()}, {"agents", agents}};
  }
  const auto& l = p.logistic();
  for (int i = 0; i < l.n_agents(); ++i) {
    agents.push_back({{"points", matrix_rows(l.points(i))}, {"labels", vec(l.labels(i))}});
  }
  return {{"kind", "logistic"}, {"dim", l.dim()}, {"C", l.regularization()}, {"agents", agents}};
}

Problem problem_from_json(const nlohmann::json& j) {
  auto matrix = [](const nlohmann::json& rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != static_cast<std::size_t>(cols)) {
        throw std::invalid_argument("problem json: ragged matrix");
      }
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rows[r][c].get<double>();
    }
    return m;
  };
  auto vec = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()));
  };
  const auto kind = j.at("kind").get<std::string>();
  const int n = j.at("dim").get<int>();
  if (kind == "quadratic") {
    std::vector<Eigen::MatrixXd> Q;
    std::vector<Eigen::VectorXd> r;
    for (const auto& a : j.at("agents")) {
      Q.push_back(matrix(a.at("Q"), n));
      r.push_back(vec(a.at("r")));
    }
    return QuadraticProblem(std::move(Q), std::move(r));
  }
  if (kind == "logistic") {
    std::vector<Eigen::MatrixXd> pts;
    std::vector<Eigen::VectorXd> labels;
    for (const auto& a : j.at("agents")) {
      pts.push_back(matrix(a.at("points"), n - 1));
      labels.push_back(vec(a.at("labels")));
    }
    return LogisticProblem(std::move(pts), std::move(labels), j.at("C").get<double>());
  }
  throw std::invalid_argument("problem json: unknown kind '" + kind + "'");
}

}  // namespace atg
