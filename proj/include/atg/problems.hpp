#pragma once

#include <cstdint>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace atg {

/// Sum of f_i(x) = 1/2 x'Q_i x + r_i'x with every Q_i symmetric positive
/// definite.
class QuadraticProblem {
 public:
  /// Throws std::invalid_argument if shapes disagree, a Q_i is not
  /// symmetric, or has an eigenvalue <= 1e-12.
  QuadraticProblem(std::vector<Eigen::MatrixXd> Q, std::vector<Eigen::VectorXd> r);

  int n_agents() const { return static_cast<int>(Q_.size()); }
  int dim() const { return static_cast<int>(Q_.front().rows()); }
  const Eigen::MatrixXd& Q(int i) const { return Q_[i]; }
  const Eigen::VectorXd& r(int i) const { return r_[i]; }

  /// lambda_min(sum_i Q_i).
  double strong_convexity() const { return mu_; }
  /// max_i lambda_max(Q_i).
  double lipschitz() const { return lipschitz_; }

 private:
  std::vector<Eigen::MatrixXd> Q_;
  std::vector<Eigen::VectorXd> r_;
  double mu_ = 0.0;
  double lipschitz_ = 0.0;
};

/**
 * Regularized logistic regression with decision variable (w, b) in R^n.
 * Agent i holds points (rows of points(i), dimension n - 1) and labels in
 * {-1, +1}. The global regularizer C/2 ||(w, b)||^2 is split evenly, so
 * each local cost carries C/(2N) ||(w, b)||^2.
 */
class LogisticProblem {
 public:
  LogisticProblem(std::vector<Eigen::MatrixXd> points,
                  std::vector<Eigen::VectorXd> labels, double C);

  int n_agents() const { return static_cast<int>(points_.size()); }
  int dim() const { return dim_; }
  double regularization() const { return C_; }
  const Eigen::MatrixXd& points(int i) const { return points_[i]; }
  const Eigen::VectorXd& labels(int i) const { return labels_[i]; }

  /// The regularizer alone makes the sum C-strongly convex.
  double strong_convexity() const { return C_; }
  /// Per-agent bound sum_k 1/4 ||(p_k, 1)||^2 + C/N.
  double local_lipschitz(int i) const;
  double lipschitz() const;

 private:
  std::vector<Eigen::MatrixXd> points_;
  std::vector<Eigen::VectorXd> labels_;
  double C_;
  int dim_;
};

class Problem {
 public:
  Problem(QuadraticProblem q) : impl_(std::move(q)) {}
  Problem(LogisticProblem l) : impl_(std::move(l)) {}

  int n_agents() const;
  int dim() const;
  double strong_convexity() const;
  double lipschitz() const;

  bool is_quadratic() const { return std::holds_alternative<QuadraticProblem>(impl_); }
  const QuadraticProblem& quadratic() const { return std::get<QuadraticProblem>(impl_); }
  const LogisticProblem& logistic() const { return std::get<LogisticProblem>(impl_); }

  /// Exact gradient of f_i at x. Throws std::invalid_argument on a dimension
  /// or agent index mismatch.
  Eigen::VectorXd local_gradient(int i, const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::MatrixXd local_hessian(int i, const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double local_cost(int i, const Eigen::Ref<const Eigen::VectorXd>& x) const;

  Eigen::VectorXd global_gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double global_cost(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Column i holds grad f_i(X.col(i)); X is dim x N.
  Eigen::MatrixXd stacked_gradients(const Eigen::MatrixXd& X) const;

 private:
  std::variant<QuadraticProblem, LogisticProblem> impl_;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Q_i = V_i diag(lambda) V_i' with lambda ~ U[eig_lo, eig_hi] and V_i a
/// random orthogonal matrix; r_i ~ U[r_lo, r_hi]^n.
QuadraticProblem random_quadratic(int n_agents, int dim, double eig_lo, double eig_hi,
                                  double r_lo, double r_hi, std::uint64_t seed);

/// Points uniform in [-5, 5]^(n-1), labels uniform in {-1, +1}.
LogisticProblem random_logistic(int n_agents, int dim, int m_per_agent, double C,
                                std::uint64_t seed);

/// Minimizer of sum_i f_i. Quadratics are solved by Cholesky; logistic
/// problems by damped Newton until ||grad|| <= tol. Throws SolverError when
/// the iteration cap is hit.
Eigen::VectorXd centralized_solve(const Problem& p, double tol = 1e-12,
                                  int max_iterations = 200);

nlohmann::json to_json(const Problem& p);
Problem problem_from_json(const nlohmann::json& j);

}  // namespace atg
