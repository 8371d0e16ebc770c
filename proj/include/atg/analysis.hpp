#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "atg/algorithms.hpp"
#include "atg/graph.hpp"
#include "atg/netsim.hpp"
#include "atg/problems.hpp"

namespace atg {

/**
 * Dense matrices of the aggregate (network-wide) form of ADMM tracking.
 *
 * With x = col(x_1..x_N) in R^{Nn}, z = col(z_1..z_N) in R^{2n d} (slots in
 * Topology order, each z_ij = [x-part; gradient-part]) and
 * v(x) = col(x_1, grad f_1(x_1), ..., x_N, grad f_N(x_N)):
 *
 *   x+ = x + gamma (H (x + A_x' z) - x) - gamma delta H (G(x) + A_grad' z)
 *   z+ = z - alpha K z + 2 alpha rho P A Hc v(x),   K = I + P - 2 rho P A Hc A'
 */
struct AggregateMatrices {
  int n_agents = 0;
  int dim = 0;
  int total_degree = 0;
  double rho = 0.0;
  Eigen::MatrixXd P;       ///< 2nd x 2nd, swaps slot (i,j) with (j,i)
  Eigen::MatrixXd A;       ///< 2nd x 2Nn, agent i's I_{2n} stacked d_i times
  Eigen::MatrixXd A_x;     ///< 2nd x Nn, x-rows of each slot
  Eigen::MatrixXd A_grad;  ///< 2nd x Nn, gradient-rows of each slot
  Eigen::MatrixXd H;       ///< Nn x Nn, blocks I_n / (1 + rho d_i)
  Eigen::MatrixXd Hc;      ///< 2Nn x 2Nn, blocks I_2n / (1 + rho d_i)

  /// K = I + P - 2 rho P A Hc A'.
  Eigen::MatrixXd consensus_operator() const;
  /// 1_N (x) I_n (x)-averaging operator (1 1' / N) (x) I_n.
  Eigen::MatrixXd averaging() const;
};

AggregateMatrices build_aggregate_matrices(const Topology& t, int dim, double rho);

/// v(x) for stacked x in R^{Nn}.
Eigen::VectorXd stacked_signals(const Problem& p, const Eigen::VectorXd& x);
/// G(x) for stacked x in R^{Nn}.
Eigen::VectorXd stacked_gradient(const Problem& p, const Eigen::VectorXd& x);

class SpectrumError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Orthonormal basis B of ker K and its orthonormal complement M.
struct KernelBasis {
  Eigen::MatrixXd B;
  Eigen::MatrixXd M;
  int b = 0;
  double svd_tol = 0.0;
  Eigen::VectorXd singular_values;
};

/// Singular values <= svd_tol * sigma_max count as zero. Throws
/// SpectrumError when the gap between kept and discarded singular values is
/// below 10 * svd_tol * sigma_max.
KernelBasis kernel_basis(const AggregateMatrices& m, double svd_tol = 1e-10);

/// Outcome of a numeric check; serializes to {check, params, residuals, pass}.
struct CheckReport {
  std::string check;
  nlohmann::json params = nlohmann::json::object();
  std::map<std::string, double> residuals;
  bool pass = false;

  nlohmann::json to_json() const;
  /// Name of the largest residual, for diagnostics.
  std::string worst_residual() const;
};

/// A_x'B, A_grad'B, B'PA and B'K must all vanish.
CheckReport check_lemma1(const KernelBasis& kb, const AggregateMatrices& m, double tol = 1e-9);

/// F = M'KM. Passes when rho(I - alpha F) < 1 - 1e-12 for every alpha. Also
/// reports the largest non-unit eigenvalue modulus of the full I - alpha K
/// as a second route to the same number.
CheckReport check_schur_F(const KernelBasis& kb, const AggregateMatrices& m,
                          const std::vector<double>& alphas);

Eigen::MatrixXd schur_matrix_F(const KernelBasis& kb, const AggregateMatrices& m);

struct EquilibriumReport {
  CheckReport report;
  Eigen::VectorXd z_perp_eq;  ///< 2 rho F^{-1} M'P A Hc v(x)
};

/// Equilibrium of the fast ADMM subsystem for frozen x and the residuals of
///   H A_x' M z_eq    = (11'/N) x    - H x
///   H A_grad' M z_eq = (11'/N) G(x) - H G(x)
/// Throws SpectrumError when F is singular.
EquilibriumReport equilibrium_residuals(const KernelBasis& kb, const AggregateMatrices& m,
                                        const Problem& p, const Eigen::VectorXd& x,
                                        double tol = 1e-8);

/// state+ = matrix * state + offset.
struct AffineMap {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd offset;

  Eigen::VectorXd apply(const Eigen::VectorXd& s) const { return matrix * s + offset; }
};

/// Exact affine closed loop on a quadratic problem. ATG state is
/// [vec(x); vec(z)] (size Nn + 2nd); GT state is [vec(x); vec(y); vec(s)]
/// (size 3Nn) and uses Metropolis weights.
AffineMap closed_loop_matrix(Algorithm algo, const QuadraticProblem& p, const Topology& t,
                             const HyperParams& h);

Eigen::VectorXd pack_state(const NetworkState& s);
NetworkState unpack_atg_state(const Eigen::VectorXd& v, int dim, int n_agents);
Eigen::VectorXd pack_state(const GtState& s);

/// Largest eigenvalue modulus after discarding eigenvalues whose modulus is
/// within `unit_tol` of 1. Throws SpectrumError if nothing remains.
double spectral_rate(const Eigen::MatrixXd& matrix, double unit_tol = 1e-9);

struct ParamGrid {
  std::vector<double> gamma;
  std::vector<double> delta;
  std::vector<double> alpha;
  std::vector<double> rho;

  /// lo, lo + step, ... up to hi inclusive (with a half-step guard).
  static std::vector<double> range(double lo, double hi, double step);
  std::size_t size(Algorithm algo) const;
};

enum class SearchMode {
  Exhaustive,  ///< every grid point
  Coordinate,  ///< cyclic exact line searches along each grid axis
};

struct TuneResult {
  HyperParams params;
  double rate = 1.0;
  long evaluations = 0;
};

/**
 * Minimizes the closed-loop spectral rate over the grid. GT only searches
 * gamma and delta. Grid points violating the HyperParams domain are skipped;
 * if none remains, or no valid point yields a rate, throws SpectrumError.
 * Coordinate mode starts from `start` (snapped to the grid) or the grid
 * midpoint and sweeps the axes until a full cycle brings no improvement.
 */
TuneResult rate_line_search(Algorithm algo, const QuadraticProblem& p, const Topology& t,
                            const ParamGrid& grid, SearchMode mode = SearchMode::Exhaustive,
                            const HyperParams* start = nullptr);

double closed_loop_rate(Algorithm algo, const QuadraticProblem& p, const Topology& t,
                        const HyperParams& h);

struct RateFit {
  double c1 = 0.0;
  double c2 = 0.0;
  double r_squared = 0.0;
  long first = 0;  ///< first fitted iteration
  long last = 0;   ///< last fitted iteration
};

/**
 * Least-squares fit of log(err_max_agent) = log c1 - c2 t over the final
 * `tail_fraction` of the iterations that precede the first error at or
 * below `floor` (round-off level). Throws std::invalid_argument when fewer
 * than 10 points remain.
 */
RateFit convergence_rate_fit(const Trace& tr, double tail_fraction, double floor = 1e-12);

enum class Protocol { Average, PushSum, Admm };

/// Per-agent vector slots of each dynamic consensus protocol: 1, 4 + 2 d_i
/// and d_i respectively.
std::vector<int> protocol_memory(Protocol protocol, const Topology& t);

/// Compares protocol_memory against slot counts of live protocol states.
CheckReport check_protocol_memory(const Topology& t, int dim = 1);

}  // namespace atg
