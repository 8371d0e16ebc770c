#include "atg/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/KroneckerProduct>

namespace atg {

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

Eigen::MatrixXd block_diag_quadratic(const QuadraticProblem& p) {
  const int n = p.dim();
  const int N = p.n_agents();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(N * n, N * n);
  for (int i = 0; i < N; ++i) Q.block(i * n, i * n, n, n) = p.Q(i);
  return Q;
}

}  // namespace

Eigen::MatrixXd AggregateMatrices::consensus_operator() const {
  const auto size = P.rows();
  return Eigen::MatrixXd::Identity(size, size) + P - 2.0 * rho * P * A * Hc * A.transpose();
}

Eigen::MatrixXd AggregateMatrices::averaging() const {
  const int Nn = n_agents * dim;
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(Nn, Nn);
  for (int i = 0; i < n_agents; ++i)
    for (int j = 0; j < n_agents; ++j)
      avg.block(i * dim, j * dim, dim, dim) = Eigen::MatrixXd::Identity(dim, dim) / n_agents;
  return avg;
}

AggregateMatrices build_aggregate_matrices(const Topology& t, int dim, double rho) {
  if (!(rho > 0)) throw std::invalid_argument("build_aggregate_matrices: rho must be positive");
  AggregateMatrices m;
  m.n_agents = t.n_agents();
  m.dim = dim;
  m.total_degree = t.total_degree();
  m.rho = rho;
  const int n = dim;
  const int N = t.n_agents();
  const int slots = t.total_degree();
  const int zs = 2 * n * slots;
  const auto I_n = Eigen::MatrixXd::Identity(n, n);
  const auto I_2n = Eigen::MatrixXd::Identity(2 * n, 2 * n);

  m.P = Eigen::MatrixXd::Zero(zs, zs);
  m.A = Eigen::MatrixXd::Zero(zs, 2 * N * n);
  m.A_x = Eigen::MatrixXd::Zero(zs, N * n);
  m.A_grad = Eigen::MatrixXd::Zero(zs, N * n);
  for (int s = 0; s < slots; ++s) {
    const int owner = t.slot_owner(s);
    m.P.block(2 * n * s, 2 * n * t.reverse_slot(s), 2 * n, 2 * n) = I_2n;
    m.A.block(2 * n * s, 2 * n * owner, 2 * n, 2 * n) = I_2n;
    m.A_x.block(2 * n * s, n * owner, n, n) = I_n;
    m.A_grad.block(2 * n * s + n, n * owner, n, n) = I_n;
  }
  m.H = Eigen::MatrixXd::Zero(N * n, N * n);
  m.Hc = Eigen::MatrixXd::Zero(2 * N * n, 2 * N * n);
  for (int i = 0; i < N; ++i) {
    const double h = 1.0 / (1.0 + rho * t.degree(i));
    m.H.block(i * n, i * n, n, n) = h * I_n;
    m.Hc.block(2 * i * n, 2 * i * n, 2 * n, 2 * n) = h * I_2n;
  }
  return m;
}

Eigen::VectorXd stacked_signals(const Problem& p, const Eigen::VectorXd& x) {
  const int n = p.dim();
  Eigen::VectorXd v(2 * x.size());
  for (int i = 0; i < p.n_agents(); ++i) {
    v.segment(2 * n * i, n) = x.segment(n * i, n);
    v.segment(2 * n * i + n, n) = p.local_gradient(i, x.segment(n * i, n));
  }
  return v;
}

Eigen::VectorXd stacked_gradient(const Problem& p, const Eigen::VectorXd& x) {
  const int n = p.dim();
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < p.n_agents(); ++i) g.segment(n * i, n) = p.local_gradient(i, x.segment(n * i, n));
  return g;
}

KernelBasis kernel_basis(const AggregateMatrices& m, double svd_tol) {
  if (!(svd_tol > 0 && svd_tol <= 1e-3)) {
    throw std::invalid_argument("kernel_basis: svd_tol must lie in (0, 1e-3]");
  }
  const Eigen::MatrixXd K = m.consensus_operator();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(K, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double sigma_max = sv(0);
  const double cut = svd_tol * sigma_max;
  int rank = 0;
  while (rank < sv.size() && sv(rank) > cut) ++rank;
  const int b = static_cast<int>(sv.size()) - rank;
  const double lower = b > 0 ? sv(rank) : 0.0;
  const double upper = rank > 0 ? sv(rank - 1) : sigma_max;
  if (upper - lower < 10.0 * cut) {
    std::ostringstream msg;
    msg << "kernel_basis: ill-separated spectrum, kept singular value " << upper
        << " vs discarded " << lower << " (threshold " << cut << ")";
    throw SpectrumError(msg.str());
  }
  KernelBasis kb;
  kb.M = svd.matrixV().leftCols(rank);
  kb.B = svd.matrixV().rightCols(b);
  kb.b = b;
  kb.svd_tol = svd_tol;
  kb.singular_values = sv;
  return kb;
}

nlohmann::json CheckReport::to_json() const {
  nlohmann::json res = nlohmann::json::object();
  for (const auto& [k, v] : residuals) res[k] = v;
  return {{"check", check}, {"params", params}, {"residuals", res}, {"pass", pass}};
}

std::string CheckReport::worst_residual() const {
  auto it = std::max_element(residuals.begin(), residuals.end(),
                             [](const auto& a, const auto& b) { return a.second < b.second; });
  return it == residuals.end() ? std::string{} : it->first;
}

CheckReport check_lemma1(const KernelBasis& kb, const AggregateMatrices& m, double tol) {
  CheckReport r;
  r.check = "lemma1";
  r.params = {{"n_agents", m.n_agents},
              {"dim", m.dim},
              {"rho", m.rho},
              {"kernel_dim", kb.b},
              {"z_dim", m.P.rows()},
              {"B_shape", {kb.B.rows(), kb.B.cols()}},
              {"M_shape", {kb.M.rows(), kb.M.cols()}}};
  r.residuals["A_x^T B"] = max_abs(m.A_x.transpose() * kb.B);
  r.residuals["A_grad^T B"] = max_abs(m.A_grad.transpose() * kb.B);
  r.residuals["B^T P A"] = max_abs(kb.B.transpose() * m.P * m.A);
  r.residuals["B^T K"] = max_abs(kb.B.transpose() * m.consensus_operator());
  r.pass = std::all_of(r.residuals.begin(), r.residuals.end(),
                       [&](const auto& kv) { return kv.second <= tol; });
  return r;
}

Eigen::MatrixXd schur_matrix_F(const KernelBasis& kb, const AggregateMatrices& m) {
  return kb.M.transpose() * m.consensus_operator() * kb.M;
}

CheckReport check_schur_F(const KernelBasis& kb, const AggregateMatrices& m,
                          const std::vector<double>& alphas) {
  CheckReport r;
  r.check = "schur_F";
  r.params = {{"n_agents", m.n_agents}, {"dim", m.dim}, {"rho", m.rho}, {"alphas", alphas},
              {"kernel_dim", kb.b}};
  const Eigen::MatrixXd F = schur_matrix_F(kb, m);
  const Eigen::MatrixXd K = m.consensus_operator();
  r.pass = true;
  for (double alpha : alphas) {
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("check_schur_F: alpha must lie in (0, 1)");
    const Eigen::MatrixXd IF = Eigen::MatrixXd::Identity(F.rows(), F.cols()) - alpha * F;
    const double radius = IF.size() == 0 ? 0.0 : IF.eigenvalues().cwiseAbs().maxCoeff();

    // Second route: full I - alpha K, dropping the b eigenvalues nearest 1.
    const Eigen::MatrixXd IK = Eigen::MatrixXd::Identity(K.rows(), K.cols()) - alpha * K;
    const Eigen::VectorXcd ev = IK.eigenvalues();
    std::vector<std::pair<double, double>> by_distance;  // (|lambda - 1|, |lambda|)
    for (Eigen::Index k = 0; k < ev.size(); ++k) {
      by_distance.emplace_back(std::abs(ev(k) - 1.0), std::abs(ev(k)));
    }
    std::sort(by_distance.begin(), by_distance.end());
    double full_radius = 0.0;
    for (std::size_t k = kb.b; k < by_distance.size(); ++k) {
      full_radius = std::max(full_radius, by_distance[k].second);
    }

    std::ostringstream key;
    key << "alpha=" << alpha;
    r.residuals["spectral_radius[" + key.str() + "]"] = radius;
    r.residuals["two_path_gap[" + key.str() + "]"] = std::abs(radius - full_radius);
    if (!(radius < 1.0 - 1e-12)) r.pass = false;
  }
  return r;
}

EquilibriumReport equilibrium_residuals(const KernelBasis& kb, const AggregateMatrices& m,
                                        const Problem& p, const Eigen::VectorXd& x, double tol) {
  if (x.size() != m.n_agents * m.dim) {
    throw std::invalid_argument("equilibrium_residuals: x must have N n entries");
  }
  const Eigen::MatrixXd F = schur_matrix_F(kb, m);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(F);
  if (!lu.isInvertible()) {
    throw SpectrumError("equilibrium_residuals: F is singular; the Schur check on I - alpha F fails");
  }
  const Eigen::VectorXd v = stacked_signals(p, x);
  const Eigen::VectorXd G = stacked_gradient(p, x);
  EquilibriumReport out;
  out.z_perp_eq = 2.0 * m.rho * lu.solve(kb.M.transpose() * m.P * m.A * m.Hc * v);
  const Eigen::VectorXd Mz = kb.M * out.z_perp_eq;
  const Eigen::MatrixXd avg = m.averaging();

  auto& r = out.report;
  r.check = "equilibrium";
  r.params = {{"n_agents", m.n_agents}, {"dim", m.dim}, {"rho", m.rho}};
  r.residuals["x_tracking"] = (m.H * m.A_x.transpose() * Mz - (avg * x - m.H * x)).norm();
  r.residuals["grad_tracking"] = (m.H * m.A_grad.transpose() * Mz - (avg * G - m.H * G)).norm();
  r.pass = r.residuals["x_tracking"] <= tol && r.residuals["grad_tracking"] <= tol;
  return out;
}

AffineMap closed_loop_matrix(Algorithm algo, const QuadraticProblem& p, const Topology& t,
                             const HyperParams& h) {
  const int n = p.dim();
  const int N = p.n_agents();
  const int Nn = N * n;
  const Eigen::MatrixXd Q = block_diag_quadratic(p);
  Eigen::VectorXd r(Nn);
  for (int i = 0; i < N; ++i) r.segment(i * n, n) = p.r(i);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(Nn, Nn);

  AffineMap map;
  if (algo == Algorithm::ATG || algo == Algorithm::RATG) {
    const AggregateMatrices m = build_aggregate_matrices(t, n, h.rho);
    const int zs = static_cast<int>(m.P.rows());
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(2 * Nn, Nn);
    Eigen::VectorXd v0 = Eigen::VectorXd::Zero(2 * Nn);
    for (int i = 0; i < N; ++i) {
      V.block(2 * n * i, n * i, n, n) = Eigen::MatrixXd::Identity(n, n);
      V.block(2 * n * i + n, n * i, n, n) = p.Q(i);
      v0.segment(2 * n * i + n, n) = p.r(i);
    }
    const Eigen::MatrixXd PAH = m.P * m.A * m.Hc;
    map.matrix.resize(Nn + zs, Nn + zs);
    map.matrix.topLeftCorner(Nn, Nn) = I + h.gamma * (m.H - I) - h.gamma * h.delta * m.H * Q;
    map.matrix.topRightCorner(Nn, zs) =
        h.gamma * m.H * m.A_x.transpose() - h.gamma * h.delta * m.H * m.A_grad.transpose();
    map.matrix.bottomLeftCorner(zs, Nn) = 2.0 * h.alpha * h.rho * PAH * V;
    map.matrix.bottomRightCorner(zs, zs) =
        Eigen::MatrixXd::Identity(zs, zs) - h.alpha * m.consensus_operator();
    map.offset.resize(Nn + zs);
    map.offset.head(Nn) = -h.gamma * h.delta * m.H * r;
    map.offset.tail(zs) = 2.0 * h.alpha * h.rho * PAH * v0;
    return map;
  }
  if (algo == Algorithm::GT) {
    const Eigen::MatrixXd Wk = Eigen::kroneckerProduct(metropolis_weights(t), Eigen::MatrixXd::Identity(n, n));
    // dx = x+ - x = -gamma x + gamma y - gamma delta s
    Eigen::MatrixXd dx(Nn, 3 * Nn);
    dx << -h.gamma * I, h.gamma * I, -h.gamma * h.delta * I;
    map.matrix = Eigen::MatrixXd::Zero(3 * Nn, 3 * Nn);
    map.matrix.middleRows(0, Nn) = dx;
    map.matrix.block(0, 0, Nn, Nn) += I;
    map.matrix.middleRows(Nn, Nn) = dx;
    map.matrix.block(Nn, Nn, Nn, Nn) += Wk;
    map.matrix.middleRows(2 * Nn, Nn) = Q * dx;
    map.matrix.block(2 * Nn, 2 * Nn, Nn, Nn) += Wk;
    map.offset = Eigen::VectorXd::Zero(3 * Nn);
    return map;
  }
  throw std::invalid_argument("closed_loop_matrix: only ATG and GT have a synchronous linear form");
}

Eigen::VectorXd pack_state(const NetworkState& s) {
  Eigen::VectorXd v(s.x.size() + s.z.values.size());
  v << s.x.reshaped(), s.z.values.reshaped();
  return v;
}

NetworkState unpack_atg_state(const Eigen::VectorXd& v, int dim, int n_agents) {
  const auto Nn = static_cast<Eigen::Index>(dim) * n_agents;
  const auto slots = (v.size() - Nn) / (2 * dim);
  Eigen::MatrixXd x = v.head(Nn).reshaped(dim, n_agents);
  Eigen::MatrixXd z = v.tail(v.size() - Nn).reshaped(2 * dim, slots);
  return NetworkState::init(x, EdgeVariables(std::move(z)));
}

Eigen::VectorXd pack_state(const GtState& s) {
  const auto n = s.x.rows();
  Eigen::VectorXd v(3 * s.x.size());
  const Eigen::MatrixXd y = s.ys.topRows(n);
  const Eigen::MatrixXd sg = s.ys.bottomRows(n);
  v << s.x.reshaped(), y.reshaped(), sg.reshaped();
  return v;
}

double spectral_rate(const Eigen::MatrixXd& matrix, double unit_tol) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(matrix, false);
  if (es.info() != Eigen::Success) throw SpectrumError("spectral_rate: eigensolver failed");
  double rate = -1.0;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
    const double mod = std::abs(es.eigenvalues()(k));
    if (std::abs(mod - 1.0) <= unit_tol) continue;
    rate = std::max(rate, mod);
  }
  if (rate < 0) throw SpectrumError("spectral_rate: every eigenvalue has unit modulus");
  return rate;
}

double closed_loop_rate(Algorithm algo, const QuadraticProblem& p, const Topology& t,
                        const HyperParams& h) {
  return spectral_rate(closed_loop_matrix(algo, p, t, h).matrix);
}

std::vector<double> ParamGrid::range(double lo, double hi, double step) {
  if (!(step > 0)) throw std::invalid_argument("ParamGrid::range: step must be positive");
  std::vector<double> v;
  for (long k = 0;; ++k) {
    const double x = lo + k * step;
    if (x > hi + 0.5 * step * 1e-6) break;
    // Snap accumulated round-off so grid points print cleanly.
    v.push_back(std::round(x * 1e12) / 1e12);
  }
  return v;
}

std::size_t ParamGrid::size(Algorithm algo) const {
  if (algo == Algorithm::GT) return gamma.size() * delta.size();
  return gamma.size() * delta.size() * alpha.size() * rho.size();
}

TuneResult rate_line_search(Algorithm algo, const QuadraticProblem& p, const Topology& t,
                            const ParamGrid& grid, SearchMode mode, const HyperParams* start) {
  const bool gt = algo == Algorithm::GT;
  if (!gt && algo != Algorithm::ATG) {
    throw std::invalid_argument("rate_line_search: only ATG and GT can be tuned spectrally");
  }
  const std::vector<double> fixed_alpha{0.5};
  const std::vector<double> fixed_rho{1.0};
  const std::array<const std::vector<double>*, 4> axes{
      &grid.gamma, &grid.delta, gt ? &fixed_alpha : &grid.alpha, gt ? &fixed_rho : &grid.rho};
  for (const auto* axis : axes) {
    if (axis->empty()) throw std::invalid_argument("rate_line_search: empty grid axis");
  }

  TuneResult best;
  best.rate = std::numeric_limits<double>::infinity();
  using Index = std::array<std::size_t, 4>;
  std::map<Index, double> cache;
  auto params_at = [&](const Index& idx) {
    return HyperParams{(*axes[0])[idx[0]], (*axes[1])[idx[1]], (*axes[2])[idx[2]],
                       (*axes[3])[idx[3]]};
  };
  auto evaluate = [&](const Index& idx) {
    if (auto it = cache.find(idx); it != cache.end()) return it->second;
    const HyperParams h = params_at(idx);
    double rate = std::numeric_limits<double>::infinity();
    if (h.valid()) {
      try {
        rate = closed_loop_rate(algo, p, t, h);
        ++best.evaluations;
      } catch (const SpectrumError&) {
      }
    }
    cache.emplace(idx, rate);
    if (rate < best.rate) {
      best.rate = rate;
      best.params = h;
    }
    return rate;
  };

  if (mode == SearchMode::Exhaustive) {
    Index idx{};
    for (idx[0] = 0; idx[0] < axes[0]->size(); ++idx[0])
      for (idx[1] = 0; idx[1] < axes[1]->size(); ++idx[1])
        for (idx[2] = 0; idx[2] < axes[2]->size(); ++idx[2])
          for (idx[3] = 0; idx[3] < axes[3]->size(); ++idx[3]) evaluate(idx);
  } else {
    Index current{};
    for (int a = 0; a < 4; ++a) {
      const auto& axis = *axes[a];
      if (start != nullptr) {
        const double target = std::array{start->gamma, start->delta, start->alpha, start->rho}[a];
        current[a] = static_cast<std::size_t>(
            std::min_element(axis.begin(), axis.end(),
                             [&](double u, double v) { return std::abs(u - target) < std::abs(v - target); }) -
            axis.begin());
      } else {
        current[a] = axis.size() / 2;
      }
    }
    double current_rate = evaluate(current);
    for (bool improved = true; improved;) {
      improved = false;
      for (int a = 0; a < 4; ++a) {
        Index probe = current;
        for (std::size_t k = 0; k < axes[a]->size(); ++k) {
          probe[a] = k;
          const double r = evaluate(probe);
          if (r < current_rate) {
            current_rate = r;
            current = probe;
            improved = true;
          }
        }
      }
    }
  }
  if (!std::isfinite(best.rate)) {
    throw SpectrumError("rate_line_search: no grid point yields a valid contracting closed loop");
  }
  return best;
}

RateFit convergence_rate_fit(const Trace& tr, double tail_fraction, double floor) {
  if (!(tail_fraction > 0 && tail_fraction <= 1)) {
    throw std::invalid_argument("convergence_rate_fit: tail_fraction must lie in (0, 1]");
  }
  std::size_t end = 0;
  while (end < tr.records.size() && tr.records[end].err_max_agent > floor &&
         std::isfinite(tr.records[end].err_max_agent)) {
    ++end;
  }
  const auto begin = static_cast<std::size_t>(std::floor((1.0 - tail_fraction) * end));
  if (end < begin + 10) {
    throw std::invalid_argument("convergence_rate_fit: fewer than 10 points above the floor");
  }
  const auto count = static_cast<double>(end - begin);
  double st = 0, sy = 0;
  for (std::size_t k = begin; k < end; ++k) {
    st += tr.records[k].t;
    sy += std::log(tr.records[k].err_max_agent);
  }
  const double mt = st / count, my = sy / count;
  double stt = 0, sty = 0, syy = 0;
  for (std::size_t k = begin; k < end; ++k) {
    const double dt = tr.records[k].t - mt;
    const double dy = std::log(tr.records[k].err_max_agent) - my;
    stt += dt * dt;
    sty += dt * dy;
    syy += dy * dy;
  }
  const double slope = sty / stt;
  const double intercept = my - slope * mt;
  RateFit fit;
  fit.c1 = std::exp(intercept);
  fit.c2 = -slope;
  fit.r_squared = syy > 0 ? (sty * sty) / (stt * syy) : 1.0;
  fit.first = tr.records[begin].t;
  fit.last = tr.records[end - 1].t;
  return fit;
}

std::vector<int> protocol_memory(Protocol protocol, const Topology& t) {
  std::vector<int> slots(t.n_agents());
  for (int i = 0; i < t.n_agents(); ++i) {
    switch (protocol) {
      case Protocol::Average: slots[i] = 1; break;
      case Protocol::PushSum: slots[i] = 4 + 2 * t.degree(i); break;
      case Protocol::Admm: slots[i] = t.degree(i); break;
    }
  }
  return slots;
}

CheckReport check_protocol_memory(const Topology& t, int dim) {
  CheckReport r;
  r.check = "protocol_memory";
  r.params = {{"n_agents", t.n_agents()}, {"dim", dim}};
  const Eigen::MatrixXd signals = Eigen::MatrixXd::Ones(2 * dim, t.n_agents());

  // Live states: the consensus variable of average consensus is one column
  // of GtState::ys per agent; ADMM keeps one EdgeVariables column per slot.
  const PushSumState ps = PushSumState::init(t, signals);
  const EdgeVariables z(2 * dim, t.total_degree());
  const auto avg = protocol_memory(Protocol::Average, t);
  const auto push = protocol_memory(Protocol::PushSum, t);
  const auto admm = protocol_memory(Protocol::Admm, t);
  const Eigen::MatrixXd ys = signals;  // GtState::ys layout: 2n x N
  double mismatches = 0;
  for (int i = 0; i < t.n_agents(); ++i) {
    const int live_avg = static_cast<int>(ys.cols() / t.n_agents());
    int live_admm = 0;
    for (int s = 0; s < z.slots(); ++s) live_admm += t.slot_owner(s) == i;
    mismatches += (live_avg != avg[i]) + (ps.agents[i].protocol_slots() != push[i]) +
                  (live_admm != admm[i]);
  }
  r.residuals["mismatches"] = mismatches;
  r.pass = mismatches == 0;
  return r;
}

}  // namespace atg
