#ifndef DVEM_VI_SOLVER_HPP
#define DVEM_VI_SOLVER_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "dvem/dg_forms.hpp"

namespace dvem {

/// LU factorization of a sparse (possibly nonsymmetric) matrix, reused across
/// right-hand sides. Every solve is checked against the residual contract
/// ||B x - rhs||_inf <= 1e-10 (1 + ||rhs||_inf).
class DirectSolver {
public:
  explicit DirectSolver(const SparseMatrix& B) : B_(B) {
    if (B.rows() != B.cols()) throw SolverError("direct solve: matrix is not square");
    B_.makeCompressed();
    lu_.analyzePattern(B_);
    lu_.factorize(B_);
    if (lu_.info() != Eigen::Success) throw SolverError("direct solve: numerically singular factorization");
  }

  [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd x = lu_.solve(rhs);
    const double bound = 1e-10 * (1.0 + (rhs.size() ? rhs.cwiseAbs().maxCoeff() : 0.0));
    Eigen::VectorXd r = rhs - B_ * x;
    // One step of iterative refinement before giving up.
    for (int step = 0; step < 2 && r.size() && r.cwiseAbs().maxCoeff() > bound; ++step) {
      x += lu_.solve(r);
      r = rhs - B_ * x;
    }
    if (!x.allFinite() || (r.size() && r.cwiseAbs().maxCoeff() > bound))
      throw SolverError("direct solve: residual " + std::to_string(r.cwiseAbs().maxCoeff()) +
                        " above tolerance (matrix numerically singular?)");
    return x;
  }

  [[nodiscard]] const SparseMatrix& matrix() const { return B_; }

private:
  SparseMatrix B_;
  mutable Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
};

inline Eigen::VectorXd sparse_direct_solve(const SparseMatrix& B, const Eigen::VectorXd& rhs) {
  if (B.rows() != rhs.size()) throw SolverError("direct solve: size mismatch");
  return DirectSolver(B).solve(rhs);
}

struct SolverConfig {
  std::optional<double> rho; ///< Uzawa step; estimated from the system when unset
  double tol = 1e-10;        ///< stop when max |lambda^{n+1} - lambda^n| <= tol
  int max_iter = 20000;
  std::optional<Eigen::VectorXd> lambda0;
  std::ostream* trace = nullptr; ///< CSV "iteration,residual,energy,rho" when set
};

struct VISolution {
  Eigen::VectorXd u;
  Eigen::VectorXd lambda; ///< one value per friction quadrature point
  int iterations = 0;
  std::vector<double> residuals;
  std::vector<double> energies;
  double rho = 0.0;
  int rho_halvings = 0;
};

/// Trace operator T (points x dofs): (T v)_q = v at friction point q.
inline SparseMatrix trace_matrix(const FrictionData& fric, Index ndofs) {
  std::vector<Eigen::Triplet<double>> t;
  for (Index q = 0; q < fric.num_points(); ++q) {
    const FrictionPoint& p = fric.points[static_cast<std::size_t>(q)];
    t.emplace_back(q, p.dof0, p.w0);
    t.emplace_back(q, p.dof1, p.w1);
  }
  SparseMatrix T(fric.num_points(), ndofs);
  T.setFromTriplets(t.begin(), t.end());
  return T;
}

/// 1/2 B_h(v,v) - <f_h, v> + j_Q(v): the functional minimized when delta = 1.
inline double vi_energy(const GlobalSystem& sys, const Eigen::VectorXd& v) {
  return 0.5 * v.dot(sys.B * v) - sys.F.dot(v) + friction_j_quadrature(sys.friction, sys.g, v);
}

/// max_q |lambda_q t_q - |t_q|| / (1 + |t_q|) over the friction points.
inline double complementarity_residual(const GlobalSystem& sys, const VISolution& sol) {
  double worst = 0.0;
  for (Index q = 0; q < sys.friction.num_points(); ++q) {
    const double t = sys.friction.points[static_cast<std::size_t>(q)].trace(sol.u);
    worst = std::max(worst, std::abs(sol.lambda(q) * t - std::abs(t)) / (1.0 + std::abs(t)));
  }
  return worst;
}

namespace detail {

/// Spectral radius estimate of lambda -> g^2 T B^{-1} T^T W lambda, the
/// linear part of the multiplier update.
inline double uzawa_lipschitz(const GlobalSystem& sys, const DirectSolver& solver, const SparseMatrix& T) {
  const Index nq = sys.friction.num_points();
  if (nq == 0) return 1.0;
  Eigen::VectorXd w(nq);
  for (Index q = 0; q < nq; ++q) w(q) = sys.friction.points[static_cast<std::size_t>(q)].weight;
  Eigen::VectorXd x(nq);
  for (Index q = 0; q < nq; ++q) x(q) = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(q) + 0.3);
  double est = 0.0;
  for (int it = 0; it < 40; ++it) {
    x /= x.norm();
    const Eigen::VectorXd rhs = T.transpose() * w.cwiseProduct(x);
    const Eigen::VectorXd y = sys.g * sys.g * (T * solver.solve(rhs));
    const double next = y.norm();
    x = y;
    if (std::abs(next - est) <= 1e-6 * next) {
      est = next;
      break;
    }
    est = next;
  }
  if (!(est > 0.0) || !std::isfinite(est)) throw SolverError("uzawa: could not estimate step size");
  return est;
}

} // namespace detail

/// Uzawa iteration for the discrete inequality:
///   B u^n = F - g T^T W lambda^n,  lambda^{n+1} = clamp(lambda^n + rho g T u^n, -1, 1).
/// The returned u is recomputed from the final multiplier.
inline VISolution solve_uzawa(const GlobalSystem& sys, const SolverConfig& cfg = {}) {
  if (!(cfg.tol > 0.0)) throw ConfigError("solver tolerance must be positive");
  if (cfg.rho && !(*cfg.rho > 0.0)) throw ConfigError("uzawa step rho must be positive");
  if (cfg.max_iter < 1) throw ConfigError("max_iter must be >= 1");
  if (!(sys.g > 0.0)) throw ConfigError("friction bound g must be positive");

  const Index nq = sys.friction.num_points();
  const DirectSolver solver(sys.B);
  const SparseMatrix T = trace_matrix(sys.friction, sys.size());

  VISolution sol;
  sol.lambda = cfg.lambda0 ? *cfg.lambda0 : Eigen::VectorXd::Zero(nq);
  if (sol.lambda.size() != nq) throw ConfigError("initial multiplier has wrong size");
  sol.lambda = sol.lambda.cwiseMax(-1.0).cwiseMin(1.0);

  if (nq == 0) {
    sol.u = solver.solve(sys.F);
    sol.energies.push_back(vi_energy(sys, sol.u));
    return sol;
  }

  sol.rho = cfg.rho ? *cfg.rho : 1.0 / detail::uzawa_lipschitz(sys, solver, T);
  if (cfg.trace) *cfg.trace << "iteration,residual,energy,rho\n";

  auto primal = [&](const Eigen::VectorXd& lambda) {
    return solver.solve(sys.F - friction_load(sys.friction, sys.g, lambda, sys.size()));
  };

  const int burn_in = 3;
  bool converged = false;
  for (int n = 0; n < cfg.max_iter; ++n) {
    sol.u = primal(sol.lambda);
    const double energy = vi_energy(sys, sol.u);
    const Eigen::VectorXd next = (sol.lambda + sol.rho * sys.g * (T * sol.u)).cwiseMax(-1.0).cwiseMin(1.0);
    const double residual = (next - sol.lambda).cwiseAbs().maxCoeff();
    sol.iterations = n + 1;
    if (cfg.trace) *cfg.trace << sol.iterations << ',' << residual << ',' << energy << ',' << sol.rho << '\n';

    bool unstable = !std::isfinite(residual) || !std::isfinite(energy);
    if (n >= burn_in && !sol.residuals.empty()) {
      const double prev_e = sol.energies.back();
      const double prev_r = sol.residuals.back();
      if (sys.delta == 1 && energy > prev_e + 1e-10 * (1.0 + std::abs(prev_e)) && residual > cfg.tol) unstable = true;
      if (residual > 2.0 * prev_r && residual > cfg.tol) unstable = true;
    }
    sol.residuals.push_back(residual);
    sol.energies.push_back(energy);
    if (unstable) {
      if (sol.rho_halvings >= 60) throw SolverError("uzawa: step size collapsed without convergence");
      sol.rho *= 0.5;
      ++sol.rho_halvings;
    }
    sol.lambda = next;
    if (residual <= cfg.tol) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw SolverError("uzawa: max_iter " + std::to_string(cfg.max_iter) + " exceeded, last residual " +
                      std::to_string(sol.residuals.back()));
  sol.u = primal(sol.lambda);
  return sol;
}

namespace detail {

/// Realizable sign patterns of a linear function sampled at increasing points:
/// constant signs, the zero function, and every root position (between two
/// points or on a point) in both orientations: 4q + 1 patterns for q >= 2.
inline std::vector<std::vector<int>> linear_sign_patterns(int q) {
  std::vector<std::vector<int>> out;
  out.push_back(std::vector<int>(static_cast<std::size_t>(q), 1));
  out.push_back(std::vector<int>(static_cast<std::size_t>(q), -1));
  out.push_back(std::vector<int>(static_cast<std::size_t>(q), 0));
  for (int dir : {1, -1}) {
    for (int k = 1; k < q; ++k) { // root strictly between points k-1 and k
      std::vector<int> s(static_cast<std::size_t>(q));
      for (int i = 0; i < q; ++i) s[static_cast<std::size_t>(i)] = i < k ? -dir : dir;
      out.push_back(s);
    }
    for (int k = q == 1 ? 1 : 0; k < q; ++k) { // root on point k (q = 1: the zero pattern)
      std::vector<int> s(static_cast<std::size_t>(q));
      for (int i = 0; i < q; ++i) s[static_cast<std::size_t>(i)] = i < k ? -dir : (i == k ? 0 : dir);
      out.push_back(s);
    }
  }
  return out;
}

/// Multiplier for a known minimizer u: the sign of the trace where it is
/// nonzero; on the zero set, values in [-1, 1] balancing the remaining force
/// B u - F + g T^T W lambda = 0 (box-constrained least squares by cyclic
/// coordinate descent, which converges for this convex quadratic).
inline Eigen::VectorXd oracle_multiplier(const GlobalSystem& sys, const Eigen::MatrixXd& T, const Eigen::VectorXd& u,
                                         double tol) {
  const auto& fr = sys.friction;
  const Eigen::VectorXd t = T * u;
  const double scale = 1.0 + (u.size() ? u.cwiseAbs().maxCoeff() : 0.0);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(fr.num_points());
  Eigen::VectorXd force = sys.F - sys.B * u;
  std::vector<Index> zero;
  for (Index p = 0; p < fr.num_points(); ++p) {
    const double gw = sys.g * fr.points[static_cast<std::size_t>(p)].weight;
    if (std::abs(t(p)) <= tol * scale) {
      zero.push_back(p);
    } else {
      lambda(p) = t(p) > 0 ? 1.0 : -1.0;
      force -= gw * lambda(p) * T.row(p).transpose();
    }
  }
  if (zero.empty()) return lambda;
  const Index nz = static_cast<Index>(zero.size());
  Eigen::MatrixXd G(u.size(), nz);
  for (Index z = 0; z < nz; ++z) {
    const Index p = zero[static_cast<std::size_t>(z)];
    G.col(z) = sys.g * fr.points[static_cast<std::size_t>(p)].weight * T.row(p).transpose();
  }
  const Eigen::MatrixXd H = G.transpose() * G;
  const Eigen::VectorXd c = G.transpose() * force;
  Eigen::VectorXd x = G.completeOrthogonalDecomposition().solve(force).cwiseMax(-1.0).cwiseMin(1.0);
  for (int sweep = 0; sweep < 100000; ++sweep) {
    double change = 0.0;
    for (Index i = 0; i < nz; ++i) {
      if (H(i, i) <= 0.0) continue;
      const double xi = std::clamp(x(i) + (c(i) - H.row(i).dot(x)) / H(i, i), -1.0, 1.0);
      change = std::max(change, std::abs(xi - x(i)));
      x(i) = xi;
    }
    if (change <= 1e-15) break;
  }
  for (Index z = 0; z < nz; ++z) lambda(zero[static_cast<std::size_t>(z)]) = x(z);
  return lambda;
}

} // namespace detail

struct OracleReport {
  VISolution solution;
  double energy = 0.0;
  std::size_t patterns_tried = 0;
  bool consistent = false; ///< chosen candidate's signs agree with its pattern
};

/// Ground truth for delta = 1: minimizes 1/2 B_h(v,v) - <f_h,v> + j_Q(v) by
/// enumerating the sign patterns the friction traces can take. For each
/// pattern, |.| becomes a signed linear term, traces marked zero become
/// equality constraints, and the KKT system is solved densely. The minimizer
/// has some pattern and coincides with that candidate, so the lowest energy
/// over all candidates is the exact minimum.
inline OracleReport oracle_solve(const GlobalSystem& sys, double tol = 1e-9) {
  if (sys.delta != 1) throw ConfigError("oracle_solve requires delta = 1");
  const Index n = sys.size();
  if (n > 64) throw ConfigError("oracle_solve: system too large (" + std::to_string(n) + " dofs, limit 64)");
  const auto& fr = sys.friction;
  const std::size_t edges = fr.edges.size();
  if (edges > 4) throw ConfigError("oracle_solve: too many friction segments (limit 4)");
  const int q = fr.points_per_edge;
  const auto patterns = detail::linear_sign_patterns(q);
  const Eigen::MatrixXd B(sys.B);
  const Eigen::MatrixXd T(trace_matrix(fr, n));

  OracleReport best;
  best.energy = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> choice(edges, 0);
  while (true) {
    ++best.patterns_tried;
    Eigen::VectorXd rhs = sys.F;
    std::vector<Eigen::RowVectorXd> cons;
    Eigen::VectorXd sigma = Eigen::VectorXd::Zero(fr.num_points());
    for (std::size_t e = 0; e < edges; ++e) {
      const auto& pat = patterns[choice[e]];
      const Index first = fr.edges[e].first_point;
      int zeros = 0;
      for (int i = 0; i < q; ++i) {
        const Index p = first + i;
        sigma(p) = pat[static_cast<std::size_t>(i)];
        if (pat[static_cast<std::size_t>(i)] == 0) {
          if (zeros++ < 2) cons.push_back(T.row(p)); // a linear trace has two degrees of freedom
        } else {
          rhs -= sys.g * fr.points[static_cast<std::size_t>(p)].weight * sigma(p) * T.row(p).transpose();
        }
      }
    }
    const Index m = static_cast<Index>(cons.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
    K.topLeftCorner(n, n) = B;
    for (Index i = 0; i < m; ++i) {
      K.block(n + i, 0, 1, n) = cons[static_cast<std::size_t>(i)];
      K.block(0, n + i, n, 1) = cons[static_cast<std::size_t>(i)].transpose();
    }
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + m);
    b.head(n) = rhs;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (lu.rank() == n + m) {
      const Eigen::VectorXd x = lu.solve(b);
      const Eigen::VectorXd u = x.head(n);
      const double energy = vi_energy(sys, u);
      if (energy < best.energy - 1e-14 * (1.0 + std::abs(energy))) {
        const Eigen::VectorXd t = T * u;
        bool consistent = true;
        for (Index p = 0; p < fr.num_points(); ++p) {
          if (sigma(p) * t(p) < -tol) consistent = false;
        }
        best.energy = energy;
        best.consistent = consistent;
        best.solution.u = u;
      }
    }
    std::size_t e = 0;
    while (e < edges && ++choice[e] == patterns.size()) choice[e++] = 0;
    if (e == edges) break;
  }
  if (!std::isfinite(best.energy)) throw SolverError("oracle_solve: no admissible sign pattern");
  best.solution.lambda = detail::oracle_multiplier(sys, T, best.solution.u, tol);
  best.solution.energies.push_back(best.energy);
  return best;
}

struct ViolationReport {
  double min_value = 0.0; ///< most negative B_h(u,v-u) + j(v) - j(u) - <f,v-u>
  int directions = 0;
};

/// Samples the discrete inequality at v = u + s d for random d and for
/// +/- every coordinate direction, s = 1 + ||u||_inf. Uses the quadrature
/// friction functional that the solver discretizes unless exact_j is set.
inline ViolationReport verify_vi(const GlobalSystem& sys, const Eigen::VectorXd& u, int n_directions,
                                 std::uint32_t seed = 42, bool exact_j = false) {
  auto j = [&](const Eigen::VectorXd& v) {
    return exact_j ? friction_j(sys.friction, sys.g, v) : friction_j_quadrature(sys.friction, sys.g, v);
  };
  const Eigen::VectorXd Bu_minus_f = sys.B * u - sys.F;
  const double ju = j(u);
  const double s = 1.0 + (u.size() ? u.cwiseAbs().maxCoeff() : 0.0);
  ViolationReport r;
  r.min_value = std::numeric_limits<double>::infinity();
  auto probe = [&](const Eigen::VectorXd& d) {
    // B_h(u, v - u) = (v - u)^T B u
    const Eigen::VectorXd v = u + s * d;
    const double value = s * d.dot(Bu_minus_f) + j(v) - ju;
    r.min_value = std::min(r.min_value, value);
    ++r.directions;
  };
  probe(Eigen::VectorXd::Zero(u.size()));
  std::mt19937 rng(seed);
  std::normal_distribution<double> normal;
  for (int k = 0; k < n_directions; ++k) {
    Eigen::VectorXd d(u.size());
    for (Index i = 0; i < d.size(); ++i) d(i) = normal(rng);
    probe(d / d.norm());
  }
  for (Index i = 0; i < u.size(); ++i) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(u.size());
    d(i) = 1.0;
    probe(d);
    probe(-d);
  }
  return r;
}

inline void write_trace_csv(std::ostream& out, const VISolution& sol) {
  out << "iteration,residual,energy\n";
  for (std::size_t i = 0; i < sol.residuals.size(); ++i)
    out << i + 1 << ',' << sol.residuals[i] << ',' << sol.energies[i] << '\n';
}

} // namespace dvem

#endif // DVEM_VI_SOLVER_HPP
