#ifndef DVEM_PROPERTIES_HPP
#define DVEM_PROPERTIES_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "dvem/dg_forms.hpp"

namespace dvem {

/// Dense eigen-solves above this size are skipped in favour of sampling alone.
inline constexpr Index kDenseEigenLimit = 1200;

struct CoercivityReport {
  double sampled = 0.0;             ///< min over random v of B_h(v,v) / ||v||^2_{1,DG}
  std::optional<double> exact;      ///< min generalized eigenvalue of (sym B, N)
  int samples = 0;

  /// Empirical M_s: the smaller of the sampled and (when available) exact minimum.
  [[nodiscard]] double constant() const { return exact ? std::min(sampled, *exact) : sampled; }
};

inline Eigen::VectorXd gaussian_vector(Index n, std::mt19937& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

inline CoercivityReport coercivity_sample(const SparseMatrix& B, const SparseMatrix& N, int samples, std::mt19937& rng,
                                          bool with_exact = true) {
  CoercivityReport r;
  r.samples = samples;
  r.sampled = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    const Eigen::VectorXd v = gaussian_vector(B.rows(), rng);
    r.sampled = std::min(r.sampled, v.dot(B * v) / v.dot(N * v));
  }
  if (with_exact && B.rows() <= kDenseEigenLimit) {
    const Eigen::MatrixXd Bd(B);
    const Eigen::MatrixXd sym = 0.5 * (Bd + Bd.transpose());
    const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::MatrixXd(N),
                                                                        Eigen::EigenvaluesOnly);
    if (es.info() == Eigen::Success) r.exact = es.eigenvalues().minCoeff();
  }
  return r;
}

struct GammaCalibration {
  double gamma = 10.0;
  CoercivityReport coercivity;
  int doublings = 0;
};

/// Starts at gamma = 10 and doubles until the empirical coercivity constant
/// exceeds `floor`.
inline GammaCalibration calibrate_gamma(const DgOperators& parts, int delta, std::uint32_t seed, int samples = 200,
                                        double floor = 1e-3, double gamma0 = 10.0) {
  const SparseMatrix N = norm_matrix(parts);
  GammaCalibration cal;
  cal.gamma = gamma0;
  for (; cal.doublings <= 40; ++cal.doublings) {
    std::mt19937 rng(seed);
    cal.coercivity = coercivity_sample(assemble_Bh(parts, delta, cal.gamma), N, samples, rng);
    if (cal.coercivity.constant() > floor) return cal;
    cal.gamma *= 2.0;
  }
  throw SolverError("gamma calibration failed to reach a positive coercivity constant");
}

/// max over random pairs of |a~_h(v,w)| / (||v|| ||w||) and the same for the
/// penalty pairing (bounded by 1).
struct ContinuityReport {
  double bulk = 0.0;
  double penalty = 0.0;
};

inline ContinuityReport continuity_sample(const DgOperators& parts, int samples, std::mt19937& rng) {
  const SparseMatrix N = norm_matrix(parts);
  ContinuityReport r;
  for (int s = 0; s < samples; ++s) {
    const Eigen::VectorXd v = gaussian_vector(parts.A.rows(), rng);
    const Eigen::VectorXd w = gaussian_vector(parts.A.rows(), rng);
    const double scale = std::sqrt(v.dot(N * v) * w.dot(N * w));
    r.bulk = std::max(r.bulk, std::abs(w.dot(parts.A * v)) / scale);
    r.penalty = std::max(r.penalty, std::abs(w.dot(parts.J * v)) / scale);
  }
  return r;
}

/// Squared broken norm of the piecewise-linear field Pi w (element terms and
/// jumps of the projections), as a matrix on dof vectors.
inline SparseMatrix projected_norm_matrix(const PolygonalMesh& mesh, const DofMap& dofs, const LocalElementOps& ops,
                                          const DgOperators& parts, const EdgeQuadrature& quad = EdgeQuadrature{}) {
  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> t;
  for (const InterfaceSegment& seg : mesh.segments()) {
    const auto w = quad.weights(seg);
    // Row vector of the jump of Pi v at each quadrature point.
    std::vector<std::pair<Index, const LocalProjector*>> sides{{seg.plus.element, &ops.projector(seg.plus.element)}};
    if (seg.minus) sides.emplace_back(seg.minus->element, &ops.projector(seg.minus->element));
    for (std::size_t q = 0; q < w.size(); ++q) {
      const Point x = seg.at(quad.rule.points[q]);
      std::vector<std::pair<Index, double>> row;
      for (std::size_t s = 0; s < sides.size(); ++s) {
        const auto& [k, proj] = sides[s];
        const Eigen::VectorXd phi = proj->P.transpose() * proj->basis.values(x);
        for (int i = 0; i < proj->num_dofs(); ++i) row.emplace_back(dofs.dof(k, i), (s == 0 ? 1.0 : -1.0) * phi(i));
      }
      for (const auto& [i, a] : row)
        for (const auto& [j, b] : row) t.emplace_back(i, j, w[q] / seg.length * a * b);
    }
  }
  SparseMatrix J(dofs.size(), dofs.size());
  J.setFromTriplets(t.begin(), t.end());
  return SparseMatrix(parts.A_pi + J);
}

/// max over random w of ||Pi w||_{1,DG} / ||w||_{1,DG}.
inline double projection_bound_sample(const SparseMatrix& Npi, const SparseMatrix& N, int samples, std::mt19937& rng) {
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Eigen::VectorXd w = gaussian_vector(N.rows(), rng);
    worst = std::max(worst, std::sqrt(w.dot(Npi * w) / w.dot(N * w)));
  }
  return worst;
}

} // namespace dvem

#endif // DVEM_PROPERTIES_HPP
