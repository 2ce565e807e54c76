#ifndef DVEM_ANALYSIS_HPP
#define DVEM_ANALYSIS_HPP

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dvem/cases.hpp"
#include "dvem/dg_forms.hpp"

namespace dvem {

/// Squared components of the broken norms.
struct BrokenNorms {
  double grad2 = 0.0;    ///< sum_K ||grad v||^2
  double l2_2 = 0.0;     ///< sum_K ||v||^2
  double hess2 = 0.0;    ///< sum_K h_K^2 |grad v|_{1,K}^2
  double penalty = 0.0;  ///< <[v],[v]> over all segments

  [[nodiscard]] double norm_1dg() const { return std::sqrt(grad2 + l2_2 + penalty); }
  [[nodiscard]] double norm_2dg() const { return std::sqrt(grad2 + l2_2 + hess2 + penalty); }
  [[nodiscard]] double grad() const { return std::sqrt(grad2); }
  [[nodiscard]] double l2() const { return std::sqrt(l2_2); }
  [[nodiscard]] double penalty_norm() const { return std::sqrt(penalty); }
};

/// Function given element by element. Inside K it is described by value,
/// gradient and (optionally) Hessian; its trace on a segment side may differ
/// from the interior description, as for virtual functions measured through
/// their projection.
struct BrokenField {
  std::function<double(Index, Point)> value;
  std::function<Eigen::Vector2d(Index, Point)> gradient;
  std::function<Eigen::Matrix2d(Index, Point)> hessian; ///< empty means piecewise linear
  /// Trace on side `side` of `seg` at segment parameter s; empty means value.
  std::function<double(const SideRef&, const InterfaceSegment&, double)> trace;
};

struct NormQuadrature {
  int element_order = 5;
  int edge_points = 8;
};

inline BrokenNorms broken_norms(const PolygonalMesh& mesh, const BrokenField& v, NormQuadrature quad = {}) {
  BrokenNorms n;
  for (const Element& el : mesh.elements()) {
    const ElementQuadrature q = element_quadrature(el, quad.element_order);
    for (std::size_t i = 0; i < q.points.size(); ++i) {
      const Point x = q.points[i];
      const double val = v.value(el.id, x);
      n.grad2 += q.weights[i] * v.gradient(el.id, x).squaredNorm();
      n.l2_2 += q.weights[i] * val * val;
      if (v.hessian) n.hess2 += q.weights[i] * el.diameter * el.diameter * v.hessian(el.id, x).squaredNorm();
    }
  }
  const LineRule rule = gauss_legendre(quad.edge_points);
  auto trace = [&](const SideRef& side, const InterfaceSegment& seg, double s) {
    return v.trace ? v.trace(side, seg, s) : v.value(side.element, seg.at(s));
  };
  for (const InterfaceSegment& seg : mesh.segments()) {
    double sum = 0.0;
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double s = rule.points[q];
      double jump = trace(seg.plus, seg, s);
      if (seg.minus) jump -= trace(*seg.minus, seg, s);
      sum += rule.weights[q] * seg.length * jump * jump;
    }
    n.penalty += sum / seg.length;
  }
  return n;
}

/// Dof vector as a broken field: Pi-surrogate inside elements, the true
/// edgewise-linear trace on segments.
inline BrokenField dof_field(const PolygonalMesh& mesh, const LocalElementOps& ops, const DofMap& dofs,
                             const Eigen::VectorXd& v) {
  auto coeffs = std::make_shared<std::vector<Eigen::Vector3d>>();
  for (Index k = 0; k < mesh.num_elements(); ++k) coeffs->push_back(ops.projector(k).coefficients(dofs.local(v, k)));
  BrokenField f;
  f.value = [&ops, coeffs](Index k, Point x) {
    return ops.projector(k).basis.evaluate((*coeffs)[static_cast<std::size_t>(k)], x);
  };
  f.gradient = [&ops, coeffs](Index k, Point) {
    return ops.projector(k).basis.gradient((*coeffs)[static_cast<std::size_t>(k)]);
  };
  f.trace = [&mesh, &dofs, v](const SideRef& side, const InterfaceSegment& seg, double s) {
    const EdgeTraceMap m = trace_map(mesh, side, seg);
    const auto [w0, w1] = m.weights(s);
    return w0 * v(dofs.dof(side.element, m.l0)) + w1 * v(dofs.dof(side.element, m.l1));
  };
  return f;
}

/// Broken norms of a dof vector. Equivalent to v^T (A_pi + J) v split into parts.
inline BrokenNorms norm_1dg(const PolygonalMesh& mesh, const LocalElementOps& ops, const Eigen::VectorXd& v) {
  const DofMap dofs = DofMap::build(mesh);
  return broken_norms(mesh, dof_field(mesh, ops, dofs, v));
}

/// Broken norms of a field given in closed form on every element (the
/// penalty uses the same closed form on both sides, so continuous fields have
/// zero interior jumps).
inline BrokenNorms norm_1dg(const PolygonalMesh& mesh, const std::function<double(Point)>& u,
                            const std::function<Eigen::Vector2d(Point)>& grad,
                            const std::function<Eigen::Matrix2d(Point)>& hess = {}) {
  BrokenField f;
  f.value = [u](Index, Point x) { return u(x); };
  f.gradient = [grad](Index, Point x) { return grad(x); };
  if (hess) f.hessian = [hess](Index, Point x) { return hess(x); };
  return broken_norms(mesh, f);
}

inline BrokenNorms norm_1dg(const PolygonalMesh& mesh, const PiecewiseLinear& v) {
  BrokenField f;
  f.value = [&v](Index k, Point x) { return v.value(k, x); };
  f.gradient = [&v](Index k, Point) { return v.gradient(k); };
  return broken_norms(mesh, f);
}

/// u_I: vertex values of u on every element.
inline Eigen::VectorXd interpolant_uI(const PolygonalMesh& mesh, const std::function<double(Point)>& u) {
  const DofMap dofs = DofMap::build(mesh);
  Eigen::VectorXd v(dofs.size());
  for (Index k = 0; k < mesh.num_elements(); ++k)
    for (int i = 0; i < dofs.num_local(k); ++i) v(dofs.dof(k, i)) = u(mesh.vertex_of(k, i));
  return v;
}

/// u_pi: elementwise L2 projection onto P1 by the moment system on a 5x5 rule.
inline PiecewiseLinear projection_upi(const PolygonalMesh& mesh, const std::function<double(Point)>& u,
                                      int order = 5) {
  PiecewiseLinear out;
  for (const Element& el : mesh.elements()) {
    const auto pts = mesh.element_points(el.id);
    const MonomialBasis basis = make_monomial_basis(el.id, pts);
    const ElementQuadrature q = element_quadrature(el, order);
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < q.points.size(); ++i) rhs += q.weights[i] * u(q.points[i]) * basis.values(q.points[i]);
    const Eigen::LDLT<Eigen::Matrix3d> ldlt(basis.moments);
    if (ldlt.info() != Eigen::Success || !(basis.moments.determinant() > 0.0))
      throw ElementError(el.id, "singular moment matrix");
    const Eigen::Vector3d c = ldlt.solve(rhs);
    // c0 + c1 (x - xc)/h + c2 (y - yc)/h in global monomials
    const double h = basis.h;
    out.coeffs.emplace_back(c(0) - (c(1) * basis.centroid.x + c(2) * basis.centroid.y) / h, c(1) / h, c(2) / h);
  }
  return out;
}

/// Error field u - v with v a dof vector.
inline BrokenField error_field(const PolygonalMesh& mesh, const LocalElementOps& ops, const DofMap& dofs,
                               const ExactSolutionCase& c, const Eigen::VectorXd& v) {
  const BrokenField vh = dof_field(mesh, ops, dofs, v);
  BrokenField e;
  e.value = [vh, u = c.u](Index k, Point x) { return u(x) - vh.value(k, x); };
  e.gradient = [vh, g = c.gradient](Index k, Point x) { return Eigen::Vector2d(g(x) - vh.gradient(k, x)); };
  e.hessian = [h = c.hessian](Index, Point x) { return h(x); };
  e.trace = [vh, u = c.u](const SideRef& side, const InterfaceSegment& seg, double s) {
    return u(seg.at(s)) - vh.trace(side, seg, s);
  };
  return e;
}

/// Broken norms of u - u_h for an analytic case.
inline BrokenNorms error_against_exact(const PolygonalMesh& mesh, const LocalElementOps& ops,
                                       const ExactSolutionCase& c, const Eigen::VectorXd& uh) {
  if (!c.analytic()) throw ConfigError("error_against_exact needs an analytic case");
  const DofMap dofs = DofMap::build(mesh);
  BrokenNorms n = broken_norms(mesh, error_field(mesh, ops, dofs, c, uh));
  // Pi-surrogates are linear, so only u contributes second derivatives.
  return n;
}

/// Broken norms of u - u_pi (both given inside elements; u_pi's jumps count).
inline BrokenNorms projection_error(const PolygonalMesh& mesh, const ExactSolutionCase& c, const PiecewiseLinear& upi) {
  BrokenField e;
  e.value = [&](Index k, Point x) { return c.u(x) - upi.value(k, x); };
  e.gradient = [&](Index k, Point x) { return Eigen::Vector2d(c.gradient(x) - upi.gradient(k)); };
  e.hessian = [&](Index, Point x) { return c.hessian(x); };
  return broken_norms(mesh, e);
}

/// Terms of R(u, v) = a~(u, v-u) - <grad u, [v-u]>_{internal} + j(v) - j(u) - (f, v-u).
struct ResidualTerms {
  double bulk = 0.0;     ///< a~(u, v-u) - (f, v-u)
  double flux = 0.0;     ///< <grad u, [v]> over internal segments ([u] = 0)
  double friction = 0.0; ///< j(v) - j(u)
  [[nodiscard]] double total() const { return bulk - flux + friction; }
};

/// v enters through its Pi-surrogate inside elements and its true traces on
/// segments; j(v) is exact on the linear traces, j(u) uses 16 Gauss points
/// per Gamma_2 segment.
inline ResidualTerms residual_terms(const PolygonalMesh& mesh, const LocalElementOps& ops, const ExactSolutionCase& c,
                                    const Eigen::VectorXd& v) {
  if (!c.analytic()) throw ConfigError("residual_R needs an analytic case");
  const DofMap dofs = DofMap::build(mesh);
  const BrokenField vh = dof_field(mesh, ops, dofs, v);
  ResidualTerms r;
  for (const Element& el : mesh.elements()) {
    const ElementQuadrature q = element_quadrature(el, 5);
    for (std::size_t i = 0; i < q.points.size(); ++i) {
      const Point x = q.points[i];
      const double w = vh.value(el.id, x) - c.u(x);
      const Eigen::Vector2d gw = vh.gradient(el.id, x) - c.gradient(x);
      r.bulk += q.weights[i] * (c.gradient(x).dot(gw) + c.u(x) * w - c.f(x) * w);
    }
  }
  const LineRule rule = gauss_legendre(8);
  for (const InterfaceSegment& seg : mesh.segments()) {
    if (!seg.internal()) continue;
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double s = rule.points[q];
      const double jump = vh.trace(seg.plus, seg, s) - vh.trace(*seg.minus, seg, s);
      r.flux += rule.weights[q] * seg.length * c.gradient(seg.at(s)).dot(to_eigen(seg.normal)) * jump;
    }
  }
  const FrictionData fr = build_friction(mesh, dofs);
  const LineRule fine = gauss_legendre(16);
  double ju = 0.0;
  for (const FrictionEdge& e : fr.edges) {
    const InterfaceSegment& seg = mesh.segment(e.segment);
    for (std::size_t q = 0; q < fine.size(); ++q)
      ju += fine.weights[q] * seg.length * std::abs(c.u(seg.at(fine.points[q])));
  }
  r.friction = friction_j(fr, c.g, v) - c.g * ju;
  return r;
}

inline double residual_R(const PolygonalMesh& mesh, const LocalElementOps& ops, const ExactSolutionCase& c,
                         const Eigen::VectorXd& v) {
  return residual_terms(mesh, ops, c, v).total();
}

/// EOC_i = log(e_{i-1}/e_i) / log(h_{i-1}/h_i); entry 0 and entries touching a
/// zero or non-finite error are undefined.
inline std::vector<std::optional<double>> eoc(const std::vector<double>& h, const std::vector<double>& err) {
  if (h.size() != err.size()) throw ConfigError("eoc: size mismatch");
  std::vector<std::optional<double>> out(h.size());
  for (std::size_t i = 1; i < h.size(); ++i) {
    if (err[i] > 0.0 && err[i - 1] > 0.0 && std::isfinite(err[i]) && std::isfinite(err[i - 1]) && h[i] != h[i - 1])
      out[i] = std::log(err[i - 1] / err[i]) / std::log(h[i - 1] / h[i]);
  }
  return out;
}

/// Error of a coarse solution measured against a solution on the mesh
/// obtained by two uniform refinements. `fine_parent` maps every fine element
/// to its coarse ancestor.
inline BrokenNorms error_against_reference(const PolygonalMesh& coarse, const LocalElementOps& coarse_ops,
                                           const Eigen::VectorXd& uh, const PolygonalMesh& fine,
                                           const LocalElementOps& fine_ops, const Eigen::VectorXd& uref,
                                           const std::vector<Index>& fine_parent) {
  const DofMap cd = DofMap::build(coarse);
  const DofMap fd = DofMap::build(fine);
  const BrokenField ch = dof_field(coarse, coarse_ops, cd, uh);
  const BrokenField fh = dof_field(fine, fine_ops, fd, uref);
  auto ancestor = [&](Index k) { return fine_parent.at(static_cast<std::size_t>(k)); };

  // Edgewise-linear coarse trace at a point on the boundary of coarse element k.
  auto coarse_trace = [&](Index k, Point x) {
    const int n = coarse.element(k).num_vertices();
    for (int i = 0; i < n; ++i) {
      const auto [a, b] = coarse.edge_of(k, i);
      const Point d = b - a;
      const double t = dot(x - a, d) / dot(d, d);
      if (std::abs(cross(d, x - a)) <= coarse.tolerance() * norm(d) && t >= -1e-12 && t <= 1 + 1e-12)
        return (1 - t) * uh(cd.dof(k, i)) + t * uh(cd.dof(k, (i + 1) % n));
    }
    throw MeshError("reference error: point not on coarse element boundary");
  };

  BrokenField e;
  e.value = [&](Index k, Point x) { return fh.value(k, x) - ch.value(ancestor(k), x); };
  e.gradient = [&](Index k, Point x) { return Eigen::Vector2d(fh.gradient(k, x) - ch.gradient(ancestor(k), x)); };
  e.trace = [&](const SideRef& side, const InterfaceSegment& seg, double s) {
    const double ref = fh.trace(side, seg, s);
    // The coarse solution is continuous inside coarse elements; only segments
    // on the coarse skeleton carry its jumps.
    const Index other = seg.minus ? ancestor((side == seg.plus ? *seg.minus : seg.plus).element) : -1;
    const Index mine = ancestor(side.element);
    if (seg.minus && other == mine) return ref;
    return ref - coarse_trace(mine, seg.at(s));
  };
  return broken_norms(fine, e);
}

} // namespace dvem

#endif // DVEM_ANALYSIS_HPP
