#ifndef DVEM_DG_FORMS_HPP
#define DVEM_DG_FORMS_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "dvem/mesh.hpp"
#include "dvem/quadrature.hpp"
#include "dvem/vem_local.hpp"

namespace dvem {

using SparseMatrix = Eigen::SparseMatrix<double>;
using ScalarField = std::function<double(Point)>;

/// Element-local vertex dofs; nothing is shared between elements.
struct DofMap {
  std::vector<Index> offsets; ///< offsets[k] .. offsets[k+1]-1 are the dofs of element k

  static DofMap build(const PolygonalMesh& mesh) {
    DofMap map;
    map.offsets.reserve(static_cast<std::size_t>(mesh.num_elements()) + 1);
    map.offsets.push_back(0);
    for (const Element& el : mesh.elements()) map.offsets.push_back(map.offsets.back() + el.num_vertices());
    return map;
  }
  [[nodiscard]] Index size() const { return offsets.back(); }
  [[nodiscard]] Index dof(Index k, int local) const { return offsets[static_cast<std::size_t>(k)] + local; }
  [[nodiscard]] int num_local(Index k) const {
    return static_cast<int>(offsets[static_cast<std::size_t>(k) + 1] - offsets[static_cast<std::size_t>(k)]);
  }
  [[nodiscard]] Eigen::VectorXd local(const Eigen::VectorXd& global, Index k) const {
    return global.segment(offsets[static_cast<std::size_t>(k)], num_local(k));
  }
};

/// Gauss points on a segment; weights include the segment length.
struct EdgeQuadrature {
  LineRule rule = gauss_legendre(4);

  explicit EdgeQuadrature(int points = 4) : rule(gauss_legendre(points)) {}

  [[nodiscard]] std::vector<double> weights(const InterfaceSegment& s) const {
    std::vector<double> w(rule.weights);
    for (double& x : w) x *= s.length;
    return w;
  }
};

/// Linear function along a segment, by its values at the endpoints a and b.
struct LinearTrace {
  double at_a = 0.0;
  double at_b = 0.0;
  [[nodiscard]] double operator()(double t) const { return (1.0 - t) * at_a + t * at_b; }
};

/// Position of a segment on one of its elements' edges: the trace at segment
/// parameter s is (1 - t) v[l0] + t v[l1] with t = t_a + s (t_b - t_a).
struct EdgeTraceMap {
  int l0 = 0;
  int l1 = 1;
  double t_a = 0.0;
  double t_b = 1.0;

  [[nodiscard]] double edge_param(double s) const { return t_a + s * (t_b - t_a); }
  [[nodiscard]] std::pair<double, double> weights(double s) const {
    const double t = edge_param(s);
    return {1.0 - t, t};
  }
};

inline EdgeTraceMap trace_map(const PolygonalMesh& mesh, const SideRef& side, const InterfaceSegment& seg) {
  const Element& el = mesh.element(side.element);
  const int n = el.num_vertices();
  if (side.local_edge < 0 || side.local_edge >= n) throw MeshError("trace_map: bad local edge");
  const auto [p, q] = mesh.edge_of(side.element, side.local_edge);
  const Point d = q - p;
  const double len2 = dot(d, d);
  const double tol = mesh.tolerance();
  auto param = [&](Point x) {
    if (std::abs(cross(d, x - p)) / std::sqrt(len2) > tol)
      throw MeshError("segment " + std::to_string(seg.id) + " is not on the boundary of element " +
                      std::to_string(side.element));
    const double t = dot(x - p, d) / len2;
    if (t < -tol || t > 1.0 + tol)
      throw MeshError("segment " + std::to_string(seg.id) + " extends beyond edge of element " +
                      std::to_string(side.element));
    return std::clamp(t, 0.0, 1.0);
  };
  return {side.local_edge, (side.local_edge + 1) % n, param(seg.a), param(seg.b)};
}

/// Restriction of the edgewise-linear trace of v (local vertex values of the
/// element on `side`) to the segment.
inline LinearTrace trace_on_segment(const PolygonalMesh& mesh, const SideRef& side, const InterfaceSegment& seg,
                                    const Eigen::Ref<const Eigen::VectorXd>& v) {
  const EdgeTraceMap m = trace_map(mesh, side, seg);
  auto value = [&](double t) { return (1.0 - t) * v(m.l0) + t * v(m.l1); };
  return {value(m.t_a), value(m.t_b)};
}

/// [v] = jump(s) * normal and {grad Pi v} on a segment.
struct JumpAverage {
  LinearTrace jump;        ///< v+ - v- (internal) or v (boundary), along the plus normal
  Point normal;            ///< n+ = -n-
  Eigen::Vector2d average; ///< {grad Pi v}
};

inline JumpAverage jump_and_average(const InterfaceSegment& seg, const LinearTrace& plus,
                                    const std::optional<LinearTrace>& minus, const Eigen::Vector2d& grad_plus,
                                    const std::optional<Eigen::Vector2d>& grad_minus) {
  JumpAverage ja;
  ja.normal = seg.normal;
  if (seg.internal()) {
    if (!minus || !grad_minus) throw MeshError("jump_and_average: internal segment needs both sides");
    ja.jump = {plus.at_a - minus->at_a, plus.at_b - minus->at_b};
    ja.average = 0.5 * (grad_plus + *grad_minus);
  } else {
    ja.jump = plus;
    ja.average = grad_plus;
  }
  return ja;
}

/// Pieces of the discrete form: B(delta, gamma) = A - E - delta E^T + gamma J,
/// with w^T E v = <{grad Pi v}, [w]> over internal segments and
/// w^T J v = sum_e |e|^-1 int_e [v].[w] over all segments.
struct DgOperators {
  SparseMatrix A;    ///< block diagonal of local A_h
  SparseMatrix A_pi; ///< block diagonal of a^K(Pi., Pi.)
  SparseMatrix E;
  SparseMatrix J;
};

namespace detail {

struct SideTrace {
  Index element = 0;
  double sign = 1.0; ///< +1 on the plus side, -1 on the minus side
  int l0 = 0;
  int l1 = 1;
  std::vector<double> phi0; ///< value of local basis l0 at each quadrature point
  std::vector<double> phi1;
};

inline std::vector<SideTrace> side_traces(const PolygonalMesh& mesh, const InterfaceSegment& seg,
                                          const EdgeQuadrature& quad) {
  std::vector<SideTrace> sides;
  auto add = [&](const SideRef& ref, double sign) {
    const EdgeTraceMap m = trace_map(mesh, ref, seg);
    SideTrace st;
    st.element = ref.element;
    st.sign = sign;
    st.l0 = m.l0;
    st.l1 = m.l1;
    for (double s : quad.rule.points) {
      const auto [w0, w1] = m.weights(s);
      st.phi0.push_back(w0);
      st.phi1.push_back(w1);
    }
    sides.push_back(std::move(st));
  };
  add(seg.plus, 1.0);
  if (seg.minus) add(*seg.minus, -1.0);
  return sides;
}

} // namespace detail

inline DgOperators assemble_forms(const PolygonalMesh& mesh, const DofMap& dofs, const LocalElementOps& ops,
                                  const EdgeQuadrature& quad = EdgeQuadrature{}) {
  using Triplet = Eigen::Triplet<double>;
  const Index n = dofs.size();
  std::vector<Triplet> ta, tpi, te, tj;
  for (Index k = 0; k < mesh.num_elements(); ++k) {
    const LocalForms& f = ops.form(k);
    for (int i = 0; i < f.A_h.rows(); ++i) {
      for (int j = 0; j < f.A_h.cols(); ++j) {
        ta.emplace_back(dofs.dof(k, i), dofs.dof(k, j), f.A_h(i, j));
        tpi.emplace_back(dofs.dof(k, i), dofs.dof(k, j), f.A_pi(i, j));
      }
    }
  }

  for (const InterfaceSegment& seg : mesh.segments()) {
    const auto sides = detail::side_traces(mesh, seg, quad);
    const auto w = quad.weights(seg);
    const Eigen::Vector2d normal = to_eigen(seg.normal);

    // Penalty: (1/|e|) int [phi_i].[phi_j] = (1/|e|) s_i s_j int phi_i phi_j.
    for (const auto& si : sides) {
      for (const auto& sj : sides) {
        const double scale = si.sign * sj.sign / seg.length;
        for (int a = 0; a < 2; ++a) {
          for (int b = 0; b < 2; ++b) {
            double integral = 0.0;
            for (std::size_t q = 0; q < w.size(); ++q) {
              const double pa = a == 0 ? si.phi0[q] : si.phi1[q];
              const double pb = b == 0 ? sj.phi0[q] : sj.phi1[q];
              integral += w[q] * pa * pb;
            }
            tj.emplace_back(dofs.dof(si.element, a == 0 ? si.l0 : si.l1),
                            dofs.dof(sj.element, b == 0 ? sj.l0 : sj.l1), scale * integral);
          }
        }
      }
    }

    if (!seg.internal()) continue;
    // Consistency: E(i,j) = int_e {grad Pi phi_j} . [phi_i]
    for (const auto& si : sides) {
      for (int a = 0; a < 2; ++a) {
        double trace_integral = 0.0;
        for (std::size_t q = 0; q < w.size(); ++q) trace_integral += w[q] * (a == 0 ? si.phi0[q] : si.phi1[q]);
        const Index row = dofs.dof(si.element, a == 0 ? si.l0 : si.l1);
        for (const auto& sj : sides) {
          const LocalProjector& pj = ops.projector(sj.element);
          for (int j = 0; j < pj.num_dofs(); ++j) {
            const double flux = 0.5 * pj.basis_gradient(j).dot(normal);
            te.emplace_back(row, dofs.dof(sj.element, j), si.sign * flux * trace_integral);
          }
        }
      }
    }
  }

  DgOperators out;
  out.A.resize(n, n);
  out.A_pi.resize(n, n);
  out.E.resize(n, n);
  out.J.resize(n, n);
  out.A.setFromTriplets(ta.begin(), ta.end());
  out.A_pi.setFromTriplets(tpi.begin(), tpi.end());
  out.E.setFromTriplets(te.begin(), te.end());
  out.J.setFromTriplets(tj.begin(), tj.end());
  return out;
}

inline void check_parameters(int delta, double gamma) {
  if (delta < -1 || delta > 1) throw ConfigError("delta must be -1, 0 or 1 (got " + std::to_string(delta) + ")");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be positive");
}

/// B = A - E - delta E^T + gamma J, so that w^T B v = B_h(v, w).
inline SparseMatrix assemble_Bh(const DgOperators& ops, int delta, double gamma) {
  check_parameters(delta, gamma);
  SparseMatrix Et = ops.E.transpose();
  SparseMatrix B = ops.A - ops.E - static_cast<double>(delta) * Et + gamma * ops.J;
  B.prune(0.0);
  return B;
}

/// Matrix of the squared broken norm on dof vectors: element terms through the
/// projection, penalty through the true traces.
inline SparseMatrix norm_matrix(const DgOperators& ops) { return ops.A_pi + ops.J; }

/// Physical quadrature points of an element: tensor Gauss on the unit square
/// pushed through the affine map.
struct ElementQuadrature {
  std::vector<Point> points;
  std::vector<double> weights;
};

inline ElementQuadrature element_quadrature(const Element& el, int order) {
  const SquareRule ref = tensor_gauss(order);
  ElementQuadrature q;
  const double jac = std::abs(el.map.determinant());
  for (std::size_t i = 0; i < ref.points.size(); ++i) {
    q.points.push_back(el.map(ref.points[i]));
    q.weights.push_back(ref.weights[i] * jac);
  }
  return q;
}

/// F(i) = sum_K int_K f Pi phi_i dx.
inline Eigen::VectorXd assemble_fh(const PolygonalMesh& mesh, const DofMap& dofs, const LocalElementOps& ops,
                                   const ScalarField& f, int order = 3) {
  Eigen::VectorXd F = Eigen::VectorXd::Zero(dofs.size());
  for (Index k = 0; k < mesh.num_elements(); ++k) {
    const LocalProjector& proj = ops.projector(k);
    const ElementQuadrature q = element_quadrature(mesh.element(k), order);
    Eigen::Vector3d moments = Eigen::Vector3d::Zero();
    for (std::size_t p = 0; p < q.points.size(); ++p)
      moments += q.weights[p] * f(q.points[p]) * proj.basis.values(q.points[p]);
    F.segment(dofs.offsets[static_cast<std::size_t>(k)], proj.num_dofs()) += proj.P.transpose() * moments;
  }
  return F;
}

/// One Gamma_2 segment with the dofs that carry its trace.
struct FrictionEdge {
  Index segment = 0;
  Index element = 0;
  Index dof0 = 0;
  Index dof1 = 0;
  EdgeTraceMap map;
  double length = 0.0;
  Index first_point = 0; ///< index of this edge's first quadrature point
};

/// Quadrature point on Gamma_2 where the friction multiplier lives.
struct FrictionPoint {
  Index dof0 = 0;
  Index dof1 = 0;
  double w0 = 0.0;
  double w1 = 0.0;
  double weight = 0.0; ///< quadrature weight including segment length
  Point x;
  Index edge = 0;

  [[nodiscard]] double trace(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    return w0 * v(dof0) + w1 * v(dof1);
  }
};

struct FrictionData {
  std::vector<FrictionEdge> edges;
  std::vector<FrictionPoint> points;
  int points_per_edge = 0;

  [[nodiscard]] bool empty() const { return edges.empty(); }
  [[nodiscard]] Index num_points() const { return static_cast<Index>(points.size()); }
  [[nodiscard]] double measure() const {
    double m = 0.0;
    for (const auto& e : edges) m += e.length;
    return m;
  }
  [[nodiscard]] LinearTrace edge_trace(const FrictionEdge& e, const Eigen::Ref<const Eigen::VectorXd>& v) const {
    auto value = [&](double t) { return (1.0 - t) * v(e.dof0) + t * v(e.dof1); };
    return {value(e.map.t_a), value(e.map.t_b)};
  }
  /// Trace values at every friction point.
  [[nodiscard]] Eigen::VectorXd traces(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    Eigen::VectorXd t(num_points());
    for (Index q = 0; q < num_points(); ++q) t(q) = points[static_cast<std::size_t>(q)].trace(v);
    return t;
  }
};

inline FrictionData build_friction(const PolygonalMesh& mesh, const DofMap& dofs,
                                   const EdgeQuadrature& quad = EdgeQuadrature{}) {
  FrictionData data;
  data.points_per_edge = static_cast<int>(quad.rule.size());
  for (const InterfaceSegment& seg : mesh.segments()) {
    if (seg.internal() || seg.tag != BoundaryTag::gamma2) continue;
    FrictionEdge e;
    e.segment = seg.id;
    e.element = seg.plus.element;
    e.map = trace_map(mesh, seg.plus, seg);
    e.dof0 = dofs.dof(e.element, e.map.l0);
    e.dof1 = dofs.dof(e.element, e.map.l1);
    e.length = seg.length;
    e.first_point = static_cast<Index>(data.points.size());
    const auto w = quad.weights(seg);
    for (std::size_t q = 0; q < w.size(); ++q) {
      const auto [w0, w1] = e.map.weights(quad.rule.points[q]);
      data.points.push_back({e.dof0, e.dof1, w0, w1, w[q], seg.at(quad.rule.points[q]),
                             static_cast<Index>(data.edges.size())});
    }
    data.edges.push_back(e);
  }
  return data;
}

/// int_0^L |linear from a to b| ds, splitting at the sign change.
inline double abs_linear_integral(double a, double b, double length) {
  if (a * b >= 0.0) return 0.5 * length * (std::abs(a) + std::abs(b));
  return 0.5 * length * (a * a + b * b) / (std::abs(a) + std::abs(b));
}

/// j(v) = int_{Gamma_2} g |v| ds, exact for edgewise-linear traces.
inline double friction_j(const FrictionData& fric, double g, const Eigen::Ref<const Eigen::VectorXd>& v) {
  double j = 0.0;
  for (const FrictionEdge& e : fric.edges) {
    const LinearTrace t = fric.edge_trace(e, v);
    j += abs_linear_integral(t.at_a, t.at_b, e.length);
  }
  return g * j;
}

/// j evaluated with the multiplier quadrature; equals friction_j unless a
/// trace changes sign inside a segment.
inline double friction_j_quadrature(const FrictionData& fric, double g, const Eigen::Ref<const Eigen::VectorXd>& v) {
  double j = 0.0;
  for (const FrictionPoint& p : fric.points) j += p.weight * std::abs(p.trace(v));
  return g * j;
}

inline void check_multiplier(const Eigen::Ref<const Eigen::VectorXd>& lambda, double slack = 1e-12) {
  const double m = lambda.size() ? lambda.cwiseAbs().maxCoeff() : 0.0;
  if (m > 1.0 + slack) throw SolverError("multiplier bound violated: max |lambda| = " + std::to_string(m));
}

/// int_{Gamma_2} g lambda v ds with lambda stored at the friction points.
inline double friction_linear(const FrictionData& fric, double g, const Eigen::Ref<const Eigen::VectorXd>& lambda,
                              const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (lambda.size() != fric.num_points()) throw SolverError("multiplier size mismatch");
  check_multiplier(lambda);
  double s = 0.0;
  for (Index q = 0; q < fric.num_points(); ++q) {
    const FrictionPoint& p = fric.points[static_cast<std::size_t>(q)];
    s += p.weight * lambda(q) * p.trace(v);
  }
  return g * s;
}

/// Vector r with r . v = friction_linear(lambda, v).
inline Eigen::VectorXd friction_load(const FrictionData& fric, double g, const Eigen::Ref<const Eigen::VectorXd>& lambda,
                                     Index ndofs) {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(ndofs);
  for (Index q = 0; q < fric.num_points(); ++q) {
    const FrictionPoint& p = fric.points[static_cast<std::size_t>(q)];
    r(p.dof0) += g * p.weight * lambda(q) * p.w0;
    r(p.dof1) += g * p.weight * lambda(q) * p.w1;
  }
  return r;
}

/// Everything the variational-inequality solver needs.
struct GlobalSystem {
  DofMap dofs;
  DgOperators parts;
  SparseMatrix B;
  Eigen::VectorXd F;
  int delta = 1;
  double gamma = 10.0;
  FrictionData friction;
  double g = 1.0;

  [[nodiscard]] Index size() const { return dofs.size(); }
  /// B_h(v, w)
  [[nodiscard]] double bilinear(const Eigen::VectorXd& v, const Eigen::VectorXd& w) const { return w.dot(B * v); }
};

inline GlobalSystem make_system(const PolygonalMesh& mesh, const LocalElementOps& ops, const ScalarField& f, double g,
                                int delta, double gamma, const EdgeQuadrature& quad = EdgeQuadrature{}) {
  if (!(g > 0.0)) throw ConfigError("friction bound g must be positive");
  GlobalSystem sys;
  sys.dofs = DofMap::build(mesh);
  sys.parts = assemble_forms(mesh, sys.dofs, ops, quad);
  sys.B = assemble_Bh(sys.parts, delta, gamma);
  sys.F = assemble_fh(mesh, sys.dofs, ops, f);
  sys.delta = delta;
  sys.gamma = gamma;
  sys.friction = build_friction(mesh, sys.dofs, quad);
  sys.g = g;
  return sys;
}

/// Piecewise-linear field c0 + c1 x + c2 y per element (global coordinates).
struct PiecewiseLinear {
  std::vector<Eigen::Vector3d> coeffs;

  [[nodiscard]] double value(Index k, Point p) const {
    const auto& c = coeffs[static_cast<std::size_t>(k)];
    return c(0) + c(1) * p.x + c(2) * p.y;
  }
  [[nodiscard]] Eigen::Vector2d gradient(Index k) const { return coeffs[static_cast<std::size_t>(k)].tail<2>(); }
};

/// sum_K int_{dK} grad v . n w ds, integrated over whole element edges.
inline double element_boundary_flux(const PolygonalMesh& mesh, const PiecewiseLinear& v, const PiecewiseLinear& w,
                                    int points = 16) {
  const LineRule rule = gauss_legendre(points);
  double total = 0.0;
  for (const Element& el : mesh.elements()) {
    for (int i = 0; i < el.num_vertices(); ++i) {
      const auto [a, b] = mesh.edge_of(el.id, i);
      const double len = distance(a, b);
      const Eigen::Vector2d n{(b.y - a.y) / len, -(b.x - a.x) / len};
      const double flux = v.gradient(el.id).dot(n);
      for (std::size_t q = 0; q < rule.size(); ++q)
        total += rule.weights[q] * len * flux * w.value(el.id, a + rule.points[q] * (b - a));
    }
  }
  return total;
}

/// <{grad v}, [w]> over all segments plus sum over internal segments of
/// int [grad v]{w}, integrated segment by segment.
inline double skeleton_flux_split(const PolygonalMesh& mesh, const PiecewiseLinear& v, const PiecewiseLinear& w,
                                  int points = 16) {
  const LineRule rule = gauss_legendre(points);
  double total = 0.0;
  for (const InterfaceSegment& seg : mesh.segments()) {
    const Eigen::Vector2d n = to_eigen(seg.normal);
    const Index kp = seg.plus.element;
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Point x = seg.at(rule.points[q]);
      const double wq = rule.weights[q] * seg.length;
      if (seg.internal()) {
        const Index km = seg.minus->element;
        const Eigen::Vector2d avg = 0.5 * (v.gradient(kp) + v.gradient(km));
        const double jump_w = w.value(kp, x) - w.value(km, x);          // [w] = jump_w n
        const double jump_grad = (v.gradient(kp) - v.gradient(km)).dot(n); // [grad v]
        const double avg_w = 0.5 * (w.value(kp, x) + w.value(km, x));
        total += wq * (avg.dot(n) * jump_w + jump_grad * avg_w);
      } else {
        total += wq * v.gradient(kp).dot(n) * w.value(kp, x);
      }
    }
  }
  return total;
}

} // namespace dvem

#endif // DVEM_DG_FORMS_HPP
