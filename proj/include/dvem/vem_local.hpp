#ifndef DVEM_VEM_LOCAL_HPP
#define DVEM_VEM_LOCAL_HPP

#include <cstdio>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dvem/mesh.hpp"

namespace dvem {

/// Scaled monomials m0 = 1, m1 = (x - x_K)/h_K, m2 = (y - y_K)/h_K with their
/// exact mass moments.
struct MonomialBasis {
  Index element = 0;
  Point centroid;
  double h = 1.0;
  double area = 0.0;
  Eigen::Matrix3d moments = Eigen::Matrix3d::Zero(); ///< int_K m_i m_j

  [[nodiscard]] Eigen::Vector3d values(Point p) const {
    return {1.0, (p.x - centroid.x) / h, (p.y - centroid.y) / h};
  }
  /// int_K grad m_i . grad m_j
  [[nodiscard]] Eigen::Matrix3d stiffness() const {
    Eigen::Matrix3d k = Eigen::Matrix3d::Zero();
    k(1, 1) = k(2, 2) = area / (h * h);
    return k;
  }
  /// Gradient of sum_i c_i m_i (constant on K).
  [[nodiscard]] Eigen::Vector2d gradient(const Eigen::Vector3d& c) const { return c.tail<2>() / h; }
  [[nodiscard]] double evaluate(const Eigen::Vector3d& c, Point p) const { return c.dot(values(p)); }
};

/// Builds the monomial basis of a counterclockwise polygon. Moments are exact:
/// the polygon is fanned into triangles from the centroid and each triangle is
/// integrated with the edge-midpoint rule, exact for quadratics.
inline MonomialBasis make_monomial_basis(Index element, std::span<const Point> polygon) {
  MonomialBasis basis;
  basis.element = element;
  const std::size_t n = polygon.size();
  double area2 = 0.0;
  Point c{0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const Point p = polygon[i];
    const Point q = polygon[(i + 1) % n];
    const double w = cross(p, q);
    area2 += w;
    c = c + (w / 3.0) * (p + q);
  }
  basis.area = 0.5 * area2;
  if (!(basis.area > 0.0)) throw ElementError(element, "non-positive area (degenerate or clockwise)");
  basis.centroid = (1.0 / area2) * c;
  double diam = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) diam = std::max(diam, distance(polygon[i], polygon[j]));
  basis.h = diam;

  for (std::size_t i = 0; i < n; ++i) {
    const Point p0 = basis.centroid;
    const Point p1 = polygon[i];
    const Point p2 = polygon[(i + 1) % n];
    const double tri = 0.5 * cross(p1 - p0, p2 - p0);
    for (const Point& mid : {0.5 * (p0 + p1), 0.5 * (p1 + p2), 0.5 * (p2 + p0)}) {
      const Eigen::Vector3d m = basis.values(mid);
      basis.moments += (tri / 3.0) * (m * m.transpose());
    }
  }
  return basis;
}

/// Elliptic projector onto P1 for the lowest-order local space.
///
/// P (3 x N) maps vertex values to monomial coefficients of the projection,
/// D (N x 3) holds the vertex values of the monomials, so P * D = I.
struct LocalProjector {
  Index element = 0;
  MonomialBasis basis;
  Eigen::MatrixXd P;
  Eigen::MatrixXd D;

  [[nodiscard]] int num_dofs() const { return static_cast<int>(D.rows()); }
  [[nodiscard]] Eigen::Vector3d coefficients(const Eigen::Ref<const Eigen::VectorXd>& v) const { return P * v; }
  /// Constant gradient of the projection of local basis function j.
  [[nodiscard]] Eigen::Vector2d basis_gradient(int j) const {
    return basis.gradient(P.col(j));
  }
  [[nodiscard]] Eigen::Vector2d gradient(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    return basis.gradient(P * v);
  }
  [[nodiscard]] double value(const Eigen::Ref<const Eigen::VectorXd>& v, Point x) const {
    return basis.evaluate(P * v, x);
  }
};

/// Builds the projector from boundary data only.
///
/// Gradient rows: (grad Pi v, grad p)_K = int_{dK} v (grad p . n) ds, exact
/// because v is linear on each edge and grad p is constant. Constant row: the
/// boundary mean of v, which the trapezoid rule integrates exactly.
inline LocalProjector build_projector(Index element, std::span<const Point> polygon) {
  const int n = static_cast<int>(polygon.size());
  if (n < 3) throw ElementError(element, "fewer than three vertices");
  LocalProjector proj;
  proj.element = element;
  proj.basis = make_monomial_basis(element, polygon);
  const double h = proj.basis.h;

  std::vector<double> len(static_cast<std::size_t>(n));
  std::vector<Point> nrm(static_cast<std::size_t>(n));
  double perimeter = 0.0;
  for (int i = 0; i < n; ++i) {
    const Point a = polygon[static_cast<std::size_t>(i)];
    const Point b = polygon[static_cast<std::size_t>((i + 1) % n)];
    const double l = distance(a, b);
    if (!(l > 0.0)) throw ElementError(element, "repeated vertex");
    len[static_cast<std::size_t>(i)] = l;
    nrm[static_cast<std::size_t>(i)] = {(b.y - a.y) / l, -(b.x - a.x) / l};
    perimeter += l;
  }

  Eigen::MatrixXd B(3, n);
  proj.D.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    const auto prev = static_cast<std::size_t>((i + n - 1) % n);
    const auto cur = static_cast<std::size_t>(i);
    B(0, i) = 0.5 * (len[prev] + len[cur]) / perimeter;
    B(1, i) = 0.5 * (len[prev] * nrm[prev].x + len[cur] * nrm[cur].x) / h;
    B(2, i) = 0.5 * (len[prev] * nrm[prev].y + len[cur] * nrm[cur].y) / h;
    proj.D.row(i) = proj.basis.values(polygon[cur]).transpose();
  }
  const Eigen::Matrix3d G = B * proj.D;
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(G);
  if (lu.rank() < 3 || std::abs(G.determinant()) < 1e-12)
    throw ElementError(element, "singular projector Gram matrix");
  proj.P = lu.solve(B);
  return proj;
}

inline LocalProjector build_projector(const PolygonalMesh& mesh, Index element) {
  const auto pts = mesh.element_points(element);
  return build_projector(element, pts);
}

/// S = sigma_K (I - D P)^T (I - D P) with sigma_K = 1 + |K|. Vanishes on P1.
inline Eigen::MatrixXd stabilization(const LocalProjector& proj) {
  const int n = proj.num_dofs();
  const Eigen::MatrixXd R = Eigen::MatrixXd::Identity(n, n) - proj.D * proj.P;
  const double sigma = 1.0 + proj.basis.area;
  return sigma * (R.transpose() * R);
}

struct LocalForms {
  Index element = 0;
  Eigen::MatrixXd A_pi; ///< a^K(Pi phi_i, Pi phi_j), gradient and mass parts
  Eigen::MatrixXd S;
  Eigen::MatrixXd A_h;  ///< A_pi + S
  Eigen::MatrixXd M_pi; ///< (Pi phi_i, Pi phi_j)_K
};

inline LocalForms local_form(const LocalProjector& proj, const Eigen::MatrixXd& S) {
  LocalForms f;
  f.element = proj.element;
  const Eigen::Matrix3d mass = proj.basis.moments;
  const Eigen::Matrix3d energy = proj.basis.stiffness() + mass;
  f.A_pi = proj.P.transpose() * energy * proj.P;
  f.M_pi = proj.P.transpose() * mass * proj.P;
  f.S = S;
  f.A_h = f.A_pi + f.S;
  return f;
}

inline LocalForms local_form(const LocalProjector& proj) { return local_form(proj, stabilization(proj)); }

/// Coefficients of Pi v; for members of the local space this is also the
/// L2(K) projection onto P1.
inline Eigen::Vector3d l2_project(const LocalProjector& proj, const Eigen::Ref<const Eigen::VectorXd>& v) {
  return proj.P * v;
}

/// Projector and forms of every element of a mesh.
struct LocalElementOps {
  std::vector<LocalProjector> projectors;
  std::vector<LocalForms> forms;

  [[nodiscard]] const LocalProjector& projector(Index k) const { return projectors.at(static_cast<std::size_t>(k)); }
  [[nodiscard]] const LocalForms& form(Index k) const { return forms.at(static_cast<std::size_t>(k)); }
};

inline LocalElementOps build_local_ops(const PolygonalMesh& mesh) {
  LocalElementOps ops;
  ops.projectors.reserve(static_cast<std::size_t>(mesh.num_elements()));
  ops.forms.reserve(static_cast<std::size_t>(mesh.num_elements()));
  for (Index k = 0; k < mesh.num_elements(); ++k) {
    ops.projectors.push_back(build_projector(mesh, k));
    ops.forms.push_back(local_form(ops.projectors.back()));
  }
  return ops;
}

/// Text dump of P, D and A_h per element for golden-file regression.
inline void write_local_dump(std::ostream& out, const LocalElementOps& ops) {
  auto block = [&out](const char* name, const Eigen::MatrixXd& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    char buf[32];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        std::snprintf(buf, sizeof buf, "%.15e", m(i, j));
        out << (j ? " " : "") << buf;
      }
      out << '\n';
    }
  };
  for (std::size_t k = 0; k < ops.projectors.size(); ++k) {
    out << "element " << ops.projectors[k].element << '\n';
    block("P", ops.projectors[k].P);
    block("D", ops.projectors[k].D);
    block("A_h", ops.forms[k].A_h);
  }
}

} // namespace dvem

#endif // DVEM_VEM_LOCAL_HPP
