#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dvem/analysis.hpp"
#include "test_support.hpp"

using namespace dvem;
using dvem::testing::corner_refined_mesh;
using dvem::testing::figure1_mesh;
using dvem::testing::random_vector;

namespace {

ExactSolutionCase linear_case(double a, double b, double c) {
  ExactSolutionCase s;
  s.name = "linear";
  s.u = [=](Point p) { return a + b * p.x + c * p.y; };
  s.gradient = [=](Point) { return Eigen::Vector2d(b, c); };
  s.hessian = [](Point) { return Eigen::Matrix2d::Zero().eval(); };
  s.f = s.u;
  return s;
}

struct Rates {
  double l2 = 0.0;
  double h1 = 0.0;
};

// Observed rates from the last two of a sequence of uniform meshes.
template <class ErrorFn>
Rates observed_rates(ErrorFn error, int levels = 4) {
  std::vector<double> h, l2, h1;
  for (int l = 0; l < levels; ++l) {
    const PolygonalMesh m = build_uniform(Rect{}, 4 << l);
    const BrokenNorms e = error(m);
    h.push_back(m.h());
    l2.push_back(e.l2());
    h1.push_back(e.grad());
  }
  return {*eoc(h, l2).back(), *eoc(h, h1).back()};
}

} // namespace

TEST(BrokenNorm, ConstantOneOnUnitSquare) {
  const PolygonalMesh m = build_uniform(Rect{}, 4);
  const BrokenNorms n = norm_1dg(m, [](Point) { return 1.0; }, [](Point) { return Eigen::Vector2d::Zero().eval(); });
  EXPECT_NEAR(n.l2_2, 1.0, 1e-14);
  EXPECT_NEAR(n.grad2, 0.0, 1e-14);
  EXPECT_NEAR(n.penalty, 16.0, 1e-12); // one per boundary segment
  EXPECT_NEAR(n.norm_1dg() * n.norm_1dg(), 17.0, 1e-12);
}

TEST(BrokenNorm, LinearXOnUnitSquare) {
  for (int n : {2, 4, 8}) {
    const PolygonalMesh m = build_uniform(Rect{}, n);
    const BrokenNorms b = norm_1dg(m, [](Point p) { return p.x; }, [](Point) { return Eigen::Vector2d(1, 0); });
    EXPECT_NEAR(b.grad2, 1.0, 1e-13);
    EXPECT_NEAR(b.l2_2, 1.0 / 3.0, 1e-13);
    // Bottom and top give (1/h) * 1/3 each, the right side n * 1, the left 0.
    EXPECT_NEAR(b.penalty, 5.0 * n / 3.0, 1e-11) << "n = " << n;
  }
}

TEST(BrokenNorm, DofNormMatchesNormMatrix) {
  std::mt19937 rng(17);
  for (const PolygonalMesh& m : {figure1_mesh(), corner_refined_mesh()}) {
    const LocalElementOps ops = build_local_ops(m);
    const DofMap dofs = DofMap::build(m);
    const SparseMatrix N = norm_matrix(assemble_forms(m, dofs, ops));
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::VectorXd v = random_vector(dofs.size(), rng);
      const double quad = norm_1dg(m, ops, v).norm_1dg();
      EXPECT_NEAR(quad * quad, v.dot(N * v), 1e-11 * (1 + v.dot(N * v)));
    }
  }
}

TEST(BrokenNorm, ContinuousFieldHasOnlyBoundaryJumps) {
  const PolygonalMesh m = corner_refined_mesh();
  const BrokenNorms n = norm_1dg(m, [](Point) { return 1.0; }, [](Point) { return Eigen::Vector2d::Zero().eval(); });
  EXPECT_NEAR(n.penalty, static_cast<double>(m.count(SegmentKind::boundary)), 1e-12);
}

TEST(Interpolant, VertexValues) {
  const PolygonalMesh m = figure1_mesh();
  const Eigen::VectorXd v = interpolant_uI(m, [](Point p) { return p.x + 10 * p.y; });
  const DofMap dofs = DofMap::build(m);
  for (Index k = 0; k < m.num_elements(); ++k) {
    for (int i = 0; i < dofs.num_local(k); ++i) {
      const Point x = m.vertex_of(k, i);
      EXPECT_DOUBLE_EQ(v(dofs.dof(k, i)), x.x + 10 * x.y);
    }
  }
}

TEST(Interpolant, ReproducesLinearFieldsExactly) {
  const ExactSolutionCase c = linear_case(0.5, -2.0, 3.0);
  for (const PolygonalMesh& m : {figure1_mesh(), corner_refined_mesh()}) {
    const LocalElementOps ops = build_local_ops(m);
    const BrokenNorms e = error_against_exact(m, ops, c, interpolant_uI(m, c.u));
    EXPECT_LE(e.norm_2dg(), 1e-12);
  }
}

TEST(Projection, ReproducesLinearFields) {
  const PolygonalMesh m = corner_refined_mesh();
  const PiecewiseLinear p = projection_upi(m, [](Point q) { return 1.0 - q.x + 4 * q.y; });
  for (Index k = 0; k < m.num_elements(); ++k) {
    const Point b = m.element(k).barycenter;
    EXPECT_NEAR(p.value(k, b), 1.0 - b.x + 4 * b.y, 1e-13);
    EXPECT_NEAR(p.gradient(k)(0), -1.0, 1e-12);
    EXPECT_NEAR(p.gradient(k)(1), 4.0, 1e-12);
  }
}

TEST(Projection, QuadraticOnUnitSquare) {
  // L2(0,1) projection of x^2 onto span{1, x} is x - 1/6.
  const PolygonalMesh m = build_uniform(Rect{}, 1);
  const PiecewiseLinear p = projection_upi(m, [](Point q) { return q.x * q.x; });
  for (Point x : {Point{0, 0}, Point{0.3, 0.7}, Point{1, 1}}) EXPECT_NEAR(p.value(0, x), x.x - 1.0 / 6.0, 1e-13);
}

TEST(Projection, IsElementwiseOrthogonal) {
  const PolygonalMesh m = figure1_mesh();
  auto u = [](Point q) { return std::sin(3 * q.x) * std::exp(q.y); };
  const PiecewiseLinear p = projection_upi(m, u, 8);
  for (const Element& el : m.elements()) {
    const ElementQuadrature q = element_quadrature(el, 8);
    Eigen::Vector3d moments = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < q.points.size(); ++i) {
      const Point x = q.points[i];
      const double r = u(x) - p.value(el.id, x);
      moments += q.weights[i] * r * Eigen::Vector3d(1, x.x, x.y);
    }
    EXPECT_LE(moments.cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Approximation, InterpolantRates) {
  const ExactSolutionCase c = clamped_stick_case();
  const Rates r = observed_rates([&](const PolygonalMesh& m) {
    return error_against_exact(m, build_local_ops(m), c, interpolant_uI(m, c.u));
  });
  EXPECT_NEAR(r.l2, 2.0, 0.25);
  EXPECT_NEAR(r.h1, 1.0, 0.25);
}

TEST(Approximation, ProjectionRates) {
  const ExactSolutionCase c = clamped_stick_case();
  const Rates r = observed_rates([&](const PolygonalMesh& m) { return projection_error(m, c, projection_upi(m, c.u)); });
  EXPECT_NEAR(r.l2, 2.0, 0.25);
  EXPECT_NEAR(r.h1, 1.0, 0.25);
}

TEST(Residual, VanishesForLinearSolutionWithoutFriction) {
  // Linear u with f = u, no Gamma_2 and zero normal derivative is impossible
  // unless u is constant; take u = 1.
  ExactSolutionCase c = linear_case(1.0, 0.0, 0.0);
  c.partition = BoundaryPartition::all(BoundaryTag::gamma1);
  PolygonalMesh m = build_uniform(Rect{}, 3, c.partition);
  const std::vector<Index> first{0};
  m = refine_local(refine_local(m, first), first);
  const LocalElementOps ops = build_local_ops(m);
  std::mt19937 rng(5);
  const Eigen::VectorXd v = random_vector(DofMap::build(m).size(), rng);
  // R(u, v) = (grad u, grad v - grad u) + (u - f, v - u) - 0 = 0 for every v.
  EXPECT_NEAR(residual_R(m, ops, c, v), 0.0, 1e-12);
}

TEST(Residual, InterpolantRateForClampedCase) {
  const ExactSolutionCase c = clamped_stick_case();
  std::vector<double> h, r;
  // n = 8 ... 64: the coarsest 4x4 mesh is still pre-asymptotic for R.
  for (int l = 0; l < 4; ++l) {
    const PolygonalMesh m = build_uniform(Rect{}, 8 << l, c.partition);
    h.push_back(m.h());
    r.push_back(std::abs(residual_R(m, build_local_ops(m), c, interpolant_uI(m, c.u))));
  }
  const auto rates = eoc(h, r);
  for (std::size_t i = 1; i < rates.size(); ++i) {
    ASSERT_TRUE(rates[i].has_value());
    EXPECT_GE(*rates[i], 1.6) << "level " << i;
  }
}

TEST(Eoc, KnownSequences) {
  const auto r = eoc({0.5, 0.25}, {0.4, 0.1});
  EXPECT_FALSE(r[0].has_value());
  EXPECT_NEAR(*r[1], 2.0, 1e-14);
  const auto z = eoc({0.5, 0.25, 0.125}, {0.1, 0.0, 0.0});
  EXPECT_FALSE(z[1].has_value());
  EXPECT_FALSE(z[2].has_value());
  EXPECT_THROW((void)eoc({1.0}, {}), ConfigError);
}

TEST(ReferenceError, LinearFieldHasNoError) {
  const PolygonalMesh coarse = figure1_mesh();
  const PolygonalMesh middle = refine_all(coarse);
  const PolygonalMesh fine = refine_all(middle);
  std::vector<Index> ancestor;
  for (Index k = 0; k < fine.num_elements(); ++k) ancestor.push_back(middle.parent(fine.parent(k)));
  auto u = [](Point p) { return 2.0 - p.x + 0.5 * p.y; };
  const BrokenNorms e = error_against_reference(coarse, build_local_ops(coarse), interpolant_uI(coarse, u), fine,
                                                build_local_ops(fine), interpolant_uI(fine, u), ancestor);
  EXPECT_LE(e.norm_1dg(), 1e-12);
}

TEST(ReferenceError, DetectsCoarseJumps) {
  // A coarse field that jumps across the coarse skeleton, compared with a
  // continuous fine field equal to it in the interior of one element.
  const PolygonalMesh coarse = build_uniform(Rect{}, 2);
  const PolygonalMesh middle = refine_all(coarse);
  const PolygonalMesh fine = refine_all(middle);
  std::vector<Index> ancestor;
  for (Index k = 0; k < fine.num_elements(); ++k) ancestor.push_back(middle.parent(fine.parent(k)));
  const DofMap cd = DofMap::build(coarse);
  Eigen::VectorXd uh = Eigen::VectorXd::Zero(cd.size());
  for (int i = 0; i < cd.num_local(0); ++i) uh(cd.dof(0, i)) = 1.0;
  const Eigen::VectorXd uref = Eigen::VectorXd::Zero(DofMap::build(fine).size());
  const BrokenNorms e = error_against_reference(coarse, build_local_ops(coarse), uh, fine, build_local_ops(fine),
                                                uref, ancestor);
  // Element 0 is a quarter of the square: l2 = 1/4, its four sides carry a unit jump.
  EXPECT_NEAR(e.l2_2, 0.25, 1e-12);
  EXPECT_NEAR(e.grad2, 0.0, 1e-12);
  EXPECT_NEAR(e.penalty, 16.0, 1e-10); // 4 sides x 4 fine segments of unit jump
}
