#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "dvem/quadrature.hpp"
#include "dvem/vem_local.hpp"
#include "test_support.hpp"

using namespace dvem;
using dvem::testing::energy_linear;
using dvem::testing::projector_residual;
using dvem::testing::random_parallelogram;

namespace {

std::vector<Point> unit_square() { return {{0, 0}, {1, 0}, {1, 1}, {0, 1}}; }

} // namespace

TEST(MonomialBasis, MomentsOfUnitSquare) {
  const auto sq = unit_square();
  const auto b = make_monomial_basis(0, sq);
  EXPECT_NEAR(b.area, 1.0, 1e-15);
  EXPECT_NEAR(b.moments(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(b.h, std::sqrt(2.0), 1e-15);
  // int (x - 1/2)^2 / h^2 = (1/12) / 2
  EXPECT_NEAR(b.moments(1, 1), 1.0 / 24.0, 1e-15);
  EXPECT_NEAR(b.moments(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(b.moments(1, 2), 0.0, 1e-15);
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(b.moments);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(Projector, ReproducesLinearMonomial) {
  const auto sq = unit_square();
  const auto proj = build_projector(0, sq);
  Eigen::VectorXd v(4);
  for (int i = 0; i < 4; ++i) v(i) = proj.basis.values(sq[static_cast<std::size_t>(i)])(1);
  const Eigen::Vector3d c = proj.coefficients(v);
  EXPECT_NEAR(c(0), 0.0, 1e-14);
  EXPECT_NEAR(c(1), 1.0, 1e-14);
  EXPECT_NEAR(c(2), 0.0, 1e-14);
}

TEST(Projector, CornerFunctionSatisfiesDefiningEquations) {
  const auto sq = unit_square();
  const auto proj = build_projector(0, sq);
  const Eigen::VectorXd v = Eigen::Vector4d(1, 0, 0, 0);
  const auto r = projector_residual(sq, proj, v);
  EXPECT_LE(r.gradient, 1e-14);
  EXPECT_LE(r.mean, 1e-14);
}

TEST(Projector, ConstantIsFixed) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto poly = random_parallelogram(rng);
    const auto proj = build_projector(0, poly);
    const Eigen::Vector3d c = proj.coefficients(Eigen::VectorXd::Constant(4, 2.5));
    EXPECT_NEAR(c(0), 2.5, 1e-13);
    EXPECT_NEAR(c(1), 0.0, 1e-13);
    EXPECT_NEAR(c(2), 0.0, 1e-13);
  }
}

TEST(Projector, IdempotentAndReproducesP1) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto poly = random_parallelogram(rng);
    const auto proj = build_projector(0, poly);
    EXPECT_LE((proj.P * proj.D - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((proj.P * proj.D * proj.P - proj.P).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Projector, DefiningEquationsOnRandomData) {
  std::mt19937 rng(5);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    const auto poly = random_parallelogram(rng);
    const auto proj = build_projector(0, poly);
    Eigen::VectorXd v(4);
    for (int i = 0; i < 4; ++i) v(i) = normal(rng);
    const auto r = projector_residual(poly, proj, v);
    EXPECT_LE(r.gradient, 1e-12);
    EXPECT_LE(r.mean, 1e-12);
  }
}

TEST(Projector, GeneralPolygons) {
  // Pentagon and hexagon: the construction only needs boundary data.
  const std::vector<Point> penta{{0, 0}, {2, 0}, {2.5, 1}, {1, 2}, {-0.5, 1}};
  std::vector<Point> hexa;
  for (int i = 0; i < 6; ++i) hexa.push_back({std::cos(i * M_PI / 3), std::sin(i * M_PI / 3)});
  std::mt19937 rng(1);
  std::normal_distribution<double> normal;
  for (const auto& poly : {penta, hexa}) {
    const auto proj = build_projector(0, poly);
    const Eigen::Index n = static_cast<Eigen::Index>(poly.size());
    EXPECT_LE((proj.P * proj.D - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
    const auto r = projector_residual(poly, proj, v);
    EXPECT_LE(r.gradient, 1e-12);
    EXPECT_LE(r.mean, 1e-12);
  }
}

TEST(Projector, DegenerateElementReportsId) {
  const std::vector<Point> flat{{0, 0}, {1, 0}, {2, 0}, {1, 1e-300}};
  try {
    build_projector(17, flat);
    FAIL() << "expected ElementError";
  } catch (const ElementError& e) {
    EXPECT_EQ(e.element(), 17);
  }
}

TEST(Stabilization, VanishesOnP1AndIsSymmetric) {
  std::mt19937 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const auto poly = random_parallelogram(rng);
    const auto proj = build_projector(0, poly);
    const Eigen::MatrixXd S = stabilization(proj);
    EXPECT_LE((S * proj.D).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((S - S.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Stabilization, CheckerboardHasZeroProjectionPositiveEnergy) {
  const auto sq = unit_square();
  const auto proj = build_projector(0, sq);
  const Eigen::VectorXd v = Eigen::Vector4d(1, -1, 1, -1);
  EXPECT_LE(proj.coefficients(v).cwiseAbs().maxCoeff(), 1e-15);
  const Eigen::MatrixXd S = stabilization(proj);
  EXPECT_GT(v.dot(S * v), 0.0);
  // (I - DP) v = v, so S(v,v) = (1 + |K|) |v|^2.
  EXPECT_NEAR(v.dot(S * v), 2.0 * 4.0, 1e-13);
}

TEST(Stabilization, ScalesLikeEnergyOnKernel) {
  // On ker Pi the ratio S(v,v) / a_h(v,v) stays bounded when h is halved.
  const auto sq = unit_square();
  std::vector<Point> half;
  for (const Point& p : sq) half.push_back(0.5 * p);
  const Eigen::VectorXd v = Eigen::Vector4d(1, -1, 1, -1);
  const auto f1 = local_form(build_projector(0, sq));
  const auto f2 = local_form(build_projector(0, half));
  const double s1 = v.dot(f1.S * v);
  const double s2 = v.dot(f2.S * v);
  EXPECT_GT(s2 / s1, 0.25);
  EXPECT_LT(s2 / s1, 4.0);
}

TEST(LocalForm, UnitSquareConstantEnergy) {
  const auto f = local_form(build_projector(0, unit_square()));
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(4);
  EXPECT_NEAR(one.dot(f.A_h * one), 1.0, 1e-14);
  EXPECT_LE((f.A_h - f.A_h.transpose()).cwiseAbs().maxCoeff(), 1e-13);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f.A_h);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(LocalForm, ConstantTestFunctionGivesMean) {
  std::mt19937 rng(21);
  std::normal_distribution<double> normal;
  const auto poly = random_parallelogram(rng);
  const auto proj = build_projector(0, poly);
  const auto f = local_form(proj);
  Eigen::VectorXd v(4);
  for (int i = 0; i < 4; ++i) v(i) = normal(rng);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(4);
  // int_K Pi v = |K| * (value of Pi v at the centroid)
  EXPECT_NEAR(one.dot(f.A_h * v), proj.basis.area * proj.coefficients(v)(0), 1e-12);
}

TEST(LocalForm, KConsistencyAgainstQuadratureOracle) {
  std::mt19937 rng(2024);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    const auto poly = random_parallelogram(rng);
    const auto proj = build_projector(0, poly);
    const auto f = local_form(proj);
    Eigen::VectorXd v(4);
    for (int i = 0; i < 4; ++i) v(i) = normal(rng);
    const Eigen::Vector3d pc(normal(rng), normal(rng), normal(rng)); // p = pc0 + pc1 x + pc2 y
    Eigen::VectorXd pd(4);
    for (int i = 0; i < 4; ++i)
      pd(i) = pc(0) + pc(1) * poly[static_cast<std::size_t>(i)].x + pc(2) * poly[static_cast<std::size_t>(i)].y;
    auto p = [&](Point x) { return pc(0) + pc(1) * x.x + pc(2) * x.y; };
    auto piv = [&](Point x) { return proj.value(v, x); };
    const double oracle = energy_linear(poly, p, pc.tail<2>(), piv, proj.gradient(v));
    EXPECT_NEAR(pd.dot(f.A_h * v), oracle, 1e-12 * (1 + std::abs(oracle)));
  }
}

TEST(L2Project, ConstantsAndLinears) {
  std::mt19937 rng(8);
  const auto poly = random_parallelogram(rng);
  const auto proj = build_projector(0, poly);
  const Eigen::Vector3d c = l2_project(proj, Eigen::VectorXd::Constant(4, -3.0));
  EXPECT_NEAR(c(0), -3.0, 1e-13);
  EXPECT_NEAR(c.tail<2>().norm(), 0.0, 1e-13);
  const Eigen::VectorXd v = proj.D.col(2) * 1.5;
  EXPECT_NEAR((l2_project(proj, v) - Eigen::Vector3d(0, 0, 1.5)).norm(), 0.0, 1e-13);
}

TEST(L2Project, SineDataSatisfiesProjectorEquations) {
  std::vector<Point> small{{0.3, 0.2}, {0.4, 0.2}, {0.4, 0.3}, {0.3, 0.3}};
  const auto proj = build_projector(0, small);
  Eigen::VectorXd v(4);
  for (int i = 0; i < 4; ++i) v(i) = std::sin(5 * small[static_cast<std::size_t>(i)].x + small[static_cast<std::size_t>(i)].y);
  const auto r = projector_residual(small, proj, v);
  EXPECT_LE(r.gradient, 1e-14);
  EXPECT_LE(r.mean, 1e-14);
}

TEST(LocalOps, DumpIsDeterministic) {
  std::vector<Point> v{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const PolygonalMesh mesh(Rect{}, BoundaryPartition{}, v, {{0, 1, 2, 3}});
  const auto ops = build_local_ops(mesh);
  std::ostringstream a, b;
  write_local_dump(a, ops);
  write_local_dump(b, build_local_ops(mesh));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str().find("A_h 4 4"), std::string::npos);
}
