#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "dvem/vi_solver.hpp"
#include "test_support.hpp"

using namespace dvem;
using dvem::testing::figure1_mesh;
using dvem::testing::kkt_residual;
using dvem::testing::system_for;
using dvem::testing::Tiny;
using dvem::testing::tiny_configs;
using dvem::testing::random_vector;

TEST(DirectSolve, Identity) {
  SparseMatrix I(3, 3);
  I.setIdentity();
  const Eigen::Vector3d b(1, -2, 3);
  EXPECT_LE((sparse_direct_solve(I, b) - b).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(DirectSolve, TwoByTwo) {
  SparseMatrix A(2, 2);
  A.insert(0, 0) = 2;
  A.insert(0, 1) = 1;
  A.insert(1, 0) = 1;
  A.insert(1, 1) = 2;
  const Eigen::VectorXd x = sparse_direct_solve(A, Eigen::Vector2d(1, 1));
  EXPECT_NEAR(x(0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(x(1), 1.0 / 3.0, 1e-15);
}

TEST(DirectSolve, RandomSpdAgreesWithDenseCholesky) {
  std::mt19937 rng(3);
  const Eigen::MatrixXd M = Eigen::MatrixXd::NullaryExpr(50, 50, [&] { return std::normal_distribution<>{}(rng); });
  const Eigen::MatrixXd A = M * M.transpose() + 50.0 * Eigen::MatrixXd::Identity(50, 50);
  const Eigen::VectorXd b = random_vector(50, rng);
  const Eigen::VectorXd x = sparse_direct_solve(A.sparseView(), b);
  const Eigen::VectorXd ref = A.llt().solve(b);
  EXPECT_LE((x - ref).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((A * x - b).cwiseAbs().maxCoeff(), 1e-10 * (1 + b.cwiseAbs().maxCoeff()));
}

TEST(DirectSolve, SingularMatrixThrows) {
  SparseMatrix A(2, 2);
  A.insert(0, 0) = 1;
  A.insert(0, 1) = 1;
  A.insert(1, 0) = 1;
  A.insert(1, 1) = 1;
  EXPECT_THROW((void)sparse_direct_solve(A, Eigen::Vector2d(1, 0)), SolverError);
}

TEST(Uzawa, RejectsBadConfig) {
  const GlobalSystem sys = system_for(build_uniform(Rect{}, 2), [](Point) { return 1.0; }, 1.0);
  SolverConfig c;
  c.tol = 0;
  EXPECT_THROW((void)solve_uzawa(sys, c), ConfigError);
  c = {};
  c.rho = -1;
  EXPECT_THROW((void)solve_uzawa(sys, c), ConfigError);
  c = {};
  c.max_iter = 0;
  EXPECT_THROW((void)solve_uzawa(sys, c), ConfigError);
  c = {};
  c.lambda0 = Eigen::VectorXd::Zero(3);
  EXPECT_THROW((void)solve_uzawa(sys, c), ConfigError);
}

TEST(Uzawa, MaxIterExceededIsReported) {
  const GlobalSystem sys = system_for(build_uniform(Rect{}, 3), [](Point) { return 4.0; }, 0.3);
  SolverConfig c;
  c.max_iter = 2;
  c.tol = 1e-14;
  try {
    (void)solve_uzawa(sys, c);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_NE(std::string(e.what()).find("max_iter"), std::string::npos);
  }
}

TEST(Uzawa, ZeroLoadGivesZeroSolution) {
  const GlobalSystem sys = system_for(build_uniform(Rect{}, 4), [](Point) { return 0.0; }, 1.0);
  const VISolution sol = solve_uzawa(sys);
  EXPECT_LE(sol.u.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Uzawa, LargeFrictionBoundDrivesTracesToZero) {
  double previous = std::numeric_limits<double>::infinity();
  for (double g : {0.5, 2.0, 10.0, 100.0, 1e3}) {
    const GlobalSystem sys = system_for(build_uniform(Rect{}, 4), [](Point p) { return 4.0 + 4.0 * p.x; }, g);
    const VISolution sol = solve_uzawa(sys);
    const double t = (trace_matrix(sys.friction, sys.size()) * sol.u).cwiseAbs().maxCoeff();
    // Once the boundary sticks, the traces sit at the solver tolerance.
    EXPECT_LE(t, std::max(previous, 1e-8)) << "g = " << g;
    previous = t;
    EXPECT_LE(sol.lambda.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_LE(kkt_residual(sys, sol.u, sol.lambda), 1e-9 * (1.0 + g)) << "g = " << g;
  }
  EXPECT_LE(previous, 1e-8);
}

TEST(Uzawa, SmallFrictionBoundSlipsEverywhere) {
  const GlobalSystem sys = system_for(build_uniform(Rect{}, 4), [](Point) { return 5.0; }, 0.05);
  const VISolution sol = solve_uzawa(sys);
  for (Index q = 0; q < sol.lambda.size(); ++q) EXPECT_NEAR(sol.lambda(q), 1.0, 1e-12);
  EXPECT_LE(kkt_residual(sys, sol.u, sol.lambda), 1e-8);
}

TEST(Uzawa, TraceWritesOneRowPerIteration) {
  const GlobalSystem sys = system_for(build_uniform(Rect{}, 2), [](Point) { return 4.0; }, 0.3);
  std::ostringstream out;
  SolverConfig c;
  c.trace = &out;
  const VISolution sol = solve_uzawa(sys, c);
  const std::string s = out.str();
  EXPECT_EQ(s.rfind("iteration,residual,energy,rho\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), sol.iterations + 1);
}

TEST(Uzawa, EnergyIncreaseAfterBurnInHalvesStep) {
  const GlobalSystem sys = system_for(build_uniform(Rect{}, 4), [](Point p) { return 10.0 * std::cos(3.0 * p.x); }, 1.0);
  std::ostringstream trace;
  SolverConfig c;
  c.trace = &trace;
  const VISolution sol = solve_uzawa(sys, c);
  std::istringstream in(trace.str());
  std::string line;
  std::getline(in, line);
  std::vector<double> energy, rho;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string field;
    std::vector<double> v;
    while (std::getline(row, field, ',')) v.push_back(std::stod(field));
    ASSERT_EQ(v.size(), 4u);
    energy.push_back(v[2]);
    rho.push_back(v[3]);
  }
  ASSERT_EQ(energy.size(), static_cast<std::size_t>(sol.iterations));
  int increases = 0;
  for (std::size_t n = 4; n + 1 < energy.size(); ++n) {
    if (energy[n] > energy[n - 1] + 1e-10 * (1 + std::abs(energy[n - 1]))) {
      ++increases;
      EXPECT_DOUBLE_EQ(rho[n + 1], 0.5 * rho[n]) << "n = " << n;
    }
  }
  EXPECT_LE(increases, sol.rho_halvings);
  EXPECT_LE(sol.energies.back(), sol.energies[3]);
}

TEST(SignPatterns, CountAndRealizability) {
  for (int q : {1, 2, 3, 4}) {
    const auto patterns = detail::linear_sign_patterns(q);
    EXPECT_EQ(patterns.size(), q == 1 ? 3u : static_cast<std::size_t>(4 * q + 1)) << "q = " << q;
    std::set<std::vector<int>> unique(patterns.begin(), patterns.end());
    EXPECT_EQ(unique.size(), patterns.size());
    // Every pattern comes from some line c (t - r) sampled at q increasing points.
    const LineRule rule = gauss_legendre(q);
    std::set<std::vector<int>> realized{std::vector<int>(static_cast<std::size_t>(q), 0)};
    std::vector<double> roots{-1.0, 2.0};
    for (int i = 0; i < q; ++i) {
      roots.push_back(rule.points[static_cast<std::size_t>(i)]);
      roots.push_back(i + 1 < q ? 0.5 * (rule.points[static_cast<std::size_t>(i)] +
                                         rule.points[static_cast<std::size_t>(i + 1)])
                                : 1.0);
    }
    for (double r : roots) {
      for (double c : {-1.0, 1.0}) {
        std::vector<int> s;
        for (double t : rule.points) {
          const double v = c * (t - r);
          s.push_back(v > 0 ? 1 : (v < 0 ? -1 : 0));
        }
        realized.insert(s);
      }
    }
    EXPECT_EQ(realized, unique) << "q = " << q;
  }
}

TEST(Oracle, RequiresSymmetricForm) {
  const GlobalSystem sys = system_for(build_uniform(Rect{}, 2), [](Point) { return 1.0; }, 1.0, 0);
  EXPECT_THROW((void)oracle_solve(sys), ConfigError);
}

TEST(Oracle, SolutionSatisfiesOptimalityConditions) {
  for (const Tiny& t : tiny_configs()) {
    const GlobalSystem sys = system_for(t.mesh, t.f, t.g);
    const OracleReport rep = oracle_solve(sys);
    EXPECT_TRUE(rep.consistent) << t.label;
    EXPECT_LE(kkt_residual(sys, rep.solution.u, rep.solution.lambda), 1e-9) << t.label;
  }
}

TEST(Oracle, UzawaAgrees) {
  for (const Tiny& t : tiny_configs()) {
    const GlobalSystem sys = system_for(t.mesh, t.f, t.g);
    EXPECT_LE(sys.size(), 32) << t.label;
    const OracleReport rep = oracle_solve(sys);
    SolverConfig c;
    c.tol = 1e-12;
    const VISolution sol = solve_uzawa(sys, c);
    EXPECT_LE((sol.u - rep.solution.u).cwiseAbs().maxCoeff(), 1e-6) << t.label;
    EXPECT_LE(vi_energy(sys, sol.u), rep.energy + 1e-10) << t.label;
  }
}

TEST(Uzawa, IndependentOfInitialMultiplier) {
  for (int delta : {-1, 0, 1}) {
    const GlobalSystem sys =
        system_for(build_uniform(Rect{}, 4), [](Point p) { return 12.0 * std::cos(std::numbers::pi * p.x); }, 1.0,
                   delta);
    SolverConfig a, b;
    a.lambda0 = Eigen::VectorXd::Constant(sys.friction.num_points(), 1.0);
    b.lambda0 = Eigen::VectorXd::Constant(sys.friction.num_points(), -1.0);
    const VISolution sa = solve_uzawa(sys, a);
    const VISolution sb = solve_uzawa(sys, b);
    EXPECT_LE((sa.u - sb.u).cwiseAbs().maxCoeff(), 10 * a.tol) << "delta = " << delta;
  }
}

TEST(Uzawa, NonsymmetricFormsSatisfyOptimality) {
  for (int delta : {-1, 0}) {
    const GlobalSystem sys =
        system_for(figure1_mesh(), [](Point p) { return 6.0 * std::sin(3.0 * p.x) - 1.0; }, 0.6, delta);
    const VISolution sol = solve_uzawa(sys);
    EXPECT_LE(kkt_residual(sys, sol.u, sol.lambda), 1e-8) << "delta = " << delta;
    EXPECT_LE(complementarity_residual(sys, sol), 1e-8);
  }
}

TEST(VerifyVi, SolutionPassesAndPerturbationFails) {
  const GlobalSystem sys =
      system_for(build_uniform(Rect{}, 4), [](Point p) { return 12.0 * std::cos(std::numbers::pi * p.x); }, 1.0);
  const VISolution sol = solve_uzawa(sys);
  const double scale = 1.0 + sol.u.cwiseAbs().maxCoeff();
  const ViolationReport ok = verify_vi(sys, sol.u, 200);
  EXPECT_GE(ok.min_value, -1e-7 * scale);
  EXPECT_EQ(ok.directions, 1 + 200 + 2 * static_cast<int>(sys.size()));

  std::mt19937 rng(9);
  const Eigen::VectorXd bad = sol.u + 1e-2 * random_vector(sys.size(), rng);
  EXPECT_LT(verify_vi(sys, bad, 200).min_value, -1e-6);
}
