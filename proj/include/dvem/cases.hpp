#ifndef DVEM_CASES_HPP
#define DVEM_CASES_HPP

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dvem/mesh.hpp"

namespace dvem {

enum class CaseRegime { analytic, reference };

/// Continuous model data -Lap u + u = f, du/dn = 0 on Gamma_1,
/// du/dn + g lambda = 0 with |lambda| <= 1, lambda u = |u| on Gamma_2, plus
/// the closed-form solution when one is known.
struct ExactSolutionCase {
  std::string name;
  CaseRegime regime = CaseRegime::analytic;
  Rect domain;
  BoundaryPartition partition;
  double g = 1.0;
  std::function<double(Point)> f;
  // Analytic regime only.
  std::function<double(Point)> u;
  std::function<Eigen::Vector2d(Point)> gradient;
  std::function<Eigen::Matrix2d(Point)> hessian;

  [[nodiscard]] bool analytic() const { return regime == CaseRegime::analytic; }
  /// lambda = -(grad u . n) / g on a boundary point with outward normal n.
  [[nodiscard]] double multiplier(Point x, Point n) const { return -gradient(x).dot(to_eigen(n)) / g; }
};

namespace detail {

/// u = X(x) Y(y) with f = -Lap u + u.
struct SeparableProfile {
  std::function<double(double)> X, dX, ddX, Y, dY, ddY;
};

inline void attach_separable(ExactSolutionCase& c, const SeparableProfile& p) {
  c.u = [p](Point q) { return p.X(q.x) * p.Y(q.y); };
  c.gradient = [p](Point q) { return Eigen::Vector2d(p.dX(q.x) * p.Y(q.y), p.X(q.x) * p.dY(q.y)); };
  c.hessian = [p](Point q) {
    Eigen::Matrix2d h;
    h << p.ddX(q.x) * p.Y(q.y), p.dX(q.x) * p.dY(q.y), p.dX(q.x) * p.dY(q.y), p.X(q.x) * p.ddY(q.y);
    return h;
  };
  c.f = [p](Point q) {
    const double lap = p.ddX(q.x) * p.Y(q.y) + p.X(q.x) * p.ddY(q.y);
    return -lap + p.X(q.x) * p.Y(q.y);
  };
}

// Y(y) = y (1 - y)^2: Y(0) = 0, Y'(0) = 1, Y'(1) = 0, Y(1) = 0.
inline SeparableProfile stick_profile_y(SeparableProfile p) {
  p.Y = [](double y) { return y * (1 - y) * (1 - y); };
  p.dY = [](double y) { return 1 - 4 * y + 3 * y * y; };
  p.ddY = [](double y) { return -4 + 6 * y; };
  return p;
}

} // namespace detail

/// u = x^2 (1-x)^2 y (1-y)^2 on the unit square, bottom = Gamma_2. The
/// solution and its normal derivative vanish on the Gamma_1 sides, u = 0 on
/// Gamma_2 (stick) with lambda = x^2 (1-x)^2 / g. Because u = 0 on all of
/// the boundary, the penalty on boundary segments is consistent with it.
inline ExactSolutionCase clamped_stick_case(double g = 2.0) {
  if (!(g >= 1.0 / 16.0)) throw ConfigError("clamped-stick case needs g >= 1/16 so that |lambda| <= 1");
  ExactSolutionCase c;
  c.name = "clamped-stick";
  c.g = g;
  detail::SeparableProfile p;
  p.X = [](double x) { return x * x * (1 - x) * (1 - x); };
  p.dX = [](double x) { return 2 * x - 6 * x * x + 4 * x * x * x; };
  p.ddX = [](double x) { return 2 - 12 * x + 12 * x * x; };
  detail::attach_separable(c, detail::stick_profile_y(p));
  return c;
}

/// u = cos(pi x) y (y-1)^2, bottom = Gamma_2, stick with lambda = cos(pi x)/g.
/// u does not vanish on the Gamma_1 sides, where the boundary penalty pulls
/// the discrete solution towards zero (see README).
inline ExactSolutionCase cosine_stick_case(double g = 2.0) {
  if (!(g >= 1.0)) throw ConfigError("cosine-stick case needs g >= 1 so that |lambda| <= 1");
  ExactSolutionCase c;
  c.name = "cosine-stick";
  c.g = g;
  constexpr double pi = std::numbers::pi;
  detail::SeparableProfile p;
  p.X = [](double x) { return std::cos(pi * x); };
  p.dX = [](double x) { return -pi * std::sin(pi * x); };
  p.ddX = [](double x) { return -pi * pi * std::cos(pi * x); };
  detail::attach_separable(c, detail::stick_profile_y(p));
  return c;
}

/// No closed form: f = 2 + sin(2 pi x) with a small friction bound so that
/// part of Gamma_2 slips. Errors are measured against a finer solve.
inline ExactSolutionCase slip_reference_case(double g = 0.5) {
  if (!(g > 0.0)) throw ConfigError("friction bound g must be positive");
  ExactSolutionCase c;
  c.name = "slip-reference";
  c.regime = CaseRegime::reference;
  c.g = g;
  c.f = [](Point q) { return 2.0 + std::sin(2.0 * std::numbers::pi * q.x); };
  return c;
}

inline std::vector<std::string> case_names() { return {"clamped-stick", "cosine-stick", "slip-reference"}; }

inline ExactSolutionCase make_case(const std::string& name, std::optional<double> g = std::nullopt) {
  if (name == "clamped-stick") return g ? clamped_stick_case(*g) : clamped_stick_case();
  if (name == "cosine-stick") return g ? cosine_stick_case(*g) : cosine_stick_case();
  if (name == "slip-reference") return g ? slip_reference_case(*g) : slip_reference_case();
  throw ConfigError("unknown case '" + name + "' (expected clamped-stick, cosine-stick or slip-reference)");
}

} // namespace dvem

#endif // DVEM_CASES_HPP
