#ifndef DVEM_QUADRATURE_HPP
#define DVEM_QUADRATURE_HPP

#include <cmath>
#include <numbers>
#include <vector>

#include "dvem/core.hpp"

namespace dvem {

/// Quadrature rule on the unit interval [0,1].
struct LineRule {
  std::vector<double> points;
  std::vector<double> weights;

  [[nodiscard]] std::size_t size() const { return points.size(); }
};

/// Gauss-Legendre rule with n points mapped to [0,1]; exact for degree 2n-1.
/// Nodes come from Newton iteration on P_n, ascending in t.
inline LineRule gauss_legendre(int n) {
  if (n < 1) throw ConfigError("gauss_legendre: need at least one point");
  LineRule rule;
  rule.points.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    // z > 0 here; store the mirrored pair on [0,1].
    rule.points[static_cast<std::size_t>(i)] = 0.5 * (1.0 - z);
    rule.points[static_cast<std::size_t>(n - 1 - i)] = 0.5 * (1.0 + z);
    rule.weights[static_cast<std::size_t>(i)] = 0.5 * w;
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = 0.5 * w;
  }
  return rule;
}

/// Tensor-product Gauss rule on the reference square [0,1]^2.
struct SquareRule {
  std::vector<Point> points;
  std::vector<double> weights;
};

inline SquareRule tensor_gauss(int n) {
  const LineRule line = gauss_legendre(n);
  SquareRule rule;
  for (std::size_t j = 0; j < line.size(); ++j) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      rule.points.push_back({line.points[i], line.points[j]});
      rule.weights.push_back(line.weights[i] * line.weights[j]);
    }
  }
  return rule;
}

} // namespace dvem

#endif // DVEM_QUADRATURE_HPP
