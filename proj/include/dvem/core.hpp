#ifndef DVEM_CORE_HPP
#define DVEM_CORE_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace dvem {

using Index = std::ptrdiff_t;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent mesh geometry.
class MeshError : public Error {
public:
  using Error::Error;
};

/// Degenerate element while building local VEM operators.
class ElementError : public Error {
public:
  ElementError(Index element, const std::string& what)
      : Error("element " + std::to_string(element) + ": " + what), element_(element) {}
  [[nodiscard]] Index element() const noexcept { return element_; }

private:
  Index element_;
};

/// Bad user-supplied parameters (delta, gamma, config values).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Linear or variational-inequality solver failure.
class SolverError : public Error {
public:
  using Error::Error;
};

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
  friend constexpr Point operator*(Point a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Point a, Point b) = default;
};

constexpr double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point a) { return std::hypot(a.x, a.y); }
inline double distance(Point a, Point b) { return norm(a - b); }
inline Eigen::Vector2d to_eigen(Point p) { return {p.x, p.y}; }

/// Axis-aligned rectangle [x0,x1] x [y0,y1].
struct Rect {
  double x0 = 0.0;
  double x1 = 1.0;
  double y0 = 0.0;
  double y1 = 1.0;

  [[nodiscard]] double width() const { return x1 - x0; }
  [[nodiscard]] double height() const { return y1 - y0; }
  [[nodiscard]] double area() const { return width() * height(); }
  [[nodiscard]] double diameter() const { return std::hypot(width(), height()); }
};

} // namespace dvem

#endif // DVEM_CORE_HPP
