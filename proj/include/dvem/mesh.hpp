#ifndef DVEM_MESH_HPP
#define DVEM_MESH_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dvem/core.hpp"

namespace dvem {

enum class BoundaryTag { none, gamma1, gamma2 };
enum class SegmentKind { internal, boundary };
enum class DomainSide { bottom = 0, right = 1, top = 2, left = 3 };

inline const char* to_string(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::gamma1: return "gamma1";
    case BoundaryTag::gamma2: return "gamma2";
    case BoundaryTag::none: break;
  }
  return "none";
}

inline BoundaryTag parse_boundary_tag(const std::string& name) {
  if (name == "gamma1" || name == "G1") return BoundaryTag::gamma1;
  if (name == "gamma2" || name == "G2") return BoundaryTag::gamma2;
  if (name == "none") return BoundaryTag::none;
  throw ConfigError("unknown boundary tag '" + name + "' (expected gamma1 or gamma2)");
}

inline const char* to_string(DomainSide side) {
  static constexpr std::array<const char*, 4> names{"bottom", "right", "top", "left"};
  return names[static_cast<std::size_t>(side)];
}

/// Assigns Gamma_1 (homogeneous Neumann) or Gamma_2 (friction) to each side of
/// the rectangular domain. The default puts friction on the bottom side.
struct BoundaryPartition {
  std::array<BoundaryTag, 4> tags{BoundaryTag::gamma2, BoundaryTag::gamma1, BoundaryTag::gamma1,
                                  BoundaryTag::gamma1};

  [[nodiscard]] BoundaryTag tag(DomainSide side) const {
    return tags[static_cast<std::size_t>(side)];
  }

  /// Builds a partition from {"bottom": "gamma2", ...}; unnamed sides stay Gamma_1.
  static BoundaryPartition from_names(const std::map<std::string, std::string>& rule) {
    BoundaryPartition p;
    p.tags.fill(BoundaryTag::gamma1);
    for (const auto& [side, tag] : rule) {
      bool found = false;
      for (int s = 0; s < 4; ++s) {
        if (side == to_string(static_cast<DomainSide>(s))) {
          p.tags[static_cast<std::size_t>(s)] = parse_boundary_tag(tag);
          found = true;
        }
      }
      if (!found) throw ConfigError("unknown domain side '" + side + "'");
    }
    return p;
  }

  static BoundaryPartition all(BoundaryTag tag) {
    BoundaryPartition p;
    p.tags.fill(tag);
    return p;
  }
};

/// x = origin + J * xi, mapping the unit square onto a parallelogram.
struct AffineMap {
  Eigen::Matrix2d jacobian = Eigen::Matrix2d::Identity();
  Point origin;

  [[nodiscard]] Point operator()(Point ref) const {
    const Eigen::Vector2d x = jacobian * to_eigen(ref);
    return {origin.x + x(0), origin.y + x(1)};
  }
  [[nodiscard]] Point inverse(Point phys) const {
    const Eigen::Vector2d xi = jacobian.inverse() * to_eigen(phys - origin);
    return {xi(0), xi(1)};
  }
  [[nodiscard]] double determinant() const { return jacobian.determinant(); }
};

struct Element {
  Index id = 0;
  std::vector<Index> vertex_ids; ///< counterclockwise
  AffineMap map;
  double diameter = 0.0;  ///< h_K
  double inradius = 0.0;  ///< rho_K, radius of the largest disk centred at the barycenter
  double area = 0.0;
  Point barycenter;

  [[nodiscard]] int num_vertices() const { return static_cast<int>(vertex_ids.size()); }
};

/// One side of an interface segment: element id plus the local edge
/// (edge i runs from vertex i to vertex i+1).
struct SideRef {
  Index element = 0;
  int local_edge = 0;
  friend bool operator==(const SideRef&, const SideRef&) = default;
};

/// Maximal straight piece of the skeleton with a fixed pair of incident elements.
/// Oriented a -> b counterclockwise with respect to the plus element, so the
/// stored normal is the outward normal of the plus side.
struct InterfaceSegment {
  Index id = 0;
  Point a;
  Point b;
  double length = 0.0;
  SegmentKind kind = SegmentKind::boundary;
  SideRef plus;
  std::optional<SideRef> minus;
  Point normal;
  BoundaryTag tag = BoundaryTag::none;

  [[nodiscard]] bool internal() const { return kind == SegmentKind::internal; }
  [[nodiscard]] Point at(double t) const { return a + t * (b - a); }
  [[nodiscard]] Point midpoint() const { return at(0.5); }
};

namespace detail {

inline double polygon_signed_area(std::span<const Point> pts) {
  double s = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    s += cross(pts[i], pts[(i + 1) % pts.size()]);
  }
  return 0.5 * s;
}

inline Element make_element(Index id, std::vector<Index> vertex_ids, std::span<const Point> vertices) {
  Element el;
  el.id = id;
  el.vertex_ids = std::move(vertex_ids);
  std::vector<Point> pts;
  for (Index v : el.vertex_ids) {
    if (v < 0 || v >= static_cast<Index>(vertices.size()))
      throw MeshError("element " + std::to_string(id) + " references unknown vertex " +
                      std::to_string(v));
    pts.push_back(vertices[static_cast<std::size_t>(v)]);
  }
  if (pts.size() != 4)
    throw MeshError("element " + std::to_string(id) +
                    " is not a quadrilateral; all elements must be affine images of the unit square");

  el.area = polygon_signed_area(pts);
  double diam = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) diam = std::max(diam, distance(pts[i], pts[j]));
  el.diameter = diam;
  if (!(el.area > 1e-14 * diam * diam))
    throw MeshError("element " + std::to_string(id) + " is degenerate or clockwise");

  const Point e1 = pts[1] - pts[0];
  const Point e3 = pts[3] - pts[0];
  const Point opposite = pts[0] + e1 + e3;
  if (distance(opposite, pts[2]) > 1e-10 * diam)
    throw MeshError("element " + std::to_string(id) + " is not a parallelogram");
  el.map.origin = pts[0];
  el.map.jacobian << e1.x, e3.x, e1.y, e3.y;

  // Parallelogram: area centroid is the vertex mean.
  el.barycenter = 0.25 * (pts[0] + pts[1] + pts[2] + pts[3]);
  double rho = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point a = pts[i];
    const Point b = pts[(i + 1) % pts.size()];
    rho = std::min(rho, std::abs(cross(b - a, el.barycenter - a)) / distance(a, b));
  }
  el.inradius = rho;
  return el;
}

struct EdgeOnLine {
  Index element;
  int local_edge;
  Point a;
  Point b;
  double sa;
  double sb;
  [[nodiscard]] double lo() const { return std::min(sa, sb); }
  [[nodiscard]] double hi() const { return std::max(sa, sb); }
  [[nodiscard]] bool forward() const { return sb > sa; }
  [[nodiscard]] Point at(double s) const { return a + ((s - sa) / (sb - sa)) * (b - a); }
};

} // namespace detail

/// Extracts maximal interface segments from a set of elements.
///
/// Element edges are grouped by supporting line, every line is cut at all edge
/// endpoints that lie on it, and consecutive pieces with the same pair of
/// incident edges are merged. A coarse edge facing two refined edges therefore
/// yields two internal segments. Throws MeshError if more than two edges
/// overlap, if two overlapping edges have the same orientation, or if a
/// boundary piece does not lie on the domain boundary.
inline std::vector<InterfaceSegment> extract_segments(const Rect& domain,
                                                      const BoundaryPartition& partition,
                                                      std::span<const Point> vertices,
                                                      std::span<const Element> elements,
                                                      double tol) {
  struct Keyed {
    std::int64_t angle;
    double offset;
    Point dir;
    detail::EdgeOnLine edge;
  };
  std::vector<Keyed> edges;
  for (const Element& el : elements) {
    const int n = el.num_vertices();
    for (int i = 0; i < n; ++i) {
      const Point a = vertices[static_cast<std::size_t>(el.vertex_ids[static_cast<std::size_t>(i)])];
      const Point b =
          vertices[static_cast<std::size_t>(el.vertex_ids[static_cast<std::size_t>((i + 1) % n)])];
      Point d = (1.0 / distance(a, b)) * (b - a);
      if (std::abs(d.x) <= 1e-12) {
        d = {0.0, 1.0};
      } else if (d.x < 0.0) {
        d = -1.0 * d;
      }
      Keyed k;
      k.angle = std::llround(std::atan2(d.y, d.x) * 1e9);
      k.offset = cross(d, a);
      k.dir = d;
      k.edge = {el.id, i, a, b, dot(d, a), dot(d, b)};
      edges.push_back(k);
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Keyed& l, const Keyed& r) {
    if (l.angle != r.angle) return l.angle < r.angle;
    return l.offset < r.offset;
  });

  struct Piece {
    double s0;
    double s1;
    std::vector<detail::EdgeOnLine> cover;
  };
  auto same_cover = [](const Piece& p, const Piece& q) {
    if (p.cover.size() != q.cover.size()) return false;
    for (std::size_t i = 0; i < p.cover.size(); ++i) {
      if (p.cover[i].element != q.cover[i].element || p.cover[i].local_edge != q.cover[i].local_edge)
        return false;
    }
    return true;
  };

  std::vector<InterfaceSegment> segments;
  auto emit = [&](const Piece& piece) {
    InterfaceSegment seg;
    const detail::EdgeOnLine& first = piece.cover.front();
    if (piece.cover.size() == 1) {
      seg.kind = SegmentKind::boundary;
      seg.plus = {first.element, first.local_edge};
    } else {
      const detail::EdgeOnLine& second = piece.cover[1];
      if (first.element == second.element || first.forward() == second.forward())
        throw MeshError("overlapping element edges near (" + std::to_string(first.at(piece.s0).x) +
                        ", " + std::to_string(first.at(piece.s0).y) + ")");
      seg.kind = SegmentKind::internal;
      seg.plus = {first.element, first.local_edge};
      seg.minus = SideRef{second.element, second.local_edge};
    }
    const Point p0 = first.at(piece.s0);
    const Point p1 = first.at(piece.s1);
    seg.a = first.forward() ? p0 : p1;
    seg.b = first.forward() ? p1 : p0;
    seg.length = distance(seg.a, seg.b);
    const Point t = (1.0 / seg.length) * (seg.b - seg.a);
    seg.normal = {t.y, -t.x};
    if (seg.kind == SegmentKind::boundary) {
      const Point m = seg.midpoint();
      const bool on_bottom = std::abs(m.y - domain.y0) <= tol && std::abs(seg.normal.y + 1.0) < 1e-9;
      const bool on_top = std::abs(m.y - domain.y1) <= tol && std::abs(seg.normal.y - 1.0) < 1e-9;
      const bool on_left = std::abs(m.x - domain.x0) <= tol && std::abs(seg.normal.x + 1.0) < 1e-9;
      const bool on_right = std::abs(m.x - domain.x1) <= tol && std::abs(seg.normal.x - 1.0) < 1e-9;
      if (on_bottom) seg.tag = partition.tag(DomainSide::bottom);
      else if (on_top) seg.tag = partition.tag(DomainSide::top);
      else if (on_left) seg.tag = partition.tag(DomainSide::left);
      else if (on_right) seg.tag = partition.tag(DomainSide::right);
      else
        throw MeshError("unmatched element edge at (" + std::to_string(m.x) + ", " +
                        std::to_string(m.y) + ") does not lie on the domain boundary");
    }
    segments.push_back(seg);
  };

  std::size_t begin = 0;
  while (begin < edges.size()) {
    std::size_t end = begin + 1;
    while (end < edges.size() && edges[end].angle == edges[begin].angle &&
           std::abs(edges[end].offset - edges[begin].offset) <= tol) {
      ++end;
    }

    std::vector<double> cuts;
    for (std::size_t i = begin; i < end; ++i) {
      cuts.push_back(edges[i].edge.sa);
      cuts.push_back(edges[i].edge.sb);
    }
    std::sort(cuts.begin(), cuts.end());
    std::vector<double> breaks;
    for (double c : cuts) {
      if (breaks.empty() || c - breaks.back() > tol) breaks.push_back(c);
    }

    std::vector<Piece> pieces;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
      const double mid = 0.5 * (breaks[k] + breaks[k + 1]);
      Piece piece{breaks[k], breaks[k + 1], {}};
      for (std::size_t i = begin; i < end; ++i) {
        const auto& e = edges[i].edge;
        if (e.lo() - tol <= mid && mid <= e.hi() + tol) piece.cover.push_back(e);
      }
      if (piece.cover.empty()) continue;
      if (piece.cover.size() > 2)
        throw MeshError("more than two element edges overlap near (" +
                        std::to_string(piece.cover[0].at(mid).x) + ", " +
                        std::to_string(piece.cover[0].at(mid).y) + ")");
      std::sort(piece.cover.begin(), piece.cover.end(),
                [](const auto& l, const auto& r) { return l.element < r.element; });
      if (!pieces.empty() && same_cover(pieces.back(), piece) &&
          std::abs(pieces.back().s1 - piece.s0) <= tol) {
        pieces.back().s1 = piece.s1;
      } else {
        pieces.push_back(std::move(piece));
      }
    }
    for (const Piece& p : pieces) emit(p);
    begin = end;
  }

  // Deterministic order: by plus element, local edge, then position along the edge.
  std::sort(segments.begin(), segments.end(), [&](const InterfaceSegment& l, const InterfaceSegment& r) {
    if (l.plus.element != r.plus.element) return l.plus.element < r.plus.element;
    if (l.plus.local_edge != r.plus.local_edge) return l.plus.local_edge < r.plus.local_edge;
    const Element& el = elements[static_cast<std::size_t>(l.plus.element)];
    const Point start =
        vertices[static_cast<std::size_t>(el.vertex_ids[static_cast<std::size_t>(l.plus.local_edge)])];
    return distance(start, l.a) < distance(start, r.a);
  });
  for (std::size_t i = 0; i < segments.size(); ++i) segments[i].id = static_cast<Index>(i);
  return segments;
}

/// Immutable polygonal mesh of parallelogram elements, possibly with hanging
/// nodes. Hanging vertices are never inserted into the coarse neighbour's
/// vertex list; the non-matching interface is carried by the segments.
class PolygonalMesh {
public:
  PolygonalMesh(Rect domain, BoundaryPartition partition, std::vector<Point> vertices,
                std::vector<std::vector<Index>> element_vertices, std::vector<Index> parents = {})
      : domain_(domain), partition_(partition), vertices_(std::move(vertices)), parents_(std::move(parents)) {
    if (!(domain_.width() > 0.0) || !(domain_.height() > 0.0))
      throw MeshError("degenerate domain (zero width or height)");
    if (element_vertices.empty()) throw MeshError("mesh has no elements");
    for (const Point& p : vertices_) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw MeshError("non-finite vertex coordinate");
    }
    elements_.reserve(element_vertices.size());
    for (std::size_t k = 0; k < element_vertices.size(); ++k) {
      elements_.push_back(detail::make_element(static_cast<Index>(k), std::move(element_vertices[k]), vertices_));
      h_ = std::max(h_, elements_.back().diameter);
    }
    if (parents_.empty()) parents_.assign(elements_.size(), -1);
    if (parents_.size() != elements_.size()) throw MeshError("parent map size mismatch");
    segments_ = extract_segments(domain_, partition_, vertices_, elements_, tolerance());
    element_segments_.resize(elements_.size());
    for (const InterfaceSegment& s : segments_) {
      element_segments_[static_cast<std::size_t>(s.plus.element)].push_back(s.id);
      if (s.minus) element_segments_[static_cast<std::size_t>(s.minus->element)].push_back(s.id);
    }
  }

  [[nodiscard]] const Rect& domain() const { return domain_; }
  [[nodiscard]] const BoundaryPartition& partition() const { return partition_; }
  [[nodiscard]] std::span<const Point> vertices() const { return vertices_; }
  [[nodiscard]] std::span<const Element> elements() const { return elements_; }
  [[nodiscard]] std::span<const InterfaceSegment> segments() const { return segments_; }
  [[nodiscard]] const Element& element(Index k) const { return elements_.at(static_cast<std::size_t>(k)); }
  [[nodiscard]] const InterfaceSegment& segment(Index s) const { return segments_.at(static_cast<std::size_t>(s)); }
  [[nodiscard]] Index num_elements() const { return static_cast<Index>(elements_.size()); }
  [[nodiscard]] Index num_segments() const { return static_cast<Index>(segments_.size()); }
  /// Segment ids incident to element k.
  [[nodiscard]] std::span<const Index> segments_of(Index k) const {
    return element_segments_.at(static_cast<std::size_t>(k));
  }
  /// Element id in the mesh this one was refined from, or -1.
  [[nodiscard]] Index parent(Index k) const { return parents_.at(static_cast<std::size_t>(k)); }
  [[nodiscard]] std::span<const Index> parents() const { return parents_; }

  /// h = max_K h_K.
  [[nodiscard]] double h() const { return h_; }
  /// Point/segment coincidence tolerance, 1e-10 h.
  [[nodiscard]] double tolerance() const { return 1e-10 * h_; }

  [[nodiscard]] Point vertex_of(Index k, int i) const {
    const Element& el = element(k);
    const int n = el.num_vertices();
    return vertices_[static_cast<std::size_t>(el.vertex_ids[static_cast<std::size_t>(((i % n) + n) % n)])];
  }
  [[nodiscard]] std::vector<Point> element_points(Index k) const {
    std::vector<Point> pts;
    for (int i = 0; i < element(k).num_vertices(); ++i) pts.push_back(vertex_of(k, i));
    return pts;
  }
  /// Endpoints of local edge i of element k, counterclockwise.
  [[nodiscard]] std::pair<Point, Point> edge_of(Index k, int i) const {
    return {vertex_of(k, i), vertex_of(k, i + 1)};
  }

  /// Reference element: the unit square.
  static std::array<Point, 4> reference_element() { return {{{0, 0}, {1, 0}, {1, 1}, {0, 1}}}; }

  [[nodiscard]] std::size_t count(SegmentKind kind) const {
    return static_cast<std::size_t>(std::count_if(segments_.begin(), segments_.end(),
                                                  [kind](const InterfaceSegment& s) { return s.kind == kind; }));
  }

private:
  Rect domain_;
  BoundaryPartition partition_;
  std::vector<Point> vertices_;
  std::vector<Element> elements_;
  std::vector<InterfaceSegment> segments_;
  std::vector<std::vector<Index>> element_segments_;
  std::vector<Index> parents_;
  double h_ = 0.0;
};

/// nx x ny congruent rectangles with matching interfaces.
inline PolygonalMesh build_uniform(const Rect& domain, int nx, int ny, BoundaryPartition partition = {}) {
  if (nx < 1 || ny < 1) throw MeshError("build_uniform: subdivisions must be >= 1");
  if (!(domain.width() > 0.0) || !(domain.height() > 0.0))
    throw MeshError("degenerate domain (zero width or height)");
  std::vector<Point> vertices;
  vertices.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1)));
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      vertices.push_back({domain.x0 + domain.width() * i / nx, domain.y0 + domain.height() * j / ny});
    }
  }
  auto node = [nx](int i, int j) { return static_cast<Index>(j * (nx + 1) + i); };
  std::vector<std::vector<Index>> cells;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      cells.push_back({node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)});
    }
  }
  return {domain, partition, std::move(vertices), std::move(cells)};
}

inline PolygonalMesh build_uniform(const Rect& domain, int n, BoundaryPartition partition = {}) {
  return build_uniform(domain, n, n, partition);
}

/// Splits every marked parallelogram into four congruent children through its
/// edge midpoints. Unmarked neighbours keep their vertex lists, so hanging
/// nodes appear only as segment breakpoints. Children are emitted in place of
/// their parent, in the order (v0 corner, v1 corner, v2 corner, v3 corner).
inline PolygonalMesh refine_local(const PolygonalMesh& mesh, std::span<const Index> marked) {
  std::vector<char> flag(static_cast<std::size_t>(mesh.num_elements()), 0);
  for (Index k : marked) {
    if (k < 0 || k >= mesh.num_elements())
      throw MeshError("refine_local: marked element " + std::to_string(k) + " out of range");
    flag[static_cast<std::size_t>(k)] = 1;
  }

  std::vector<Point> vertices(mesh.vertices().begin(), mesh.vertices().end());
  const double quantum = 1e-10 * mesh.h();
  std::map<std::pair<std::int64_t, std::int64_t>, Index> lookup;
  auto key = [quantum](Point p) {
    return std::pair{static_cast<std::int64_t>(std::llround(p.x / quantum)),
                     static_cast<std::int64_t>(std::llround(p.y / quantum))};
  };
  for (std::size_t i = 0; i < vertices.size(); ++i) lookup.emplace(key(vertices[i]), static_cast<Index>(i));
  auto vertex_id = [&](Point p) {
    auto [it, inserted] = lookup.emplace(key(p), static_cast<Index>(vertices.size()));
    if (inserted) vertices.push_back(p);
    return it->second;
  };

  std::vector<std::vector<Index>> cells;
  std::vector<Index> parents;
  for (const Element& el : mesh.elements()) {
    if (!flag[static_cast<std::size_t>(el.id)]) {
      cells.push_back(el.vertex_ids);
      parents.push_back(el.id);
      continue;
    }
    const auto& v = el.vertex_ids;
    const auto p = mesh.element_points(el.id);
    const Index m01 = vertex_id(0.5 * (p[0] + p[1]));
    const Index m12 = vertex_id(0.5 * (p[1] + p[2]));
    const Index m23 = vertex_id(0.5 * (p[2] + p[3]));
    const Index m30 = vertex_id(0.5 * (p[3] + p[0]));
    const Index c = vertex_id(el.barycenter);
    cells.push_back({v[0], m01, c, m30});
    cells.push_back({m01, v[1], m12, c});
    cells.push_back({c, m12, v[2], m23});
    cells.push_back({m30, c, m23, v[3]});
    for (int i = 0; i < 4; ++i) parents.push_back(el.id);
  }
  return {mesh.domain(), mesh.partition(), std::move(vertices), std::move(cells), std::move(parents)};
}

inline PolygonalMesh refine_all(const PolygonalMesh& mesh) {
  std::vector<Index> all(static_cast<std::size_t>(mesh.num_elements()));
  for (Index k = 0; k < mesh.num_elements(); ++k) all[static_cast<std::size_t>(k)] = k;
  return refine_local(mesh, all);
}

struct RegularityFloors {
  double gamma1 = 0.05;
  double gamma2 = 0.05;
};

struct RegularityReport {
  double gamma1 = 0.0; ///< min_K rho_K / h_K
  double gamma2 = 0.0; ///< min_K (shortest vertex distance) / h_K
  bool ok = false;
};

inline RegularityReport validate_regularity(const PolygonalMesh& mesh, RegularityFloors floors = {}) {
  RegularityReport r;
  r.gamma1 = std::numeric_limits<double>::infinity();
  r.gamma2 = std::numeric_limits<double>::infinity();
  for (const Element& el : mesh.elements()) {
    r.gamma1 = std::min(r.gamma1, el.inradius / el.diameter);
    const auto pts = mesh.element_points(el.id);
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j)
        r.gamma2 = std::min(r.gamma2, distance(pts[i], pts[j]) / el.diameter);
  }
  r.ok = r.gamma1 > floors.gamma1 && r.gamma2 > floors.gamma2;
  return r;
}

} // namespace dvem

#endif // DVEM_MESH_HPP
