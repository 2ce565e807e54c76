#ifndef DVEM_MESH_IO_HPP
#define DVEM_MESH_IO_HPP

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dvem/mesh.hpp"

namespace dvem {

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void expect_keyword(std::istream& in, const std::string& keyword) {
  std::string word;
  if (!(in >> word) || word != keyword)
    throw MeshError("mesh file: expected '" + keyword + "', found '" + word + "'");
}

} // namespace detail

/// Plain-text mesh export. Entities are written in id order so that files are
/// diff-stable:
///
///   DVEM-MESH 1
///   domain x0 x1 y0 y1
///   partition <bottom> <right> <top> <left>
///   vertices N            then N lines: id x y
///   elements M            then M lines: id k v0 ... v_{k-1} parent
///   segments S            then S lines: id kind tag plus_el plus_edge minus_el minus_edge ax ay bx by
///
/// minus_el/minus_edge are -1 for boundary segments.
inline void write_mesh(std::ostream& out, const PolygonalMesh& mesh) {
  using detail::fmt_double;
  const Rect& d = mesh.domain();
  out << "DVEM-MESH 1\n";
  out << "domain " << fmt_double(d.x0) << ' ' << fmt_double(d.x1) << ' ' << fmt_double(d.y0) << ' '
      << fmt_double(d.y1) << '\n';
  out << "partition";
  for (BoundaryTag t : mesh.partition().tags) out << ' ' << to_string(t);
  out << '\n';
  out << "vertices " << mesh.vertices().size() << '\n';
  for (std::size_t i = 0; i < mesh.vertices().size(); ++i) {
    out << i << ' ' << fmt_double(mesh.vertices()[i].x) << ' ' << fmt_double(mesh.vertices()[i].y) << '\n';
  }
  out << "elements " << mesh.num_elements() << '\n';
  for (const Element& el : mesh.elements()) {
    out << el.id << ' ' << el.num_vertices();
    for (Index v : el.vertex_ids) out << ' ' << v;
    out << ' ' << mesh.parent(el.id) << '\n';
  }
  out << "segments " << mesh.num_segments() << '\n';
  for (const InterfaceSegment& s : mesh.segments()) {
    out << s.id << ' ' << (s.internal() ? "internal" : "boundary") << ' ' << to_string(s.tag) << ' '
        << s.plus.element << ' ' << s.plus.local_edge << ' ' << (s.minus ? s.minus->element : -1) << ' '
        << (s.minus ? s.minus->local_edge : -1) << ' ' << fmt_double(s.a.x) << ' ' << fmt_double(s.a.y) << ' '
        << fmt_double(s.b.x) << ' ' << fmt_double(s.b.y) << '\n';
  }
}

/// Reads a mesh written by write_mesh. Segments are re-extracted from the
/// element geometry and checked against the stored list.
inline PolygonalMesh read_mesh(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "DVEM-MESH" || version != 1)
    throw MeshError("mesh file: missing 'DVEM-MESH 1' header");

  Rect domain;
  detail::expect_keyword(in, "domain");
  if (!(in >> domain.x0 >> domain.x1 >> domain.y0 >> domain.y1)) throw MeshError("mesh file: bad domain line");

  BoundaryPartition partition;
  detail::expect_keyword(in, "partition");
  for (auto& tag : partition.tags) {
    std::string name;
    if (!(in >> name)) throw MeshError("mesh file: bad partition line");
    tag = parse_boundary_tag(name);
  }

  std::size_t nv = 0;
  detail::expect_keyword(in, "vertices");
  if (!(in >> nv)) throw MeshError("mesh file: bad vertex count");
  std::vector<Point> vertices(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    std::size_t id = 0;
    if (!(in >> id >> vertices[i].x >> vertices[i].y) || id != i)
      throw MeshError("mesh file: bad vertex line " + std::to_string(i));
  }

  std::size_t ne = 0;
  detail::expect_keyword(in, "elements");
  if (!(in >> ne)) throw MeshError("mesh file: bad element count");
  std::vector<std::vector<Index>> cells(ne);
  std::vector<Index> parents(ne);
  for (std::size_t i = 0; i < ne; ++i) {
    std::size_t id = 0;
    int k = 0;
    if (!(in >> id >> k) || id != i || k < 3) throw MeshError("mesh file: bad element line " + std::to_string(i));
    cells[i].resize(static_cast<std::size_t>(k));
    for (auto& v : cells[i]) {
      if (!(in >> v)) throw MeshError("mesh file: bad element line " + std::to_string(i));
    }
    if (!(in >> parents[i])) throw MeshError("mesh file: bad element line " + std::to_string(i));
  }

  PolygonalMesh mesh(domain, partition, std::move(vertices), std::move(cells), std::move(parents));

  std::size_t ns = 0;
  detail::expect_keyword(in, "segments");
  if (!(in >> ns)) throw MeshError("mesh file: bad segment count");
  if (ns != static_cast<std::size_t>(mesh.num_segments()))
    throw MeshError("mesh file: stored segment count " + std::to_string(ns) + " does not match geometry (" +
                    std::to_string(mesh.num_segments()) + ")");
  for (std::size_t i = 0; i < ns; ++i) {
    std::size_t id = 0;
    std::string kind;
    std::string tag;
    Index pe = 0, pl = 0, me = 0, ml = 0;
    Point a, b;
    if (!(in >> id >> kind >> tag >> pe >> pl >> me >> ml >> a.x >> a.y >> b.x >> b.y))
      throw MeshError("mesh file: bad segment line " + std::to_string(i));
    const InterfaceSegment& s = mesh.segment(static_cast<Index>(id));
    const bool same = (kind == "internal") == s.internal() && parse_boundary_tag(tag) == s.tag &&
                      pe == s.plus.element && pl == s.plus.local_edge &&
                      me == (s.minus ? s.minus->element : -1) && distance(a, s.a) <= mesh.tolerance() &&
                      distance(b, s.b) <= mesh.tolerance();
    if (!same) throw MeshError("mesh file: segment " + std::to_string(id) + " does not match geometry");
  }
  return mesh;
}

inline std::string mesh_to_string(const PolygonalMesh& mesh) {
  std::ostringstream os;
  write_mesh(os, mesh);
  return os.str();
}

} // namespace dvem

#endif // DVEM_MESH_IO_HPP
