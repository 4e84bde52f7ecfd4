#pragma once

#include "hgt/geometry.hpp"

#include <fstream>
#include <iomanip>
#include <string>

namespace hgt {

/// Writes one open-ended tube per branch as a Wavefront OBJ mesh: a ring of
/// `segments` vertices at each endpoint (radius taken from the endpoint),
/// joined by 2*segments triangles. End caps are omitted.
inline void export_obj(const TreeSkeleton& tree, const std::string& path,
                       int segments = 12) {
  if (segments < 3)
    throw std::invalid_argument("export_obj: segments must be >= 3");
  if (tree.empty()) throw std::invalid_argument("export_obj: empty tree");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("export_obj: cannot write " + path);
  f << std::setprecision(8);
  f << "# branch skeleton tube mesh\n";

  long base = 1;  // OBJ indices are 1-based
  for (const Branch& b : tree.branches) {
    Vec3 axis = b.t.pos() - b.s.pos();
    const double len = axis.norm();
    if (len <= 0.0) axis = Vec3(0, 0, 1);
    else axis /= len;
    // Orthonormal frame around the axis.
    Vec3 ref = std::abs(axis.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
    Vec3 u = axis.cross(ref).normalized();
    Vec3 v = axis.cross(u);

    for (const BranchPoint* ep : {&b.s, &b.t}) {
      for (int i = 0; i < segments; ++i) {
        const double a = 2.0 * M_PI * double(i) / double(segments);
        Vec3 p = ep->pos() + ep->r * (std::cos(a) * u + std::sin(a) * v);
        f << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
      }
    }
    for (int i = 0; i < segments; ++i) {
      const long i0 = base + i;
      const long i1 = base + (i + 1) % segments;
      const long j0 = i0 + segments;
      const long j1 = i1 + segments;
      f << "f " << i0 << ' ' << i1 << ' ' << j1 << '\n';
      f << "f " << i0 << ' ' << j1 << ' ' << j0 << '\n';
    }
    base += 2 * segments;
  }
}

}  // namespace hgt
