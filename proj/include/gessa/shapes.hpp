#pragma once

#include "gessa/mesh.hpp"

namespace gessa {

/// Regular icosahedron inscribed in a sphere of the given radius.
TriangleMesh icosahedron(double radius = 1.0);

/// Geodesic sphere: each icosahedron face split into frequency^2 triangles and
/// projected onto the sphere. Subdivision level s corresponds to frequency 2^s.
TriangleMesh icosphere(int frequency, double radius = 1.0);
TriangleMesh icosphere_level(int level, double radius = 1.0);

/// Icosphere with axes scaled to (a, b, c).
TriangleMesh ellipsoid(const Vec3& axes, int frequency);

/// Flat rectangle [0,sx]x[0,sy] in the z=0 plane, nx by ny quads split into two triangles.
TriangleMesh flat_grid(int nx, int ny, double sx = 1.0, double sy = 1.0);

/// Open cylinder around the z axis, z in [0, height].
TriangleMesh cylinder(double radius, double height, int around, int along);

}  // namespace gessa
