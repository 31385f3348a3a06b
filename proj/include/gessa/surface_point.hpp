#pragma once

#include "gessa/mesh.hpp"

#include <filesystem>
#include <vector>

namespace gessa {

/// A point on a mesh face in barycentric form. The 3D position is cached.
struct SurfacePoint {
  int face = -1;
  Vec3 bary = Vec3(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
  Vec3 position = Vec3::Zero();
};

/// Clamps tiny negative weights, renormalizes and caches the position.
SurfacePoint make_surface_point(const TriangleMesh& mesh, int face, const Vec3& bary);
SurfacePoint vertex_point(const TriangleMesh& mesh, int vertex);
SurfacePoint face_centroid(const TriangleMesh& mesh, int face);

/// Barycentric coordinates of `p` (assumed in or near the plane of `face`).
Vec3 barycentric_of(const TriangleMesh& mesh, int face, const Vec3& p);

bool is_valid(const TriangleMesh& mesh, const SurfacePoint& p, double tol = 1e-9);

/// Tangent vector based at a surface point, lying in the base face plane.
struct TangentVector {
  SurfacePoint base;
  Vec3 direction = Vec3::Zero();

  double norm() const { return direction.norm(); }
};

/// Removes the component of `v` along the unit normal `n`.
inline Vec3 project_to_tangent(const Vec3& v, const Vec3& n) { return v - n * n.dot(v); }

/// CSV with columns face_index,b0,b1,b2.
void write_surface_points(const std::filesystem::path& path, const std::vector<SurfacePoint>& points);
std::vector<SurfacePoint> read_surface_points(const std::filesystem::path& path, const TriangleMesh& mesh);

}  // namespace gessa
