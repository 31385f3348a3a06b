#pragma once

#include "gessa/surface_point.hpp"

#include <vector>

namespace gessa {

/// Closest point on triangle (a, b, c) to p; `bary` receives its barycentric weights.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c, Vec3* bary = nullptr);

/// Uniform grid over the faces of a mesh for closest-point queries.
class ClosestPointGrid {
 public:
  explicit ClosestPointGrid(const TriangleMesh& mesh);

  struct Hit {
    SurfacePoint point;
    double distance = kInf;
  };

  Hit closest(const Vec3& p) const;

 private:
  std::array<int, 3> cell_of(const Vec3& p) const;
  int flat(int i, int j, int k) const { return (k * dims_[1] + j) * dims_[0] + i; }

  const TriangleMesh& mesh_;
  Vec3 origin_ = Vec3::Zero();
  double cell_ = 1.0;
  std::array<int, 3> dims_ = {1, 1, 1};
  std::vector<int> cell_start_;
  std::vector<int> cell_faces_;
};

}  // namespace gessa
