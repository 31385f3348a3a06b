#include "helpers.hpp"

#include "gessa/spatial.hpp"

namespace testing {

gessa::SurfacePoint nearest_point(const gessa::TriangleMesh& mesh, const gessa::Vec3& p) {
  double best = gessa::kInf;
  int best_face = 0;
  gessa::Vec3 best_bary(1, 0, 0);
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const auto& t = mesh.face(f);
    gessa::Vec3 b;
    const gessa::Vec3 q = gessa::closest_point_on_triangle(p, mesh.vertex(t[0]), mesh.vertex(t[1]), mesh.vertex(t[2]), &b);
    const double d = (q - p).norm();
    if (d < best) {
      best = d;
      best_face = f;
      best_bary = b;
    }
  }
  return gessa::make_surface_point(mesh, best_face, best_bary);
}

}  // namespace testing
