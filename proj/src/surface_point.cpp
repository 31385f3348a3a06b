#include "gessa/surface_point.hpp"

#include "gessa/csv.hpp"

#include <fstream>

namespace gessa {

SurfacePoint make_surface_point(const TriangleMesh& mesh, int face, const Vec3& bary) {
  if (face < 0 || face >= mesh.num_faces()) throw Error("surface point face out of range");
  SurfacePoint p;
  p.face = face;
  p.bary = bary.cwiseMax(0.0);
  const double s = p.bary.sum();
  p.bary = s > 0.0 ? Vec3(p.bary / s) : Vec3(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
  p.position = mesh.interpolate(face, p.bary);
  return p;
}

SurfacePoint vertex_point(const TriangleMesh& mesh, int vertex) {
  const auto& vf = mesh.vertex_faces(vertex);
  if (vf.empty()) throw Error("isolated vertex");
  Vec3 b = Vec3::Zero();
  b[mesh.corner_of(vf[0], vertex)] = 1.0;
  return make_surface_point(mesh, vf[0], b);
}

SurfacePoint face_centroid(const TriangleMesh& mesh, int face) {
  return make_surface_point(mesh, face, Vec3(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0));
}

Vec3 barycentric_of(const TriangleMesh& mesh, int face, const Vec3& p) {
  const Face& t = mesh.face(face);
  const Vec3 a = mesh.vertex(t[0]);
  const Vec3 e1 = mesh.vertex(t[1]) - a;
  const Vec3 e2 = mesh.vertex(t[2]) - a;
  const Vec3 d = p - a;
  const double d11 = e1.dot(e1), d12 = e1.dot(e2), d22 = e2.dot(e2);
  const double r1 = d.dot(e1), r2 = d.dot(e2);
  const double det = d11 * d22 - d12 * d12;
  if (det <= 0.0) return Vec3(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
  const double v = (d22 * r1 - d12 * r2) / det;
  const double w = (d11 * r2 - d12 * r1) / det;
  return Vec3(1.0 - v - w, v, w);
}

bool is_valid(const TriangleMesh& mesh, const SurfacePoint& p, double tol) {
  if (p.face < 0 || p.face >= mesh.num_faces()) return false;
  if (std::abs(p.bary.sum() - 1.0) > tol || p.bary.minCoeff() < -tol) return false;
  const double scale = std::max(1.0, mesh.bbox_diagonal());
  return (mesh.interpolate(p.face, p.bary) - p.position).norm() <= tol * scale;
}

void write_surface_points(const std::filesystem::path& path, const std::vector<SurfacePoint>& points) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "face_index,b0,b1,b2\n";
  for (const auto& p : points)
    out << p.face << ',' << csv::format_double(p.bary[0]) << ',' << csv::format_double(p.bary[1]) << ','
        << csv::format_double(p.bary[2]) << '\n';
}

std::vector<SurfacePoint> read_surface_points(const std::filesystem::path& path, const TriangleMesh& mesh) {
  const csv::Table t = csv::read(path);
  const int cf = t.column("face_index"), c0 = t.column("b0"), c1 = t.column("b1"), c2 = t.column("b2");
  std::vector<SurfacePoint> out;
  for (const auto& row : t.rows) {
    const Vec3 b(csv::parse_double(row[c0]), csv::parse_double(row[c1]), csv::parse_double(row[c2]));
    out.push_back(make_surface_point(mesh, csv::parse_int(row[cf]), b));
  }
  return out;
}

}  // namespace gessa
