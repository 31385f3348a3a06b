#include "gessa/curvature.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <cmath>
#include <limits>

namespace gessa {

namespace {

using Mat3 = Eigen::Matrix3d;

Mat3 rotate_tensor(const Mat3& t, const Vec3& from, const Vec3& to) {
  if ((from - to).squaredNorm() < 1e-30) return t;
  const Mat3 r = Eigen::Quaterniond::FromTwoVectors(from, to).toRotationMatrix();
  return r * t * r.transpose();
}

// Mixed Voronoi area of each corner of face f.
Vec3 corner_weights(const TriangleMesh& mesh, int f) {
  const Face& t = mesh.face(f);
  const Vec3 p[3] = {mesh.vertex(t[0]), mesh.vertex(t[1]), mesh.vertex(t[2])};
  const double area = mesh.face_area(f);
  Vec3 w = Vec3::Zero();
  if (area <= 0.0) return w;
  double cot[3];
  int obtuse = -1;
  for (int i = 0; i < 3; ++i) {
    const Vec3 a = p[(i + 1) % 3] - p[i], b = p[(i + 2) % 3] - p[i];
    const double c = a.dot(b);
    if (c < 0.0) obtuse = i;
    cot[i] = c / a.cross(b).norm();
  }
  if (obtuse >= 0) {
    for (int i = 0; i < 3; ++i) w[i] = i == obtuse ? area / 2.0 : area / 4.0;
    return w;
  }
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    w[i] = ((p[j] - p[i]).squaredNorm() * cot[k] + (p[k] - p[i]).squaredNorm() * cot[j]) / 8.0;
  }
  return w;
}

PrincipalCurvatures decompose(const Mat3& t, const Vec3& normal) {
  PrincipalCurvatures pc;
  pc.normal = normal;
  Vec3 u = normal.unitOrthogonal();
  Vec3 w = normal.cross(u);
  Eigen::Matrix2d m;
  m(0, 0) = u.dot(t * u);
  m(1, 1) = w.dot(t * w);
  m(0, 1) = m(1, 0) = 0.5 * (u.dot(t * w) + w.dot(t * u));
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
  pc.k_min = es.eigenvalues()[0];
  pc.k_max = es.eigenvalues()[1];
  const Eigen::Vector2d emin = es.eigenvectors().col(0), emax = es.eigenvectors().col(1);
  pc.d_min = (emin[0] * u + emin[1] * w).normalized();
  pc.d_max = (emax[0] * u + emax[1] * w).normalized();
  pc.defined = true;
  return pc;
}

}  // namespace

const char* to_string(CurvatureKind kind) {
  switch (kind) {
    case CurvatureKind::MC: return "MC";
    case CurvatureKind::GC: return "GC";
    case CurvatureKind::CU: return "CU";
    case CurvatureKind::SI: return "SI";
  }
  return "?";
}

CurvatureKind curvature_kind_from_string(const std::string& s) {
  for (auto k : {CurvatureKind::MC, CurvatureKind::GC, CurvatureKind::CU, CurvatureKind::SI})
    if (s == to_string(k)) return k;
  throw Error("unknown curvature kind '" + s + "' (expected MC, GC, CU or SI)");
}

CurvatureField::CurvatureField(const TriangleMesh& mesh)
    : mesh_(mesh),
      normals_(mesh.num_vertices(), Vec3::Zero()),
      tensors_(mesh.num_vertices(), Mat3::Zero()),
      usable_(mesh.num_vertices(), false) {
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const Vec3 n = mesh.face_normal(f) * mesh.face_area(f);
    for (int v : mesh.face(f)) normals_[v] += n;
  }
  for (auto& n : normals_)
    if (n.norm() > 0.0) n.normalize();

  std::vector<double> weight(mesh.num_vertices(), 0.0);
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const Face& t = mesh.face(f);
    const Vec3 nf = mesh.face_normal(f);
    const Vec3 u = (mesh.vertex(t[1]) - mesh.vertex(t[0])).normalized();
    const Vec3 w = nf.cross(u);
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Vector3d atb = Eigen::Vector3d::Zero();
    for (int i = 0; i < 3; ++i) {
      const int a = t[i], b = t[(i + 1) % 3];
      const Vec3 de = mesh.vertex(b) - mesh.vertex(a);
      const Vec3 dn = normals_[b] - normals_[a];
      const double eu = de.dot(u), ew = de.dot(w);
      Eigen::Matrix<double, 2, 3> row;
      row << eu, ew, 0.0, 0.0, eu, ew;
      const Eigen::Vector2d rhs(dn.dot(u), dn.dot(w));
      ata += row.transpose() * row;
      atb += row.transpose() * rhs;
    }
    const Eigen::Vector3d s = ata.ldlt().solve(atb);
    if (!s.allFinite()) continue;
    const Mat3 tf = s[0] * u * u.transpose() + s[1] * (u * w.transpose() + w * u.transpose()) + s[2] * w * w.transpose();
    const Vec3 cw = corner_weights(mesh, f);
    for (int i = 0; i < 3; ++i) {
      const int v = t[i];
      tensors_[v] += cw[i] * rotate_tensor(tf, nf, normals_[v]);
      weight[v] += cw[i];
    }
  }
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (weight[v] > 0.0) tensors_[v] /= weight[v];
    usable_[v] = weight[v] > 0.0 && mesh.vertex_faces(v).size() >= 2 && normals_[v].norm() > 0.0;
  }
}

PrincipalCurvatures CurvatureField::at_vertex(int v) const {
  if (!usable_[v]) return PrincipalCurvatures{};
  return decompose(tensors_[v], normals_[v]);
}

PrincipalCurvatures CurvatureField::at(const SurfacePoint& p) const {
  const Face& t = mesh_.face(p.face);
  for (int v : t)
    if (!usable_[v]) return PrincipalCurvatures{};
  Vec3 n = Vec3::Zero();
  for (int i = 0; i < 3; ++i) n += p.bary[i] * normals_[t[i]];
  if (n.norm() == 0.0) return PrincipalCurvatures{};
  n.normalize();
  Mat3 tensor = Mat3::Zero();
  for (int i = 0; i < 3; ++i) tensor += p.bary[i] * rotate_tensor(tensors_[t[i]], normals_[t[i]], n);
  return decompose(tensor, n);
}

PrincipalCurvatures estimate_principal_curvatures(const TriangleMesh& mesh, const SurfacePoint& point) {
  return CurvatureField(mesh).at(point);
}

CurvatureRecord curvature_record(const PrincipalCurvatures& pc, bool literal_si_constant) {
  CurvatureRecord r;
  const double a = pc.k_max, b = pc.k_min;
  r.mc = 0.5 * (a + b);
  r.gc = a * b;
  r.cu = std::sqrt(0.5 * (a * a + b * b));
  const double scale = literal_si_constant ? kPi / 2.0 : 2.0 / kPi;
  if (std::max(std::abs(a), std::abs(b)) <= 1e-8) return r;  // flat: SI undefined
  if (a == b) {
    r.si = scale * std::copysign(kPi / 2.0, a);
  } else {
    r.si = scale * std::atan((a + b) / (a - b));
  }
  return r;
}

std::optional<double> curvature_index(const PrincipalCurvatures& pc, CurvatureKind kind, bool literal_si_constant) {
  if (!pc.defined) return std::nullopt;
  const CurvatureRecord r = curvature_record(pc, literal_si_constant);
  switch (kind) {
    case CurvatureKind::MC: return r.mc;
    case CurvatureKind::GC: return r.gc;
    case CurvatureKind::CU: return r.cu;
    case CurvatureKind::SI: return r.si;
  }
  return std::nullopt;
}

TraitMatrix curvature_matrix(const LandmarkEnsemble& ensemble, CurvatureKind kind, bool literal_si_constant) {
  const int n = ensemble.num_surfaces(), m = ensemble.num_landmarks();
  TraitMatrix out;
  out.values = Eigen::MatrixXd::Constant(n, m, std::numeric_limits<double>::quiet_NaN());
  out.subject_ids = ensemble.meshes.ids;
  for (int k = 0; k < m; ++k) out.labels.push_back(std::to_string(k));
  for (int j = 0; j < n; ++j) {
    const CurvatureField field(ensemble.meshes[j]);
    for (int k = 0; k < m; ++k) {
      const auto v = curvature_index(field.at(ensemble.landmarks[j][k]), kind, literal_si_constant);
      if (v) out.values(j, k) = *v;
    }
  }
  out.flag_missing(0.05);
  return out;
}

}  // namespace gessa
