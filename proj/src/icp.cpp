#include "gessa/icp.hpp"

#include "gessa/spatial.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace gessa {

namespace {

Vec3 area_centroid(const TriangleMesh& m) {
  Vec3 c = Vec3::Zero();
  double total = 0.0;
  for (int f = 0; f < m.num_faces(); ++f) {
    const Face& t = m.face(f);
    c += m.face_area(f) * (m.vertex(t[0]) + m.vertex(t[1]) + m.vertex(t[2])) / 3.0;
    total += m.face_area(f);
  }
  return total > 0.0 ? Vec3(c / total) : Vec3::Zero();
}

}  // namespace

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

TriangleMesh transform_mesh(const TriangleMesh& mesh, const RigidTransform& t) {
  std::vector<Vec3> v;
  v.reserve(mesh.num_vertices());
  for (const Vec3& p : mesh.vertices()) v.push_back(t.apply(p));
  return TriangleMesh(std::move(v), mesh.faces());
}

RigidTransform kabsch(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  if (from.size() != to.size() || from.empty()) throw Error("kabsch: point sets must be non-empty and equal size");
  Vec3 cf = Vec3::Zero(), ct = Vec3::Zero();
  for (size_t i = 0; i < from.size(); ++i) {
    cf += from[i];
    ct += to[i];
  }
  cf /= static_cast<double>(from.size());
  ct /= static_cast<double>(to.size());
  Mat3 h = Mat3::Zero();
  for (size_t i = 0; i < from.size(); ++i) h += (from[i] - cf) * (to[i] - ct).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) d(2, 2) = -1.0;
  RigidTransform t;
  t.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  t.translation = ct - t.rotation * cf;
  return t;
}

IcpResult icp_align(const TriangleMesh& source, const TriangleMesh& target, int max_iters, double tol) {
  if (source.empty() || target.empty()) throw Error("icp_align: empty mesh");
  const ClosestPointGrid grid(target);
  IcpResult result;
  result.transform.translation = area_centroid(target) - area_centroid(source);

  const auto& src = source.vertices();
  std::vector<Vec3> moved(src.size()), matched(src.size());
  auto correspond = [&](const RigidTransform& t) {
    double sum = 0.0;
    for (size_t i = 0; i < src.size(); ++i) {
      moved[i] = t.apply(src[i]);
      const auto hit = grid.closest(moved[i]);
      matched[i] = hit.point.position;
      sum += hit.distance * hit.distance;
    }
    return std::sqrt(sum / static_cast<double>(src.size()));
  };

  double rms = correspond(result.transform);
  const double scale = std::max(source.bbox_diagonal(), 1e-300);
  for (int it = 0; it < max_iters; ++it) {
    result.rms.push_back(rms);
    if (rms <= 1e-12 * scale) {
      result.converged = true;
      break;
    }
    const RigidTransform step = kabsch(moved, matched);
    RigidTransform next = step.compose(result.transform);
    double next_rms = correspond(next);
    ++result.iterations;
    if (next_rms > rms) {
      // Numerical noise only; the exact update cannot increase the objective.
      correspond(result.transform);
      result.converged = true;
      break;
    }

    // Point-to-point ICP crawls along slippery directions. Extrapolate the
    // step about the moved centroid while that keeps lowering the RMS.
    Vec3 c = Vec3::Zero();
    for (const Vec3& p : moved) c += p;
    c /= static_cast<double>(moved.size());
    const Eigen::AngleAxisd aa(step.rotation);
    const Vec3 delta = step.apply(c) - c;
    for (double alpha = 2.0; alpha <= 64.0; alpha *= 2.0) {
      RigidTransform ext;
      ext.rotation = Eigen::AngleAxisd(alpha * aa.angle(), aa.axis()).toRotationMatrix();
      ext.translation = c + alpha * delta - ext.rotation * c;
      const RigidTransform candidate = ext.compose(result.transform);
      const double candidate_rms = correspond(candidate);
      if (!(candidate_rms < next_rms)) break;
      next = candidate;
      next_rms = candidate_rms;
    }
    correspond(next);
    result.transform = next;
    const double change = (rms - next_rms) / std::max(rms, 1e-300);
    rms = next_rms;
    if (change < tol) {
      result.converged = true;
      break;
    }
  }
  result.rms.push_back(rms);
  return result;
}

}  // namespace gessa
