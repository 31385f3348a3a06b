#pragma once

#include "gessa/mesh.hpp"

#include <Eigen/Core>

#include <vector>

namespace gessa {

using Mat3 = Eigen::Matrix3d;

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
  /// (*this) after `other`: p -> this(other(p)).
  RigidTransform compose(const RigidTransform& other) const;
  static RigidTransform identity() { return {}; }
};

TriangleMesh transform_mesh(const TriangleMesh& mesh, const RigidTransform& t);

/// Least-squares rotation + translation mapping `from` onto `to` (Kabsch).
RigidTransform kabsch(const std::vector<Vec3>& from, const std::vector<Vec3>& to);

struct IcpResult {
  RigidTransform transform;       // maps source into target's frame
  bool converged = false;
  int iterations = 0;
  std::vector<double> rms;        // closest-point RMS before each update, then the final value
};

/// Point-to-point ICP with point-to-triangle correspondences. The source is
/// first translated so its area centroid matches the target's.
IcpResult icp_align(const TriangleMesh& source, const TriangleMesh& target, int max_iters = 100, double tol = 1e-8);

}  // namespace gessa
