#pragma once

#include "gessa/mesh.hpp"
#include "gessa/surface_point.hpp"
#include "gessa/traits.hpp"

#include <optional>
#include <vector>

namespace gessa {

struct PrincipalCurvatures {
  double k_max = 0.0;
  double k_min = 0.0;
  Vec3 d_max = Vec3::Zero();
  Vec3 d_min = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  bool defined = false;
};

enum class CurvatureKind { MC, GC, CU, SI };

const char* to_string(CurvatureKind kind);
CurvatureKind curvature_kind_from_string(const std::string& s);

/// Per-vertex curvature tensors from least-squares fits of the second
/// fundamental form to normal differences along each face's edges, blended
/// into vertex frames with mixed Voronoi weights.
class CurvatureField {
 public:
  explicit CurvatureField(const TriangleMesh& mesh);

  const Vec3& vertex_normal(int v) const { return normals_[v]; }
  PrincipalCurvatures at_vertex(int v) const;
  /// Barycentric blend of the vertex tensors of the point's face.
  PrincipalCurvatures at(const SurfacePoint& p) const;

 private:
  using Mat3 = Eigen::Matrix3d;
  const TriangleMesh& mesh_;
  std::vector<Vec3> normals_;
  std::vector<Mat3> tensors_;   // ambient 3x3, tangent to the vertex normal
  std::vector<bool> usable_;
};

PrincipalCurvatures estimate_principal_curvatures(const TriangleMesh& mesh, const SurfacePoint& point);

struct CurvatureRecord {
  double mc = 0.0;
  double gc = 0.0;
  double cu = 0.0;
  std::optional<double> si;  // empty on flat points
};

/// SI uses (2/pi) atan by default; `literal_si_constant` switches to (pi/2) atan.
CurvatureRecord curvature_record(const PrincipalCurvatures& pc, bool literal_si_constant = false);

/// Empty when the curvature is undefined or (for SI) the point is flat.
std::optional<double> curvature_index(const PrincipalCurvatures& pc, CurvatureKind kind,
                                      bool literal_si_constant = false);

/// Row j holds subject j's index at every landmark. Columns with more than
/// 5% missing entries are flagged.
TraitMatrix curvature_matrix(const LandmarkEnsemble& ensemble, CurvatureKind kind, bool literal_si_constant = false);

}  // namespace gessa
