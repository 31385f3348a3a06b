#pragma once

#include "gessa/common.hpp"

#include <memory>
#include <string>
#include <vector>

namespace gessa {

/// Immutable indexed triangle surface with face adjacency.
///
/// Local edge `i` of face `f` runs from `face(f)[i]` to `face(f)[(i + 1) % 3]`;
/// the vertex opposite to it is `face(f)[(i + 2) % 3]`. Edges shared by more
/// than two faces are treated as boundary edges for adjacency purposes.
class TriangleMesh {
 public:
  TriangleMesh() = default;

  /// Throws `Error("index out of range")` when a face references a missing vertex.
  TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces);

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_faces() const { return static_cast<int>(faces_.size()); }
  bool empty() const { return faces_.empty(); }

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  const Vec3& vertex(int v) const { return vertices_[v]; }
  const Face& face(int f) const { return faces_[f]; }

  /// Unit normal; zero for faces whose area vanishes numerically.
  const Vec3& face_normal(int f) const { return normals_[f]; }
  double face_area(int f) const { return areas_[f]; }

  /// Face across local edge `i`, or -1 on boundary / non-manifold edges.
  int neighbor(int f, int i) const { return adjacency_[f][i]; }
  /// Local index of the shared edge inside `neighbor(f, i)`.
  int neighbor_edge(int f, int i) const { return adjacency_edge_[f][i]; }

  double edge_length(int f, int i) const { return edge_lengths_[f][i]; }
  /// Interior angle of face `f` at its corner `i`.
  double corner_angle(int f, int i) const { return corner_angles_[f][i]; }

  const std::vector<int>& vertex_faces(int v) const { return vertex_faces_[v]; }
  double vertex_angle_sum(int v) const { return angle_sums_[v]; }
  bool is_boundary_vertex(int v) const { return boundary_vertex_[v]; }

  int component(int f) const { return component_[f]; }
  int num_components() const { return num_components_; }
  int num_non_manifold_edges() const { return non_manifold_edges_; }
  int num_boundary_edges() const { return boundary_edges_; }

  const Vec3& bbox_min() const { return bbox_min_; }
  const Vec3& bbox_max() const { return bbox_max_; }
  double bbox_diagonal() const { return (bbox_max_ - bbox_min_).norm(); }
  double mean_edge_length() const { return mean_edge_length_; }
  double total_area() const { return total_area_; }

  /// Local index (0..2) of vertex `v` in face `f`, or -1.
  int corner_of(int f, int v) const;
  /// Barycentric interpolation on face `f`.
  Vec3 interpolate(int f, const Vec3& bary) const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  std::vector<Vec3> normals_;
  std::vector<double> areas_;
  std::vector<std::array<int, 3>> adjacency_;
  std::vector<std::array<int, 3>> adjacency_edge_;
  std::vector<std::array<double, 3>> edge_lengths_;
  std::vector<std::array<double, 3>> corner_angles_;
  std::vector<std::vector<int>> vertex_faces_;
  std::vector<double> angle_sums_;
  std::vector<bool> boundary_vertex_;
  std::vector<int> component_;
  int num_components_ = 0;
  int non_manifold_edges_ = 0;
  int boundary_edges_ = 0;
  Vec3 bbox_min_ = Vec3::Zero();
  Vec3 bbox_max_ = Vec3::Zero();
  double mean_edge_length_ = 0.0;
  double total_area_ = 0.0;
};

using MeshPtr = std::shared_ptr<const TriangleMesh>;

struct MeshValidation {
  std::vector<int> degenerate_faces;
  int non_manifold_edges = 0;
  int boundary_edges = 0;
  int components = 0;

  bool clean() const { return degenerate_faces.empty() && non_manifold_edges == 0 && components == 1; }
};

/// Default degenerate-area tolerance: 1e-12 times the squared bounding-box diagonal.
double default_area_tolerance(const TriangleMesh& mesh);

/// Report-only hygiene check. A negative `area_tol` selects the default.
MeshValidation validate_mesh(const TriangleMesh& mesh, double area_tol = -1.0);

/// Copy of `mesh` without faces below `area_tol` and without unreferenced vertices.
TriangleMesh remove_degenerate_faces(const TriangleMesh& mesh, double area_tol = -1.0);

/// Ordered surfaces sharing one coordinate frame.
struct MeshEnsemble {
  std::vector<MeshPtr> surfaces;
  std::vector<std::string> ids;

  MeshEnsemble() = default;
  /// Throws unless there are at least two surfaces with unique ids.
  MeshEnsemble(std::vector<MeshPtr> surfaces, std::vector<std::string> ids);

  int size() const { return static_cast<int>(surfaces.size()); }
  const TriangleMesh& operator[](int j) const { return *surfaces[j]; }
};

}  // namespace gessa
