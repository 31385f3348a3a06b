#include "gessa/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

namespace gessa {

namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces)) {
  const int nv = num_vertices();
  const int nf = num_faces();
  for (const Face& f : faces_)
    for (int v : f)
      if (v < 0 || v >= nv) throw Error("index out of range");

  normals_.resize(nf);
  areas_.resize(nf);
  edge_lengths_.resize(nf);
  corner_angles_.resize(nf);
  adjacency_.assign(nf, {-1, -1, -1});
  adjacency_edge_.assign(nf, {-1, -1, -1});
  vertex_faces_.assign(nv, {});
  angle_sums_.assign(nv, 0.0);
  boundary_vertex_.assign(nv, false);

  double edge_sum = 0.0;
  for (int f = 0; f < nf; ++f) {
    const Face& t = faces_[f];
    const Vec3 n = (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]);
    const double len = n.norm();
    areas_[f] = 0.5 * len;
    normals_[f] = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    total_area_ += areas_[f];
    for (int i = 0; i < 3; ++i) {
      const Vec3& p = vertices_[t[i]];
      const Vec3& q = vertices_[t[(i + 1) % 3]];
      const Vec3& r = vertices_[t[(i + 2) % 3]];
      edge_lengths_[f][i] = (q - p).norm();
      edge_sum += edge_lengths_[f][i];
      const Vec3 a = q - p;
      const Vec3 b = r - p;
      corner_angles_[f][i] = std::atan2(a.cross(b).norm(), a.dot(b));
      angle_sums_[t[i]] += corner_angles_[f][i];
      vertex_faces_[t[i]].push_back(f);
    }
  }
  mean_edge_length_ = nf > 0 ? edge_sum / (3.0 * nf) : 0.0;

  std::unordered_map<std::uint64_t, std::vector<std::pair<int, int>>> edges;
  edges.reserve(static_cast<size_t>(nf) * 2);
  for (int f = 0; f < nf; ++f)
    for (int i = 0; i < 3; ++i) edges[edge_key(faces_[f][i], faces_[f][(i + 1) % 3])].emplace_back(f, i);

  for (const auto& [key, incident] : edges) {
    if (incident.size() == 2) {
      const auto [f0, i0] = incident[0];
      const auto [f1, i1] = incident[1];
      adjacency_[f0][i0] = f1;
      adjacency_edge_[f0][i0] = i1;
      adjacency_[f1][i1] = f0;
      adjacency_edge_[f1][i1] = i0;
      continue;
    }
    if (incident.size() > 2) ++non_manifold_edges_;
    if (incident.size() == 1) ++boundary_edges_;
    for (const auto& [f, i] : incident) {
      boundary_vertex_[faces_[f][i]] = true;
      boundary_vertex_[faces_[f][(i + 1) % 3]] = true;
    }
  }

  // Components through shared vertices.
  DisjointSet sets(nf);
  for (int v = 0; v < nv; ++v) {
    const auto& vf = vertex_faces_[v];
    for (size_t k = 1; k < vf.size(); ++k) sets.unite(vf[0], vf[k]);
  }
  component_.resize(nf);
  std::unordered_map<int, int> labels;
  for (int f = 0; f < nf; ++f) {
    const int root = sets.find(f);
    auto [it, inserted] = labels.emplace(root, static_cast<int>(labels.size()));
    component_[f] = it->second;
  }
  num_components_ = static_cast<int>(labels.size());

  if (nv > 0) {
    bbox_min_ = bbox_max_ = vertices_[0];
    for (const Vec3& p : vertices_) {
      bbox_min_ = bbox_min_.cwiseMin(p);
      bbox_max_ = bbox_max_.cwiseMax(p);
    }
  }
}

int TriangleMesh::corner_of(int f, int v) const {
  const Face& t = faces_[f];
  for (int i = 0; i < 3; ++i)
    if (t[i] == v) return i;
  return -1;
}

Vec3 TriangleMesh::interpolate(int f, const Vec3& bary) const {
  const Face& t = faces_[f];
  return bary[0] * vertices_[t[0]] + bary[1] * vertices_[t[1]] + bary[2] * vertices_[t[2]];
}

double default_area_tolerance(const TriangleMesh& mesh) {
  const double d = mesh.bbox_diagonal();
  return 1e-12 * d * d;
}

MeshValidation validate_mesh(const TriangleMesh& mesh, double area_tol) {
  if (area_tol < 0.0) area_tol = default_area_tolerance(mesh);
  MeshValidation report;
  for (int f = 0; f < mesh.num_faces(); ++f)
    if (mesh.face_area(f) <= area_tol) report.degenerate_faces.push_back(f);
  report.non_manifold_edges = mesh.num_non_manifold_edges();
  report.boundary_edges = mesh.num_boundary_edges();
  report.components = mesh.num_components();
  return report;
}

TriangleMesh remove_degenerate_faces(const TriangleMesh& mesh, double area_tol) {
  if (area_tol < 0.0) area_tol = default_area_tolerance(mesh);
  std::vector<int> remap(mesh.num_vertices(), -1);
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  for (int f = 0; f < mesh.num_faces(); ++f) {
    if (mesh.face_area(f) <= area_tol) continue;
    Face t = mesh.face(f);
    for (int& v : t) {
      if (remap[v] < 0) {
        remap[v] = static_cast<int>(vertices.size());
        vertices.push_back(mesh.vertex(v));
      }
      v = remap[v];
    }
    faces.push_back(t);
  }
  return TriangleMesh(std::move(vertices), std::move(faces));
}

MeshEnsemble::MeshEnsemble(std::vector<MeshPtr> surfaces_in, std::vector<std::string> ids_in)
    : surfaces(std::move(surfaces_in)), ids(std::move(ids_in)) {
  if (surfaces.size() < 2) throw Error("mesh ensemble needs at least two surfaces");
  if (ids.size() != surfaces.size()) throw Error("mesh ensemble: one subject id per surface required");
  std::set<std::string> unique(ids.begin(), ids.end());
  if (unique.size() != ids.size()) throw Error("mesh ensemble: subject ids must be unique");
  for (const auto& s : surfaces)
    if (!s || s->empty()) throw Error("mesh ensemble: empty surface");
}

}  // namespace gessa
