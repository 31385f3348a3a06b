#pragma once

#include "gessa/surface_point.hpp"

#include <Eigen/Core>

#include <vector>

namespace gessa {

struct GeodesicPath {
  std::vector<SurfacePoint> points;  // from source to target
  double length = 0.0;
};

/// Exact single-source geodesic distances by window propagation
/// (continuous Dijkstra with vertex-distance window filtering).
///
/// One engine owns scratch buffers sized to its mesh and is reused across
/// sources; only entries touched by the previous run are reset. Not thread
/// safe; use one engine per thread.
class GeodesicEngine {
 public:
  explicit GeodesicEngine(const TriangleMesh& mesh);

  const TriangleMesh& mesh() const { return mesh_; }

  /// Solves from `source`. Distances up to `radius` are exact; larger ones
  /// are upper bounds or infinity.
  void propagate(const SurfacePoint& source, double radius = kInf);

  const SurfacePoint& source() const { return source_; }
  double radius() const { return radius_; }

  double distance(const SurfacePoint& target) const;
  double vertex_distance(int v) const { return dist_[v]; }

  /// Shortest path from the source to `target`; empty points if unreachable.
  GeodesicPath path(const SurfacePoint& target) const;

  /// Tangent vector at the source pointing along the shortest path to
  /// `target`, with norm equal to the geodesic distance.
  TangentVector log(const SurfacePoint& target) const;
  /// Same as `log` but also returns the distance; zero vector when unreachable.
  Vec3 log_direction(const SurfacePoint& target, double* distance) const;

  size_t window_count() const { return windows_.size(); }

 private:
  struct Window {
    int face;    // window lies on local edge `edge` of `face` and propagates into it
    int edge;
    double b0, b1;
    double sx, sy;
    double sigma;
    int parent;  // window index, or -1 for windows emitted by a (pseudo-)source
    int pseudo;  // emitting vertex for root windows, -1 for the real source
    int next;
    bool alive;
  };

  enum class Pred : unsigned char { None, Source, Window, Vertex };

  struct Frame {
    double len, rx, ry;
  };

  struct Best {
    double d = kInf;
    Pred kind = Pred::None;
    int index = -1;
  };

  void reset();
  void update_vertex(int v, double d, Pred kind, int index);
  void add_root_window(int face, int edge, const Vec3& s, double sigma, int pseudo);
  void add_window(Window w);
  bool trim(Window& w) const;
  double window_key(const Window& w) const;
  void propagate_window(int wi);
  void emit_vertex(int v);

  Vec2 vertex2d(int face, int edge, int m) const;
  Vec2 point2d(int face, int edge, const Vec3& bary) const;
  Best best(const SurfacePoint& target) const;
  void trace_window(int wi, Vec3 point, std::vector<SurfacePoint>& out) const;
  void trace_vertex(int v, std::vector<SurfacePoint>& out) const;
  bool in_source_face(int face) const;

  const TriangleMesh& mesh_;
  std::vector<Frame> frames_;       // per (face, edge)
  std::vector<bool> emits_;         // saddle or boundary vertex
  double eps_ = 0.0;

  SurfacePoint source_;
  std::vector<int> source_faces_;
  int source_vertex_ = -1;
  double radius_ = kInf;

  std::vector<double> dist_;
  std::vector<Pred> pred_kind_;
  std::vector<int> pred_index_;
  std::vector<double> emitted_at_;
  std::vector<int> touched_vertices_;
  std::vector<int> head_;           // per (face, edge) window list
  std::vector<int> touched_heads_;
  std::vector<Window> windows_;

  struct Event {
    double key;
    int index;  // >= 0 window, < 0 vertex (-(v + 1))
    bool operator>(const Event& o) const { return key > o.key || (key == o.key && index > o.index); }
  };
  std::vector<Event> heap_;
};

double geodesic_distance(const TriangleMesh& mesh, const SurfacePoint& a, const SurfacePoint& b);
GeodesicPath geodesic_path(const TriangleMesh& mesh, const SurfacePoint& a, const SurfacePoint& b);
TangentVector log_map(const TriangleMesh& mesh, const SurfacePoint& a, const SurfacePoint& b);

struct ExpResult {
  SurfacePoint point;
  bool truncated = false;  // walk stopped at an open boundary
  Vec3 final_direction = Vec3::Zero();  // unit direction at the end point, in its face plane
};

/// Straightest-geodesic walk from `a` along `u` for arc length |u|.
ExpResult exp_map_walk(const TriangleMesh& mesh, const SurfacePoint& a, const Vec3& u);
SurfacePoint exp_map(const TriangleMesh& mesh, const SurfacePoint& a, const TangentVector& u);

/// Symmetric matrix of pairwise geodesic distances.
Eigen::MatrixXd pairwise_geodesics(const TriangleMesh& mesh, const std::vector<SurfacePoint>& points);

/// Rotates an in-plane vector of face `from` about the shared edge into the
/// plane of the edge-adjacent face `to`, as if `from` were unfolded onto it.
Vec3 unfold_vector(const TriangleMesh& mesh, int from, int to, const Vec3& v);

/// Vertex tangent-space helpers. Directions at a vertex are represented by a
/// polar angle around it measured from edge face[c]->face[c+1] of the base
/// face, scaled by 2*pi / angle sum at interior vertices.
double vertex_polar_angle(const TriangleMesh& mesh, int base_face, int vertex, int face, const Vec3& dir);
Vec3 vertex_direction_in_face(const TriangleMesh& mesh, int base_face, int vertex, double surface_angle, int* face);

}  // namespace gessa
