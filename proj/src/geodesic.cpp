#include "gessa/geodesic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace gessa {

namespace {

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Distance from s to the segment [b0, b1] on the x axis.
inline double segment_distance(double sx, double sy, double b0, double b1) {
  if (sx < b0) return std::hypot(sx - b0, sy);
  if (sx > b1) return std::hypot(sx - b1, sy);
  return std::abs(sy);
}

constexpr double kBaryTol = 1e-9;

// Corner index of `v` in the face holding the point when the point sits on a
// vertex, else -1.
int vertex_corner(const SurfacePoint& p) {
  for (int i = 0; i < 3; ++i)
    if (p.bary[i] > 1.0 - kBaryTol) return i;
  return -1;
}

// Local edge index holding the point when exactly one weight vanishes, else -1.
int edge_of(const SurfacePoint& p) {
  int zero = -1, count = 0;
  for (int i = 0; i < 3; ++i)
    if (p.bary[i] < kBaryTol) {
      zero = i;
      ++count;
    }
  if (count != 1) return -1;
  return (zero + 1) % 3;  // edge opposite the vanishing corner
}

struct FanEntry {
  int face;
  int start;      // vertex at the start edge v->start
  int end;        // vertex at the end edge v->end
  double angle0;  // accumulated surface angle at the start edge
  double corner;
};

// Faces around `v` ordered by surface angle, starting at `base`. Backward
// entries (only reachable when the fan is open) have negative angles.
std::vector<FanEntry> vertex_fan(const TriangleMesh& mesh, int v, int base) {
  std::vector<FanEntry> fan;
  const int limit = static_cast<int>(mesh.vertex_faces(v).size()) + 1;
  int h = base;
  int c = mesh.corner_of(h, v);
  double acc = 0.0;
  bool closed = false;
  for (int step = 0; step < limit; ++step) {
    const Face& t = mesh.face(h);
    fan.push_back({h, t[(c + 1) % 3], t[(c + 2) % 3], acc, mesh.corner_angle(h, c)});
    acc += mesh.corner_angle(h, c);
    const int next = mesh.neighbor(h, (c + 2) % 3);
    if (next < 0) break;
    if (next == base) {
      closed = true;
      break;
    }
    const int nc = mesh.corner_of(next, v);
    if (nc < 0) break;
    // Keep the walk consistent when neighbor orientation flips.
    const Face& nt = mesh.face(next);
    if (nt[(nc + 1) % 3] != t[(c + 2) % 3]) break;
    h = next;
    c = nc;
  }
  if (closed) return fan;

  h = base;
  c = mesh.corner_of(h, v);
  acc = 0.0;
  for (int step = 0; step < limit; ++step) {
    const Face& t = mesh.face(h);
    const int prev = mesh.neighbor(h, c);
    if (prev < 0) break;
    const int pc = mesh.corner_of(prev, v);
    if (pc < 0) break;
    const Face& pt = mesh.face(prev);
    if (pt[(pc + 2) % 3] != t[(c + 1) % 3]) break;
    if (std::any_of(fan.begin(), fan.end(), [prev](const FanEntry& e) { return e.face == prev; })) break;
    acc -= mesh.corner_angle(prev, pc);
    fan.push_back({prev, pt[(pc + 1) % 3], pt[(pc + 2) % 3], acc, mesh.corner_angle(prev, pc)});
    h = prev;
    c = pc;
  }
  std::sort(fan.begin(), fan.end(), [](const FanEntry& a, const FanEntry& b) { return a.angle0 < b.angle0; });
  return fan;
}

double fan_total(const std::vector<FanEntry>& fan) {
  double total = 0.0;
  for (const auto& e : fan) total += e.corner;
  return total;
}

bool fan_closed(const TriangleMesh& mesh, int v) { return !mesh.is_boundary_vertex(v); }

// Unit vector in the plane of `face`, rotated from v->start toward v->end by `theta`.
Vec3 wedge_direction(const TriangleMesh& mesh, int v, const FanEntry& e, double theta) {
  const Vec3 p = mesh.vertex(v);
  const Vec3 e1 = (mesh.vertex(e.start) - p).normalized();
  Vec3 e2 = mesh.vertex(e.end) - p;
  e2 = (e2 - e1 * e1.dot(e2)).normalized();
  return std::cos(theta) * e1 + std::sin(theta) * e2;
}

double wedge_angle(const TriangleMesh& mesh, int v, const FanEntry& e, const Vec3& dir) {
  const Vec3 p = mesh.vertex(v);
  const Vec3 e1 = (mesh.vertex(e.start) - p).normalized();
  Vec3 e2 = mesh.vertex(e.end) - p;
  e2 = (e2 - e1 * e1.dot(e2)).normalized();
  return std::atan2(dir.dot(e2), dir.dot(e1));
}

}  // namespace

// ---------------------------------------------------------------------------
// Engine

GeodesicEngine::GeodesicEngine(const TriangleMesh& mesh) : mesh_(mesh) {
  const int nf = mesh.num_faces();
  const int nv = mesh.num_vertices();
  frames_.resize(3 * static_cast<size_t>(nf));
  for (int f = 0; f < nf; ++f) {
    for (int i = 0; i < 3; ++i) {
      const double l = mesh.edge_length(f, i);
      const double lpr = mesh.edge_length(f, (i + 2) % 3);
      const double lqr = mesh.edge_length(f, (i + 1) % 3);
      const double rx = l > 0.0 ? (l * l + lpr * lpr - lqr * lqr) / (2.0 * l) : 0.0;
      frames_[3 * f + i] = {l, rx, -std::sqrt(std::max(lpr * lpr - rx * rx, 0.0))};
    }
  }
  emits_.assign(nv, false);
  for (int v = 0; v < nv; ++v)
    emits_[v] = mesh.is_boundary_vertex(v) || mesh.vertex_angle_sum(v) > 2.0 * kPi + 1e-9;
  eps_ = 1e-10 * std::max(mesh.bbox_diagonal(), 1e-300);

  dist_.assign(nv, kInf);
  pred_kind_.assign(nv, Pred::None);
  pred_index_.assign(nv, -1);
  emitted_at_.assign(nv, kInf);
  head_.assign(3 * static_cast<size_t>(nf), -1);
}

void GeodesicEngine::reset() {
  for (int v : touched_vertices_) {
    dist_[v] = kInf;
    pred_kind_[v] = Pred::None;
    pred_index_[v] = -1;
    emitted_at_[v] = kInf;
  }
  touched_vertices_.clear();
  for (int h : touched_heads_) head_[h] = -1;
  touched_heads_.clear();
  windows_.clear();
  heap_.clear();
  source_faces_.clear();
  source_vertex_ = -1;
}

Vec2 GeodesicEngine::vertex2d(int face, int edge, int m) const {
  const Frame& fr = frames_[3 * face + edge];
  switch (m) {
    case 0: return Vec2(0.0, 0.0);
    case 1: return Vec2(fr.len, 0.0);
    default: return Vec2(fr.rx, fr.ry);
  }
}

Vec2 GeodesicEngine::point2d(int face, int edge, const Vec3& bary) const {
  Vec2 p = Vec2::Zero();
  for (int m = 0; m < 3; ++m) p += bary[(edge + m) % 3] * vertex2d(face, edge, m);
  return p;
}

void GeodesicEngine::update_vertex(int v, double d, Pred kind, int index) {
  if (!(d < dist_[v])) return;
  if (dist_[v] == kInf && pred_kind_[v] == Pred::None) touched_vertices_.push_back(v);
  dist_[v] = d;
  pred_kind_[v] = kind;
  pred_index_[v] = index;
  if (emits_[v] || v == source_vertex_) {
    heap_.push_back({d, -(v + 1)});
    std::push_heap(heap_.begin(), heap_.end(), std::greater<>());
  }
}

double GeodesicEngine::window_key(const Window& w) const {
  return w.sigma + segment_distance(w.sx, w.sy, w.b0, w.b1);
}

bool GeodesicEngine::trim(Window& w) const {
  const Face& t = mesh_.face(w.face);
  const double len = frames_[3 * w.face + w.edge].len;
  const double da = dist_[t[w.edge]];
  const double db = dist_[t[(w.edge + 1) % 3]];
  const double dc = dist_[t[(w.edge + 2) % 3]];
  auto value = [&w](double x) { return w.sigma + std::hypot(w.sx - x, w.sy); };

  // Against the edge start A: sigma + |s - x| - (d(A) + x) is nonincreasing in x.
  if (da < kInf) {
    if (value(w.b1) - (da + w.b1) > eps_) return false;
    if (value(w.b0) - (da + w.b0) > 0.0) {
      const double d = da - w.sigma;
      double root = (w.sx * w.sx + w.sy * w.sy - d * d) / (2.0 * (w.sx + d));
      if (!(root >= w.b0 && root <= w.b1)) {
        double lo = w.b0, hi = w.b1;
        for (int it = 0; it < 100; ++it) {
          const double mid = 0.5 * (lo + hi);
          (value(mid) - (da + mid) > 0.0 ? lo : hi) = mid;
        }
        root = hi;
      }
      w.b0 = root;
    }
  }
  // Against the edge end B: sigma + |s - x| - (d(B) + len - x) is nondecreasing.
  if (db < kInf) {
    if (value(w.b0) - (db + len - w.b0) > eps_) return false;
    if (value(w.b1) - (db + len - w.b1) > 0.0) {
      const double d = db - w.sigma;
      const double ux = len - w.sx;
      const double u = (ux * ux + w.sy * w.sy - d * d) / (2.0 * (ux + d));
      double root = len - u;
      if (!(root >= w.b0 && root <= w.b1)) {
        double lo = w.b0, hi = w.b1;
        for (int it = 0; it < 100; ++it) {
          const double mid = 0.5 * (lo + hi);
          (value(mid) - (db + len - mid) > 0.0 ? hi : lo) = mid;
        }
        root = lo;
      }
      w.b1 = root;
    }
  }
  if (!(w.b1 - w.b0 > 1e-14 * len)) return false;

  // Against the opposite vertex C.
  if (dc < kInf) {
    const Vec2 c = vertex2d(w.face, w.edge, 2);
    const double reach = std::max(std::hypot(c.x() - w.b0, c.y()), std::hypot(c.x() - w.b1, c.y()));
    if (w.sigma + segment_distance(w.sx, w.sy, w.b0, w.b1) > dc + reach + eps_) return false;
  }
  return true;
}

void GeodesicEngine::add_window(Window w) {
  if (!trim(w)) return;
  const int wi = static_cast<int>(windows_.size());
  const int slot = 3 * w.face + w.edge;
  if (head_[slot] < 0) touched_heads_.push_back(slot);
  w.next = head_[slot];
  w.alive = true;
  head_[slot] = wi;
  windows_.push_back(w);

  const Face& t = mesh_.face(w.face);
  const double len = frames_[slot].len;
  const double tol = 1e-12 * len;
  if (w.b0 <= tol) update_vertex(t[w.edge], w.sigma + std::hypot(w.sx, w.sy), Pred::Window, wi);
  if (w.b1 >= len - tol) update_vertex(t[(w.edge + 1) % 3], w.sigma + std::hypot(w.sx - len, w.sy), Pred::Window, wi);

  heap_.push_back({window_key(w), wi});
  std::push_heap(heap_.begin(), heap_.end(), std::greater<>());
}

void GeodesicEngine::add_root_window(int face, int edge, const Vec3& s, double sigma, int pseudo) {
  const Face& t = mesh_.face(face);
  const Vec3 a = mesh_.vertex(t[edge]);
  const Vec3 b = mesh_.vertex(t[(edge + 1) % 3]);
  const double len = frames_[3 * face + edge].len;
  if (len <= 0.0) return;
  const Vec3 ex = (b - a) / len;
  const double sx = (s - a).dot(ex);
  const double sy = ((s - a) - sx * ex).norm();
  if (sy <= 1e-12 * len) return;
  add_window({face, edge, 0.0, len, sx, sy, sigma, -1, pseudo, -1, true});
}

void GeodesicEngine::emit_vertex(int v) {
  const double d = dist_[v];
  const Vec3 p = mesh_.vertex(v);
  for (int h : mesh_.vertex_faces(v)) {
    const int c = mesh_.corner_of(h, v);
    const int k = (c + 1) % 3;  // edge opposite v
    const Face& t = mesh_.face(h);
    update_vertex(t[(c + 1) % 3], d + mesh_.edge_length(h, c), Pred::Vertex, v);
    update_vertex(t[(c + 2) % 3], d + mesh_.edge_length(h, (c + 2) % 3), Pred::Vertex, v);
    const int g = mesh_.neighbor(h, k);
    if (g >= 0) add_root_window(g, mesh_.neighbor_edge(h, k), p, d, v);
  }
}

void GeodesicEngine::propagate_window(int wi) {
  Window w = windows_[wi];
  const int f = w.face, i = w.edge;
  const Face& t = mesh_.face(f);
  const Vec2 s(w.sx, w.sy);
  const Vec2 P = vertex2d(f, i, 0), Q = vertex2d(f, i, 1), R = vertex2d(f, i, 2);

  // Where the ray from s through R meets the window edge.
  const double x_r = w.sx + (R.x() - w.sx) * w.sy / (w.sy - R.y());

  if (x_r > w.b0 && x_r < w.b1) update_vertex(t[(i + 2) % 3], w.sigma + (s - R).norm(), Pred::Window, wi);

  auto child = [&](int e, double t0, double t1) {
    if (!(t1 > t0)) return;
    // Child edge endpoints in this frame: e0 = f[e], e1 = f[e+1].
    const bool right = e == (i + 1) % 3;
    const Vec2 e0 = right ? Q : R;
    const Vec2 e1 = right ? R : P;
    const Vec2 ed = e1 - e0;
    auto hit = [&](double x) {
      const Vec2 d = Vec2(x, 0.0) - s;
      const double den = cross2(ed, d);
      double mu = den != 0.0 ? cross2(s - e0, d) / den : 0.0;
      return std::clamp(mu, 0.0, 1.0);
    };
    const double mu0 = hit(t0), mu1 = hit(t1);

    const int g = mesh_.neighbor(f, e);
    if (g < 0) return;
    const int j = mesh_.neighbor_edge(f, e);
    const Face& gt = mesh_.face(g);
    const bool flipped = gt[j] == t[e];  // inconsistent orientation across the edge
    const Vec2 o = flipped ? e0 : e1;
    const Vec2 x_end = flipped ? e1 : e0;
    const double elen = (x_end - o).norm();
    if (elen <= 0.0) return;
    const Vec2 ex = (x_end - o) / elen;
    Vec2 ey(-ex.y(), ex.x());
    const Vec2 third = right ? P : Q;
    if ((third - o).dot(ey) < 0.0) ey = -ey;

    const double glen = frames_[3 * g + j].len;
    auto along = [&](double mu) { return std::clamp(((e0 + mu * ed) - o).dot(ex) * (glen / elen), 0.0, glen); };
    double c0 = along(mu0), c1 = along(mu1);
    if (c0 > c1) std::swap(c0, c1);
    const Vec2 sl = s - o;
    const double sy = std::max(sl.dot(ey), 1e-14 * glen);
    add_window({g, j, c0, c1, sl.dot(ex) * (glen / elen), sy, w.sigma, wi, -1, -1, true});
  };

  const int left_edge = (i + 2) % 3, right_edge = (i + 1) % 3;
  if (x_r <= w.b0) {
    child(right_edge, w.b0, w.b1);
  } else if (x_r >= w.b1) {
    child(left_edge, w.b0, w.b1);
  } else {
    child(left_edge, w.b0, x_r);
    child(right_edge, x_r, w.b1);
  }
}

bool GeodesicEngine::in_source_face(int face) const {
  return std::find(source_faces_.begin(), source_faces_.end(), face) != source_faces_.end();
}

void GeodesicEngine::propagate(const SurfacePoint& source, double radius) {
  reset();
  source_ = source;
  radius_ = radius;
  const int f0 = source.face;
  const Face& t0 = mesh_.face(f0);

  const int corner = vertex_corner(source);
  const int edge = corner < 0 ? edge_of(source) : -1;
  if (corner >= 0) {
    const int v = t0[corner];
    source_vertex_ = v;
    source_faces_ = mesh_.vertex_faces(v);
    update_vertex(v, 0.0, Pred::Source, -1);
  } else {
    source_faces_.push_back(f0);
    const int g0 = edge >= 0 ? mesh_.neighbor(f0, edge) : -1;
    if (g0 >= 0) source_faces_.push_back(g0);
    for (int f : source_faces_) {
      const Face& t = mesh_.face(f);
      for (int k = 0; k < 3; ++k) update_vertex(t[k], (mesh_.vertex(t[k]) - source.position).norm(), Pred::Source, -1);
    }
    for (int f : source_faces_) {
      for (int k = 0; k < 3; ++k) {
        const int g = mesh_.neighbor(f, k);
        if (g < 0 || in_source_face(g)) continue;
        add_root_window(g, mesh_.neighbor_edge(f, k), source.position, 0.0, -1);
      }
    }
  }

  while (!heap_.empty()) {
    std::pop_heap(heap_.begin(), heap_.end(), std::greater<>());
    const Event ev = heap_.back();
    heap_.pop_back();
    if (ev.key > radius) break;
    if (ev.index < 0) {
      const int v = -ev.index - 1;
      if (ev.key != dist_[v] || emitted_at_[v] <= dist_[v]) continue;
      emitted_at_[v] = dist_[v];
      emit_vertex(v);
      continue;
    }
    Window& w = windows_[ev.index];
    if (!w.alive) continue;
    Window trimmed = w;
    if (!trim(trimmed)) {
      w.alive = false;
      continue;
    }
    w.b0 = trimmed.b0;
    w.b1 = trimmed.b1;
    propagate_window(ev.index);
  }
}

GeodesicEngine::Best GeodesicEngine::best(const SurfacePoint& target) const {
  if (mesh_.component(target.face) != mesh_.component(source_.face))
    throw ComponentError("geodesic query between different connected components");
  Best b;
  const int g = target.face;
  const Face& t = mesh_.face(g);
  if (in_source_face(g)) b = {(target.position - source_.position).norm(), Pred::Source, -1};
  for (int k = 0; k < 3; ++k) {
    const int v = t[k];
    if (dist_[v] == kInf) continue;
    const double d = dist_[v] + (mesh_.vertex(v) - target.position).norm();
    if (d < b.d) b = {d, Pred::Vertex, v};
  }
  for (int k = 0; k < 3; ++k) {
    const int slot = 3 * g + k;
    if (head_[slot] < 0) continue;
    const Vec2 q = point2d(g, k, target.bary);
    const double tol = 1e-12 * frames_[slot].len;
    for (int wi = head_[slot]; wi >= 0; wi = windows_[wi].next) {
      const Window& w = windows_[wi];
      if (!w.alive) continue;
      const double x = w.sx + (q.x() - w.sx) * w.sy / (w.sy - std::min(q.y(), 0.0));
      if (x < w.b0 - tol || x > w.b1 + tol) continue;
      const double d = w.sigma + std::hypot(q.x() - w.sx, q.y() - w.sy);
      if (d < b.d) b = {d, Pred::Window, wi};
    }
  }
  return b;
}

double GeodesicEngine::distance(const SurfacePoint& target) const { return best(target).d; }

void GeodesicEngine::trace_window(int wi, Vec3 point, std::vector<SurfacePoint>& out) const {
  while (true) {
    const Window& w = windows_[wi];
    const Face& t = mesh_.face(w.face);
    const Vec2 q = point2d(w.face, w.edge, barycentric_of(mesh_, w.face, point));
    const double denom = w.sy - std::min(q.y(), 0.0);
    double x = denom > 0.0 ? w.sx + (q.x() - w.sx) * w.sy / denom : q.x();
    x = std::clamp(x, w.b0, w.b1);
    const double len = frames_[3 * w.face + w.edge].len;
    const double u = len > 0.0 ? x / len : 0.0;
    Vec3 bary = Vec3::Zero();
    bary[w.edge] = 1.0 - u;
    bary[(w.edge + 1) % 3] = u;
    const SurfacePoint crossing = make_surface_point(mesh_, w.face, bary);
    out.push_back(crossing);
    if (w.parent >= 0) {
      point = crossing.position;
      wi = w.parent;
      continue;
    }
    if (w.pseudo >= 0) {
      trace_vertex(w.pseudo, out);
    } else {
      out.push_back(source_);
    }
    (void)t;
    return;
  }
}

void GeodesicEngine::trace_vertex(int v, std::vector<SurfacePoint>& out) const {
  while (true) {
    out.push_back(vertex_point(mesh_, v));
    switch (pred_kind_[v]) {
      case Pred::Source:
        out.push_back(source_);
        return;
      case Pred::Vertex:
        v = pred_index_[v];
        continue;
      case Pred::Window:
        trace_window(pred_index_[v], mesh_.vertex(v), out);
        return;
      case Pred::None:
        return;
    }
  }
}

GeodesicPath GeodesicEngine::path(const SurfacePoint& target) const {
  GeodesicPath result;
  const Best b = best(target);
  if (b.d == kInf) return result;
  std::vector<SurfacePoint> rev{target};
  switch (b.kind) {
    case Pred::Source: rev.push_back(source_); break;
    case Pred::Vertex: trace_vertex(b.index, rev); break;
    case Pred::Window: trace_window(b.index, target.position, rev); break;
    case Pred::None: break;
  }
  const double tiny = 1e-13 * std::max(mesh_.bbox_diagonal(), 1e-300);
  for (auto it = rev.rbegin(); it != rev.rend(); ++it) {
    if (!result.points.empty() && (result.points.back().position - it->position).norm() <= tiny) continue;
    result.points.push_back(*it);
  }
  if (result.points.size() == 1) result.points.push_back(target);
  for (size_t k = 1; k < result.points.size(); ++k)
    result.length += (result.points[k].position - result.points[k - 1].position).norm();
  return result;
}

Vec3 GeodesicEngine::log_direction(const SurfacePoint& target, double* distance) const {
  const Best b = best(target);
  if (distance) *distance = b.d;
  if (b.d == kInf || b.d <= 0.0) return Vec3::Zero();

  // First point after the source along the path.
  std::vector<SurfacePoint> rev{target};
  switch (b.kind) {
    case Pred::Source: rev.push_back(source_); break;
    case Pred::Vertex: trace_vertex(b.index, rev); break;
    case Pred::Window: trace_window(b.index, target.position, rev); break;
    case Pred::None: break;
  }
  const double tiny = 1e-13 * std::max(mesh_.bbox_diagonal(), 1e-300);
  Vec3 next = target.position;
  int next_face = target.face;
  for (int k = static_cast<int>(rev.size()) - 1; k >= 0; --k) {
    if ((rev[k].position - source_.position).norm() > tiny) {
      next = rev[k].position;
      next_face = rev[k].face;
      break;
    }
  }
  Vec3 dir = next - source_.position;
  const int f0 = source_.face;
  const Vec3& n0 = mesh_.face_normal(f0);

  if (source_vertex_ >= 0) {
    // Find the wedge around the source vertex that contains the direction.
    const int v = source_vertex_;
    const auto fan = vertex_fan(mesh_, v, f0);
    const bool closed = fan_closed(mesh_, v);
    const double total = fan_total(fan);
    double best_err = kInf, surface = 0.0;
    for (const auto& e : fan) {
      const Vec3 in_plane = project_to_tangent(dir, mesh_.face_normal(e.face));
      const double a = wedge_angle(mesh_, v, e, in_plane.normalized());
      const double off = std::abs(dir.normalized().dot(mesh_.face_normal(e.face)));
      const double outside = std::max({0.0, -a, a - e.corner});
      const double err = outside + off;
      if (err < best_err) {
        best_err = err;
        surface = e.angle0 + std::clamp(a, 0.0, e.corner);
      }
    }
    double polar = closed && total > 0.0 ? surface * 2.0 * kPi / total : surface;
    const Face& t = mesh_.face(f0);
    const int c = mesh_.corner_of(f0, v);
    const FanEntry base{f0, t[(c + 1) % 3], t[(c + 2) % 3], 0.0, mesh_.corner_angle(f0, c)};
    return b.d * wedge_direction(mesh_, v, base, polar);
  }

  if (std::abs(dir.normalized().dot(n0)) > 1e-9 && next_face != f0) {
    // Source on an edge and the path leaves through the adjacent face.
    const int e = edge_of(source_);
    const int g0 = e >= 0 ? mesh_.neighbor(f0, e) : -1;
    if (g0 >= 0) dir = unfold_vector(mesh_, g0, f0, project_to_tangent(dir, mesh_.face_normal(g0)));
  }
  dir = project_to_tangent(dir, n0);
  const double norm = dir.norm();
  return norm > 0.0 ? Vec3(dir * (b.d / norm)) : Vec3::Zero();
}

TangentVector GeodesicEngine::log(const SurfacePoint& target) const {
  TangentVector tv;
  tv.base = source_;
  tv.direction = log_direction(target, nullptr);
  return tv;
}

// ---------------------------------------------------------------------------
// Free functions

double geodesic_distance(const TriangleMesh& mesh, const SurfacePoint& a, const SurfacePoint& b) {
  if (mesh.component(a.face) != mesh.component(b.face))
    throw ComponentError("geodesic query between different connected components");
  GeodesicEngine engine(mesh);
  engine.propagate(a);
  return engine.distance(b);
}

GeodesicPath geodesic_path(const TriangleMesh& mesh, const SurfacePoint& a, const SurfacePoint& b) {
  if (mesh.component(a.face) != mesh.component(b.face))
    throw ComponentError("geodesic query between different connected components");
  GeodesicEngine engine(mesh);
  engine.propagate(a);
  return engine.path(b);
}

TangentVector log_map(const TriangleMesh& mesh, const SurfacePoint& a, const SurfacePoint& b) {
  if (mesh.component(a.face) != mesh.component(b.face))
    throw ComponentError("geodesic query between different connected components");
  GeodesicEngine engine(mesh);
  engine.propagate(a);
  return engine.log(b);
}

Eigen::MatrixXd pairwise_geodesics(const TriangleMesh& mesh, const std::vector<SurfacePoint>& points) {
  const int n = static_cast<int>(points.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  GeodesicEngine engine(mesh);
  for (int i = 0; i + 1 < n; ++i) {
    engine.propagate(points[i]);
    for (int j = i + 1; j < n; ++j) d(i, j) = d(j, i) = engine.distance(points[j]);
  }
  return d;
}

Vec3 unfold_vector(const TriangleMesh& mesh, int from, int to, const Vec3& v) {
  const Face& a = mesh.face(from);
  const Face& b = mesh.face(to);
  int shared[2], n = 0, third_from = -1, third_to = -1;
  for (int x : a) {
    if (std::find(b.begin(), b.end(), x) != b.end()) {
      if (n < 2) shared[n] = x;
      ++n;
    } else {
      third_from = x;
    }
  }
  for (int x : b)
    if (std::find(a.begin(), a.end(), x) == a.end()) third_to = x;
  if (n != 2 || third_from < 0 || third_to < 0) return v;
  const Vec3 p = mesh.vertex(shared[0]);
  const Vec3 e = (mesh.vertex(shared[1]) - p).normalized();
  auto perp = [&](int third) {
    Vec3 w = mesh.vertex(third) - p;
    return Vec3((w - e * e.dot(w)).normalized());
  };
  // Toward the interior of `from` maps to away from the interior of `to`.
  const Vec3 w_from = perp(third_from);
  const Vec3 w_to = -perp(third_to);
  return e * e.dot(v) + w_to * w_from.dot(v);
}

double vertex_polar_angle(const TriangleMesh& mesh, int base_face, int vertex, int face, const Vec3& dir) {
  const auto fan = vertex_fan(mesh, vertex, base_face);
  for (const auto& e : fan) {
    if (e.face != face) continue;
    const double a = std::clamp(wedge_angle(mesh, vertex, e, dir), 0.0, e.corner);
    const double surface = e.angle0 + a;
    const double total = fan_total(fan);
    return fan_closed(mesh, vertex) && total > 0.0 ? surface * 2.0 * kPi / total : surface;
  }
  return 0.0;
}

Vec3 vertex_direction_in_face(const TriangleMesh& mesh, int base_face, int vertex, double surface_angle, int* face) {
  const auto fan = vertex_fan(mesh, vertex, base_face);
  const double total = fan_total(fan);
  if (fan_closed(mesh, vertex) && total > 0.0) {
    surface_angle = std::fmod(surface_angle, total);
    if (surface_angle < 0.0) surface_angle += total;
  }
  const FanEntry* pick = &fan.front();
  double theta = 0.0;
  if (surface_angle <= fan.front().angle0) {
    theta = 0.0;
  } else if (surface_angle >= fan.back().angle0 + fan.back().corner) {
    pick = &fan.back();
    theta = pick->corner;
  } else {
    for (const auto& e : fan) {
      if (surface_angle >= e.angle0 && surface_angle <= e.angle0 + e.corner) {
        pick = &e;
        theta = surface_angle - e.angle0;
        break;
      }
    }
  }
  if (face) *face = pick->face;
  return wedge_direction(mesh, vertex, *pick, theta);
}

// ---------------------------------------------------------------------------
// Straightest geodesics

namespace {

struct WalkState {
  int face;
  Vec3 bary;
  Vec3 dir;  // unit, in the face plane
};

// Barycentric rate of change for a unit 3D direction inside `face`.
Vec3 bary_direction(const TriangleMesh& mesh, int face, const Vec3& dir) {
  const Face& t = mesh.face(face);
  const Vec3 a = mesh.vertex(t[0]);
  const Vec3 e1 = mesh.vertex(t[1]) - a;
  const Vec3 e2 = mesh.vertex(t[2]) - a;
  const double d11 = e1.dot(e1), d12 = e1.dot(e2), d22 = e2.dot(e2);
  const double r1 = dir.dot(e1), r2 = dir.dot(e2);
  const double det = d11 * d22 - d12 * d12;
  const double v = (d22 * r1 - d12 * r2) / det;
  const double w = (d11 * r2 - d12 * r1) / det;
  return Vec3(-v - w, v, w);
}

}  // namespace

ExpResult exp_map_walk(const TriangleMesh& mesh, const SurfacePoint& a, const Vec3& u) {
  ExpResult result;
  result.point = a;
  double remaining = u.norm();
  if (remaining == 0.0) return result;

  WalkState st{a.face, a.bary, project_to_tangent(u, mesh.face_normal(a.face)).normalized()};
  if (!st.dir.allFinite()) return result;

  const double len_tol = 1e-12 * std::max(mesh.bbox_diagonal(), 1e-300);

  // Starting on a vertex: interpret the direction as a polar angle.
  if (const int c = vertex_corner(a); c >= 0) {
    const int v = mesh.face(a.face)[c];
    const Face& t = mesh.face(a.face);
    const FanEntry base{a.face, t[(c + 1) % 3], t[(c + 2) % 3], 0.0, mesh.corner_angle(a.face, c)};
    double polar = wedge_angle(mesh, v, base, st.dir);
    const bool closed = fan_closed(mesh, v);
    double total = mesh.vertex_angle_sum(v);
    if (closed) {
      if (polar < 0.0) polar += 2.0 * kPi;
      polar *= total / (2.0 * kPi);
    } else {
      const auto fan = vertex_fan(mesh, v, a.face);
      if (polar < fan.front().angle0 || polar > fan.back().angle0 + fan.back().corner) result.truncated = true;
    }
    int face = a.face;
    const Vec3 d = vertex_direction_in_face(mesh, a.face, v, polar, &face);
    Vec3 b = Vec3::Zero();
    b[mesh.corner_of(face, v)] = 1.0;
    st = {face, b, d};
    if (result.truncated) {
      result.point = make_surface_point(mesh, face, b);
      result.final_direction = d;
      return result;
    }
  }

  for (int guard = 0; guard < 1000000; ++guard) {
    const Vec3 db = bary_direction(mesh, st.face, st.dir);
    // Exit parameter: first barycentric weight to reach zero.
    double tau = kInf;
    int hit = -1;
    for (int k = 0; k < 3; ++k) {
      if (db[k] < -1e-15) {
        const double tk = std::max(st.bary[k], 0.0) / -db[k];
        if (tk < tau) {
          tau = tk;
          hit = k;
        }
      }
    }
    if (hit < 0 || tau >= remaining) {
      const Vec3 b = st.bary + remaining * db;
      result.point = make_surface_point(mesh, st.face, b);
      result.final_direction = st.dir;
      return result;
    }
    remaining -= tau;
    Vec3 b = st.bary + tau * db;
    b[hit] = 0.0;
    b = b.cwiseMax(0.0);
    b /= b.sum();

    // Vertex hit when another weight also vanishes.
    int vertex_corner_idx = -1;
    for (int k = 0; k < 3; ++k)
      if (k != hit && b[k] < 1e-10) vertex_corner_idx = 3 - hit - k;
    const Face& t = mesh.face(st.face);
    if (vertex_corner_idx >= 0) {
      const int v = t[vertex_corner_idx];
      if (mesh.is_boundary_vertex(v)) {
        Vec3 vb = Vec3::Zero();
        vb[vertex_corner_idx] = 1.0;
        result.point = make_surface_point(mesh, st.face, vb);
        result.truncated = true;
        result.final_direction = st.dir;
        return result;
      }
      // Leave at half the total angle from the incoming ray.
      const int c = vertex_corner_idx;
      const FanEntry base{st.face, t[(c + 1) % 3], t[(c + 2) % 3], 0.0, mesh.corner_angle(st.face, c)};
      const double back = std::clamp(wedge_angle(mesh, v, base, -st.dir), 0.0, base.corner);
      const double total = mesh.vertex_angle_sum(v);
      int face = st.face;
      const Vec3 d = vertex_direction_in_face(mesh, st.face, v, back + 0.5 * total, &face);
      Vec3 vb = Vec3::Zero();
      vb[mesh.corner_of(face, v)] = 1.0;
      st = {face, vb, d};
      if (remaining <= len_tol) {
        result.point = make_surface_point(mesh, face, vb);
        result.final_direction = d;
        return result;
      }
      continue;
    }

    // Edge crossing: the edge opposite corner `hit`.
    const int e = (hit + 1) % 3;
    const int g = mesh.neighbor(st.face, e);
    if (g < 0) {
      result.point = make_surface_point(mesh, st.face, b);
      result.truncated = true;
      result.final_direction = st.dir;
      return result;
    }
    const Face& gt = mesh.face(g);
    Vec3 gb = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
      const int gc = mesh.corner_of(g, t[k]);
      if (gc >= 0) gb[gc] = b[k];
    }
    (void)gt;
    const Vec3 nd = unfold_vector(mesh, st.face, g, st.dir);
    st = {g, gb / gb.sum(), project_to_tangent(nd, mesh.face_normal(g)).normalized()};
  }
  result.point = make_surface_point(mesh, st.face, st.bary);
  result.final_direction = st.dir;
  return result;
}

SurfacePoint exp_map(const TriangleMesh& mesh, const SurfacePoint& a, const TangentVector& u) {
  return exp_map_walk(mesh, a, u.direction).point;
}

}  // namespace gessa
