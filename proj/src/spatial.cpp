#include "gessa/spatial.hpp"

#include <algorithm>
#include <cmath>

namespace gessa {

// Region-based closest point (Ericson, Real-Time Collision Detection 5.1.5).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c, Vec3* bary) {
  auto out = [bary](double u, double v, double w, const Vec3& q) {
    if (bary) *bary = Vec3(u, v, w);
    return q;
  };
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return out(1, 0, 0, a);

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return out(0, 1, 0, b);

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double v = d1 / (d1 - d3);
    return out(1 - v, v, 0, a + v * ab);
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return out(0, 0, 1, c);

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double w = d2 / (d2 - d6);
    return out(1 - w, 0, w, a + w * ac);
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return out(0, 1 - w, w, b + w * (c - b));
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return out(1 - v - w, v, w, a + ab * v + ac * w);
}

ClosestPointGrid::ClosestPointGrid(const TriangleMesh& mesh) : mesh_(mesh) {
  if (mesh.empty()) throw Error("closest-point grid on empty mesh");
  const Vec3 lo = mesh.bbox_min();
  const Vec3 extent = (mesh.bbox_max() - lo).cwiseMax(1e-12);
  // Aim for about two faces per occupied cell.
  cell_ = std::max(2.0 * mesh.mean_edge_length(), 1e-9 * extent.norm());
  for (int a = 0; a < 3; ++a) dims_[a] = std::clamp(static_cast<int>(std::ceil(extent[a] / cell_)), 1, 256);
  origin_ = lo;

  const int ncell = dims_[0] * dims_[1] * dims_[2];
  std::vector<std::vector<int>> buckets(ncell);
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const Face& t = mesh.face(f);
    Vec3 fmin = mesh.vertex(t[0]), fmax = fmin;
    for (int i = 1; i < 3; ++i) {
      fmin = fmin.cwiseMin(mesh.vertex(t[i]));
      fmax = fmax.cwiseMax(mesh.vertex(t[i]));
    }
    const auto c0 = cell_of(fmin), c1 = cell_of(fmax);
    for (int k = c0[2]; k <= c1[2]; ++k)
      for (int j = c0[1]; j <= c1[1]; ++j)
        for (int i = c0[0]; i <= c1[0]; ++i) buckets[flat(i, j, k)].push_back(f);
  }
  cell_start_.assign(ncell + 1, 0);
  for (int c = 0; c < ncell; ++c) cell_start_[c + 1] = cell_start_[c] + static_cast<int>(buckets[c].size());
  cell_faces_.reserve(cell_start_.back());
  for (const auto& b : buckets) cell_faces_.insert(cell_faces_.end(), b.begin(), b.end());
}

std::array<int, 3> ClosestPointGrid::cell_of(const Vec3& p) const {
  std::array<int, 3> c;
  for (int a = 0; a < 3; ++a)
    c[a] = std::clamp(static_cast<int>(std::floor((p[a] - origin_[a]) / cell_)), 0, dims_[a] - 1);
  return c;
}

ClosestPointGrid::Hit ClosestPointGrid::closest(const Vec3& p) const {
  const auto c = cell_of(p);
  const int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
  double best2 = kInf;
  int best_face = -1;
  Vec3 best_bary = Vec3::Zero();

  for (int r = 0; r <= max_ring; ++r) {
    for (int k = c[2] - r; k <= c[2] + r; ++k) {
      if (k < 0 || k >= dims_[2]) continue;
      for (int j = c[1] - r; j <= c[1] + r; ++j) {
        if (j < 0 || j >= dims_[1]) continue;
        for (int i = c[0] - r; i <= c[0] + r; ++i) {
          if (i < 0 || i >= dims_[0]) continue;
          if (std::max({std::abs(i - c[0]), std::abs(j - c[1]), std::abs(k - c[2])}) != r) continue;
          const int cell = flat(i, j, k);
          for (int s = cell_start_[cell]; s < cell_start_[cell + 1]; ++s) {
            const int f = cell_faces_[s];
            const Face& t = mesh_.face(f);
            Vec3 b;
            const Vec3 q = closest_point_on_triangle(p, mesh_.vertex(t[0]), mesh_.vertex(t[1]), mesh_.vertex(t[2]), &b);
            const double d2 = (q - p).squaredNorm();
            if (d2 < best2 || (d2 == best2 && f < best_face)) {
              best2 = d2;
              best_face = f;
              best_bary = b;
            }
          }
        }
      }
    }
    // Cells outside ring r are at least r cell widths away.
    if (best_face >= 0 && std::sqrt(best2) <= r * cell_) break;
  }
  Hit hit;
  hit.point = make_surface_point(mesh_, best_face, best_bary);
  hit.distance = std::sqrt(best2);
  return hit;
}

}  // namespace gessa
