#include "gessa/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace gessa {

namespace {

const std::vector<Face> kIcosahedronFaces = {
    {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
    {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
    {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};

std::vector<Vec3> icosahedron_vertices() {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  return v;
}

}  // namespace

TriangleMesh icosahedron(double radius) { return icosphere(1, radius); }

TriangleMesh icosphere(int frequency, double radius) {
  if (frequency < 1) throw Error("icosphere frequency must be >= 1");
  const std::vector<Vec3> base = icosahedron_vertices();
  const int n = frequency;

  // A lattice point is identified by its nonzero integer weights on the base
  // vertices, which makes points on shared edges and corners coincide exactly.
  std::map<std::vector<std::pair<int, int>>, int> index;
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  auto lattice = [&](const Face& f, int i, int j) {
    const int w[3] = {n - i - j, i, j};
    std::vector<std::pair<int, int>> key;
    for (int c = 0; c < 3; ++c)
      if (w[c] > 0) key.emplace_back(f[c], w[c]);
    std::sort(key.begin(), key.end());
    auto [it, inserted] = index.emplace(key, static_cast<int>(vertices.size()));
    if (inserted) {
      Vec3 p = Vec3::Zero();
      for (const auto& [v, wt] : key) p += wt * base[v];
      vertices.push_back(radius * p.normalized());
    }
    return it->second;
  };

  for (const Face& f : kIcosahedronFaces) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; i + j < n; ++j) {
        const int a = lattice(f, i, j);
        const int b = lattice(f, i + 1, j);
        const int c = lattice(f, i, j + 1);
        faces.push_back({a, b, c});
        if (i + j + 2 <= n) {
          const int d = lattice(f, i + 1, j + 1);
          faces.push_back({b, d, c});
        }
      }
    }
  }
  return TriangleMesh(std::move(vertices), std::move(faces));
}

TriangleMesh icosphere_level(int level, double radius) { return icosphere(1 << level, radius); }

TriangleMesh ellipsoid(const Vec3& axes, int frequency) {
  TriangleMesh sphere = icosphere(frequency, 1.0);
  std::vector<Vec3> v = sphere.vertices();
  for (auto& p : v) p = p.cwiseProduct(axes);
  return TriangleMesh(std::move(v), sphere.faces());
}

TriangleMesh flat_grid(int nx, int ny, double sx, double sy) {
  if (nx < 1 || ny < 1) throw Error("flat_grid needs at least one cell per side");
  std::vector<Vec3> v;
  std::vector<Face> f;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) v.emplace_back(sx * i / nx, sy * j / ny, 0.0);
  auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return TriangleMesh(std::move(v), std::move(f));
}

TriangleMesh cylinder(double radius, double height, int around, int along) {
  if (around < 3 || along < 1) throw Error("cylinder needs around >= 3 and along >= 1");
  std::vector<Vec3> v;
  std::vector<Face> f;
  for (int j = 0; j <= along; ++j) {
    for (int i = 0; i < around; ++i) {
      const double t = 2.0 * kPi * i / around;
      v.emplace_back(radius * std::cos(t), radius * std::sin(t), height * j / along);
    }
  }
  auto id = [around](int i, int j) { return j * around + (i % around); };
  for (int j = 0; j < along; ++j) {
    for (int i = 0; i < around; ++i) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return TriangleMesh(std::move(v), std::move(f));
}

}  // namespace gessa
