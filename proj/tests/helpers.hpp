#pragma once

#include "gessa/mesh.hpp"
#include "gessa/surface_point.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace testing {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gessa_tests_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

inline gessa::SurfacePoint random_point(const gessa::TriangleMesh& mesh, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> face(0, mesh.num_faces() - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r1 = u(rng), r2 = u(rng);
  if (r1 + r2 > 1.0) {
    r1 = 1.0 - r1;
    r2 = 1.0 - r2;
  }
  return gessa::make_surface_point(mesh, face(rng), gessa::Vec3(1.0 - r1 - r2, r1, r2));
}

/// Point on the mesh nearest to `p` by brute force over faces.
gessa::SurfacePoint nearest_point(const gessa::TriangleMesh& mesh, const gessa::Vec3& p);

}  // namespace testing
