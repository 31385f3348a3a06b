#pragma once

#include "gessa/mesh.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace gessa {

enum class MeshFormat { Obj, Ply };

/// Raw geometry as stored in a file, before any cleanup.
struct MeshFileContents {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;          // polygons already fan-triangulated
  std::vector<double> quality;      // per-vertex "quality" when the PLY carries it
};

/// Guess the format from the file extension (".obj" / ".ply").
MeshFormat format_from_path(const std::filesystem::path& path);

MeshFileContents read_obj(const std::filesystem::path& path);
/// ASCII and binary little-endian PLY.
MeshFileContents read_ply(const std::filesystem::path& path);

/// Parse, fan-triangulate, drop degenerate faces and unreferenced vertices.
/// Throws on parse failure, faces with fewer than three corners, bad indices
/// and empty results.
TriangleMesh load_mesh(const std::filesystem::path& path, std::optional<MeshFormat> format = std::nullopt);

struct MeshWriteOptions {
  bool binary = false;                  // PLY only
  std::vector<double> vertex_quality;   // PLY only; empty = no property
  std::vector<std::string> comments;    // PLY header comments
};

void save_mesh(const std::filesystem::path& path, const TriangleMesh& mesh,
               std::optional<MeshFormat> format = std::nullopt, const MeshWriteOptions& options = {});

}  // namespace gessa
