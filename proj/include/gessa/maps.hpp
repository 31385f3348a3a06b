#pragma once

#include "gessa/mesh.hpp"
#include "gessa/sampling.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gessa {

/// Quality written for vertices whose nearby landmarks are all undefined.
inline constexpr double kUndefinedQuality = -9999.0;

struct LandmarkDistance {
  int landmark = -1;
  double distance = kInf;
};

/// The k geodesically nearest landmarks of every vertex, closest first.
/// Fewer than k entries only when the mesh has fewer reachable landmarks.
std::vector<std::vector<LandmarkDistance>> nearest_landmarks(const TriangleMesh& mesh,
                                                             const std::vector<SurfacePoint>& landmarks, int k);

/// Inverse geodesic distance interpolation over the k nearest landmarks with
/// a defined value. A vertex sitting on a landmark takes its value exactly.
std::vector<double> interpolate_scalars(const TriangleMesh& mesh, const std::vector<SurfacePoint>& landmarks,
                                        const std::vector<std::optional<double>>& values, int k = 3);

/// PLY with per-vertex quality plus a (landmark_id, value) CSV next to it.
void export_map(const std::filesystem::path& ply, const std::filesystem::path& csv, const TriangleMesh& mesh,
                const std::vector<SurfacePoint>& landmarks, const std::vector<std::optional<double>>& values,
                const std::string& title = "");

struct AverageShape {
  std::vector<Vec3> landmarks;  // per-landmark mean position
  TriangleMesh mesh;            // vertices are the mean landmarks
};

/// Mean landmark positions. The display mesh takes one triangle per face of
/// the first surface whose corners fall in three different landmark Voronoi
/// cells, i.e. the dual of the geodesic Voronoi partition.
AverageShape compute_average_shape(const LandmarkEnsemble& ensemble);

struct GroundTruthLandmark {
  std::string subject_id;
  std::string name;
  Vec3 position = Vec3::Zero();
};

/// CSV columns subject_id,name,x,y,z.
std::vector<GroundTruthLandmark> read_ground_truth(const std::filesystem::path& path);
void write_ground_truth(const std::filesystem::path& path, const std::vector<GroundTruthLandmark>& gtl);

struct ValidationRow {
  std::string name;
  int subjects = 0;
  double mean = 0.0;
  double sd = 0.0;
  double mean_normalized = 0.0;
  double sd_normalized = 0.0;
};

struct ValidationReport {
  std::vector<ValidationRow> rows;
  double width = 0.0;  // mean distance between the reference pair
  double overall_mean = 0.0;
  double overall_sd = 0.0;
  double overall_mean_normalized = 0.0;
  double overall_sd_normalized = 0.0;
  std::vector<std::string> notes;  // skipped subjects
};

/// For each ground-truth landmark: Euclidean distance to the closest
/// generated landmark of the same subject, mean and SD (n - 1) over
/// subjects, then divided by the mean distance between `width_a` and
/// `width_b`.
ValidationReport validate_landmarks(const LandmarkEnsemble& ensemble, const std::vector<GroundTruthLandmark>& gtl,
                                    const std::string& width_a, const std::string& width_b);

void write_validation_report(const std::filesystem::path& path, const ValidationReport& report);

}  // namespace gessa
