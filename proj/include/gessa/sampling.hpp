#pragma once

#include "gessa/geodesic.hpp"
#include "gessa/mesh.hpp"
#include "gessa/surface_point.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <vector>

namespace gessa {

/// N surfaces with M corresponded landmarks each.
struct LandmarkEnsemble {
  MeshEnsemble meshes;
  std::vector<std::vector<SurfacePoint>> landmarks;  // [surface][landmark]

  int num_surfaces() const { return static_cast<int>(landmarks.size()); }
  int num_landmarks() const { return landmarks.empty() ? 0 : static_cast<int>(landmarks[0].size()); }

  /// Row j is the flattened landmark coordinates of surface j (N x 3M).
  Eigen::MatrixXd shape_matrix() const;
  Eigen::RowVectorXd mean_shape() const;
  /// Shape matrix with the mean row subtracted.
  Eigen::MatrixXd centered() const;

  /// Throws if the grid is ragged or any landmark is off its surface.
  void check() const;
};

/// Per-landmark kernel variances (squared length units).
struct KernelBandwidth {
  std::vector<double> sigma;
};

struct OptimizerConfig {
  double gamma = 1.0;
  double alpha = -1.0;           // < 0 selects 1e-3 * trace(Y^T Y) / (3M), per level
  int target_landmarks = 64;
  int inner_iters = 200;         // per level
  double conv_tol = 1e-5;
  std::uint64_t seed = 1;

  double kernel_cutoff = 4.0;    // kernel truncation in standard deviations; <= 0 keeps every pair
  int max_halvings = 20;
  bool shape_term = true;
  bool surface_term = true;
  int threads = 0;               // 0 = hardware concurrency
  /// Iterations for levels below the final one; < 0 uses inner_iters.
  int coarse_iters = -1;

  void check() const;
};

/// p(x_k) = (1/M) sum_l (2 pi s_k)^-1 exp(-0.5 d(x_k, x_l)^2 / s_k).
/// `cutoff` drops pairs beyond that many kernel standard deviations (<= 0: none).
std::vector<double> estimate_density(const TriangleMesh& mesh, const std::vector<SurfacePoint>& landmarks,
                                     const KernelBandwidth& bandwidth, double cutoff = 0.0);

/// Mean of -ln p over the landmarks.
double surface_entropy(const std::vector<double>& density);

/// Gradient of -H at each landmark with the other landmarks held fixed:
/// (1 / (M s_k)) sum_l w_kl log_{x_k}(x_l), w normalized kernel weights.
std::vector<TangentVector> surface_entropy_gradient(const TriangleMesh& mesh,
                                                    const std::vector<SurfacePoint>& landmarks,
                                                    const KernelBandwidth& bandwidth, double cutoff = 0.0);

/// ln |(Y^T Y + alpha I) / (N - 1)| computed through the N x N Gram matrix.
double shape_entropy(const Eigen::MatrixXd& y, double alpha);
/// 2 Y (Y^T Y + alpha I)^-1, evaluated as 2 (Y Y^T + alpha I)^-1 Y.
Eigen::MatrixXd shape_entropy_gradient(const Eigen::MatrixXd& y, double alpha);
/// Same, reshaped to one ambient 3-vector per landmark ([surface][landmark]).
std::vector<std::vector<Vec3>> shape_entropy_gradient(const LandmarkEnsemble& ensemble, double alpha);

/// 1e-3 * trace(Y^T Y) / (3M), at least `floor`.
double default_alpha(const Eigen::MatrixXd& y, double floor = 0.0);

/// (mean nearest-neighbour geodesic distance)^2 over all surfaces, floored at
/// the squared mean edge length.
KernelBandwidth default_bandwidth(const LandmarkEnsemble& ensemble, int threads = 0);

/// Per-landmark geodesic distance to the nearest other landmark on the same surface.
std::vector<double> nearest_neighbor_distances(const TriangleMesh& mesh, const std::vector<SurfacePoint>& landmarks);

struct StepResult {
  LandmarkEnsemble ensemble;
  double q_before = 0.0;
  double q_after = 0.0;
  double gamma_used = 0.0;  // 0 when no step was accepted
  int halvings = 0;
  int clamped = 0;          // moves truncated at an open boundary
  bool accepted = false;
};

/// One descent step on Q = Gamma - sum_j H_j with backtracking on gamma.
StepResult gessa_step(const LandmarkEnsemble& ensemble, const KernelBandwidth& bandwidth,
                      const OptimizerConfig& config);

/// Doubles M. Child k + M of landmark k is displaced by `epsilon` along a
/// random direction shared by landmark k on every surface. `epsilon` <= 0
/// uses half the mean nearest-neighbour distance.
LandmarkEnsemble split_landmarks(const LandmarkEnsemble& ensemble, std::mt19937_64& rng, double epsilon = -1.0);

/// One area-uniform point per surface drawn with shared random numbers.
LandmarkEnsemble initialize_landmarks(const MeshEnsemble& meshes, std::uint64_t seed);

struct CostRecord {
  int level = 0;
  int iteration = 0;
  double q = 0.0;
  double gamma_bar = 0.0;
  double sum_h = 0.0;
};

struct LevelState {
  int level;
  int iteration;
  const LandmarkEnsemble& ensemble;
  const KernelBandwidth& bandwidth;
  double alpha;
  const CostRecord& cost;
};

struct SamplingResult {
  LandmarkEnsemble ensemble;
  std::vector<CostRecord> trace;
  bool converged = false;  // final level met conv_tol before inner_iters
  int clamped = 0;
};

/// Split/optimize cycle up to config.target_landmarks. `observer` sees every
/// accepted configuration (iteration 0 is the state at the start of a level).
SamplingResult sample_correspondences(const MeshEnsemble& meshes, const OptimizerConfig& config,
                                      const std::function<void(const LevelState&)>& observer = {});

void write_landmarks(const std::filesystem::path& path, const LandmarkEnsemble& ensemble);
/// Reads landmarks for the given meshes; subjects are matched by id.
LandmarkEnsemble read_landmarks(const std::filesystem::path& path, const MeshEnsemble& meshes);
void write_cost_trace(const std::filesystem::path& path, const std::vector<CostRecord>& trace);

}  // namespace gessa
