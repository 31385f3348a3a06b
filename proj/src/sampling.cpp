#include "gessa/sampling.hpp"

#include "gessa/csv.hpp"
#include "gessa/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <unordered_map>

namespace gessa {

namespace {

// Buckets landmark positions so that kernel sums only query nearby landmarks.
// Geodesic distance is never below the chord, so the chord bound is safe.
class PointGrid {
 public:
  PointGrid(const std::vector<SurfacePoint>& points, double radius) : points_(points), radius_(radius) {
    if (!std::isfinite(radius_) || radius_ <= 0.0 || points.empty()) return;
    lo_ = points[0].position;
    Vec3 hi = lo_;
    for (const auto& p : points) {
      lo_ = lo_.cwiseMin(p.position);
      hi = hi.cwiseMax(p.position);
    }
    const Vec3 extent = hi - lo_;
    cell_ = std::max(radius_, extent.maxCoeff() / 128.0);
    for (int a = 0; a < 3; ++a) dims_[a] = std::max(1, static_cast<int>(extent[a] / cell_) + 1);
    for (int i = 0; i < static_cast<int>(points.size()); ++i) buckets_[key(cell_of(points[i].position))].push_back(i);
  }

  template <class F>
  void near(const Vec3& p, F&& fn) const {
    if (buckets_.empty()) {
      for (int i = 0; i < static_cast<int>(points_.size()); ++i) fn(i);
      return;
    }
    const auto c = cell_of(p);
    const int reach = static_cast<int>(std::ceil(radius_ / cell_));
    for (int x = c[0] - reach; x <= c[0] + reach; ++x) {
      if (x < 0 || x >= dims_[0]) continue;
      for (int y = c[1] - reach; y <= c[1] + reach; ++y) {
        if (y < 0 || y >= dims_[1]) continue;
        for (int z = c[2] - reach; z <= c[2] + reach; ++z) {
          if (z < 0 || z >= dims_[2]) continue;
          const auto it = buckets_.find(key({x, y, z}));
          if (it == buckets_.end()) continue;
          for (int i : it->second)
            if ((points_[i].position - p).norm() <= radius_) fn(i);
        }
      }
    }
  }

 private:
  std::array<int, 3> cell_of(const Vec3& p) const {
    std::array<int, 3> c;
    for (int a = 0; a < 3; ++a) c[a] = std::clamp(static_cast<int>((p[a] - lo_[a]) / cell_), 0, dims_[a] - 1);
    return c;
  }
  std::int64_t key(const std::array<int, 3>& c) const {
    return (static_cast<std::int64_t>(c[0]) * dims_[1] + c[1]) * dims_[2] + c[2];
  }

  const std::vector<SurfacePoint>& points_;
  double radius_;
  double cell_ = 1.0;
  Vec3 lo_ = Vec3::Zero();
  std::array<int, 3> dims_{1, 1, 1};
  std::unordered_map<std::int64_t, std::vector<int>> buckets_;
};

struct KernelSums {
  double density = 0.0;
  Vec3 gradient = Vec3::Zero();  // gradient of -ln p(x_k) / M
  double nearest = kInf;
};

double kernel_radius(double sigma, double cutoff) { return cutoff > 0.0 ? cutoff * std::sqrt(sigma) : kInf; }

KernelSums kernel_sums(GeodesicEngine& engine, const std::vector<SurfacePoint>& points, const PointGrid& grid, int k,
                       double sigma, double cutoff, bool want_gradient) {
  const double radius = kernel_radius(sigma, cutoff);
  const int m = static_cast<int>(points.size());
  KernelSums out;
  double sum = 1.0;
  Vec3 weighted = Vec3::Zero();
  if (m > 1) {
    engine.propagate(points[k], radius);
    grid.near(points[k].position, [&](int l) {
      if (l == k) return;
      double d;
      Vec3 v = Vec3::Zero();
      if (want_gradient) {
        v = engine.log_direction(points[l], &d);
      } else {
        d = engine.distance(points[l]);
      }
      if (!(d <= radius)) return;
      const double w = std::exp(-0.5 * d * d / sigma);
      sum += w;
      weighted += w * v;
      out.nearest = std::min(out.nearest, d);
    });
  }
  out.density = sum / (2.0 * kPi * sigma * m);
  out.gradient = weighted / (sum * m * sigma);
  return out;
}

// Per-thread engines, created on demand for each surface.
class EnginePool {
 public:
  EnginePool(const MeshEnsemble& meshes, int threads)
      : meshes_(meshes), engines_(threads) {
    for (auto& row : engines_) row.resize(meshes.size());
  }

  GeodesicEngine& get(int worker, int surface) {
    auto& e = engines_[worker][surface];
    if (!e) e = std::make_unique<GeodesicEngine>(meshes_[surface]);
    return *e;
  }

 private:
  const MeshEnsemble& meshes_;
  std::vector<std::vector<std::unique_ptr<GeodesicEngine>>> engines_;
};

struct Evaluation {
  double q = 0.0;
  double gamma_bar = 0.0;
  double gamma_y = 0.0;  // gamma_bar without its configuration-independent constant
  double sum_h = 0.0;
  double sum_abs_h = 0.0;
  std::vector<double> h;
  std::vector<std::vector<Vec3>> surface_gradient;
  Eigen::MatrixXd shape_gradient;
  Eigen::MatrixXd y;
};

struct LevelParams {
  KernelBandwidth bandwidth;
  double alpha = 0.0;
};

std::pair<double, double> shape_entropy_parts(const Eigen::MatrixXd& y, double alpha) {
  const int n = static_cast<int>(y.rows());
  const int p = static_cast<int>(y.cols());
  const Eigen::MatrixXd gram = y * y.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
  double variable = 0.0;
  for (int i = 0; i < n; ++i) variable += std::log((std::max(es.eigenvalues()[i], 0.0) + alpha) / alpha);
  const double constant = p * std::log(alpha) - p * std::log(static_cast<double>(n - 1));
  return {variable, constant};
}

// Keeps alpha positive when the configurations coincide (Y = 0).
double alpha_floor(const LandmarkEnsemble& e) {
  double edge = 0.0;
  for (int j = 0; j < e.num_surfaces(); ++j) edge += e.meshes[j].mean_edge_length();
  edge = 1e-3 * edge / std::max(e.num_surfaces(), 1);
  return edge * edge;
}

class Optimizer {
 public:
  Optimizer(const MeshEnsemble& meshes, const OptimizerConfig& config)
      : meshes_(meshes), config_(config), threads_(resolve_threads(config.threads)), pool_(meshes, threads_) {}

  Evaluation evaluate(const LandmarkEnsemble& e, const LevelParams& level) {
    const int n = e.num_surfaces();
    const int m = e.num_landmarks();
    Evaluation out;
    out.surface_gradient.assign(n, std::vector<Vec3>(m, Vec3::Zero()));
    if (config_.surface_term) {
      std::vector<std::vector<double>> density(n, std::vector<double>(m, 0.0));
      std::vector<std::unique_ptr<PointGrid>> grids;
      double max_radius = 0.0;
      for (double s : level.bandwidth.sigma) max_radius = std::max(max_radius, kernel_radius(s, config_.kernel_cutoff));
      for (int j = 0; j < n; ++j) grids.push_back(std::make_unique<PointGrid>(e.landmarks[j], max_radius));
      parallel_for(n * m, threads_, [&](int task, int worker) {
        const int j = task / m, k = task % m;
        const KernelSums ks = kernel_sums(pool_.get(worker, j), e.landmarks[j], *grids[j], k,
                                          level.bandwidth.sigma[k], config_.kernel_cutoff, true);
        density[j][k] = ks.density;
        out.surface_gradient[j][k] = ks.gradient;
      });
      for (int j = 0; j < n; ++j) {
        const double h = surface_entropy(density[j]);
        out.h.push_back(h);
        out.sum_h += h;
        out.sum_abs_h += std::abs(h);
      }
    }
    if (config_.shape_term) {
      out.y = e.centered();
      const Eigen::MatrixXd& y = out.y;
      const auto [variable, constant] = shape_entropy_parts(y, level.alpha);
      out.gamma_y = variable;
      out.gamma_bar = variable + constant;
      out.shape_gradient = shape_entropy_gradient(y, level.alpha);
    } else {
      out.shape_gradient = Eigen::MatrixXd::Zero(n, 3 * m);
    }
    out.q = out.gamma_bar - out.sum_h;
    return out;
  }

  // Step direction for every landmark, before scaling by gamma. The surface
  // part is the entropy gradient scaled by M sigma_k (a mean-shift step).
  // The scaled direction multiplies the shape gradient by (Y Y^T + alpha I) / 2,
  // which turns it into Y itself; the plain direction uses M sigma_k for both.
  std::vector<std::vector<Vec3>> directions(const LandmarkEnsemble& e, const Evaluation& ev,
                                            const LevelParams& level, bool scaled) const {
    const int n = e.num_surfaces(), m = e.num_landmarks();
    std::vector<std::vector<Vec3>> dir(n, std::vector<Vec3>(m));
    for (int j = 0; j < n; ++j) {
      const TriangleMesh& mesh = meshes_[j];
      for (int k = 0; k < m; ++k) {
        const SurfacePoint& x = e.landmarks[j][k];
        const Vec3 normal = mesh.face_normal(x.face);
        const double p = m * level.bandwidth.sigma[k];
        Vec3 d = -p * ev.surface_gradient[j][k];
        if (config_.shape_term) {
          const auto& src = scaled ? ev.y : ev.shape_gradient;
          d -= (scaled ? 1.0 : p) * Vec3(src.block<1, 3>(j, 3 * k).transpose());
        }
        dir[j][k] = slide_on_boundary(mesh, x, project_to_tangent(d, normal));
      }
    }
    return dir;
  }

  LandmarkEnsemble move(const LandmarkEnsemble& e, const std::vector<std::vector<Vec3>>& dir, double gamma,
                        int* clamped) {
    LandmarkEnsemble out = e;
    const int n = e.num_surfaces(), m = e.num_landmarks();
    std::vector<char> truncated(static_cast<size_t>(n) * m, 0);
    parallel_for(n * m, threads_, [&](int task, int) {
      const int j = task / m, k = task % m;
      const Vec3 u = gamma * dir[j][k];
      if (u.squaredNorm() == 0.0) return;
      const ExpResult r = exp_map_walk(meshes_[j], e.landmarks[j][k], u);
      out.landmarks[j][k] = r.point;
      truncated[task] = r.truncated;
    });
    // A walk stopped by the boundary can end exactly on a landmark already
    // parked there (corners attract). Coincident points have no direction
    // between them and would stay merged, so such a point keeps its place.
    for (int j = 0; j < n; ++j) {
      const double tol = 1e-6 * meshes_[j].mean_edge_length();
      for (int k = 0; k < m; ++k) {
        if (!truncated[j * m + k]) continue;
        for (int l = 0; l < m; ++l) {
          if (l == k || (out.landmarks[j][l].position - out.landmarks[j][k].position).norm() > tol) continue;
          out.landmarks[j][k] = e.landmarks[j][k];
          break;
        }
      }
    }
    if (clamped) *clamped = static_cast<int>(std::count(truncated.begin(), truncated.end(), 1));
    return out;
  }

  struct StepOutcome {
    LandmarkEnsemble ensemble;
    Evaluation evaluation;
    double gamma = 0.0;
    int halvings = 0;
    int clamped = 0;
    bool accepted = false;
  };

  StepOutcome step(const LandmarkEnsemble& e, const Evaluation& ev, const LevelParams& level, double gamma) {
    StepOutcome out;
    // The scaled direction need not descend Q; the plain gradient always does
    // for a small enough step and serves as the fallback.
    const int passes = config_.shape_term ? 2 : 1;
    for (int pass = 0; pass < passes; ++pass) {
      const bool scaled = config_.shape_term && pass == 0;
      const auto dir = directions(e, ev, level, scaled);
      double g = gamma;
      for (int h = 0; h <= config_.max_halvings; ++h, g *= 0.5) {
        int clamped = 0;
        LandmarkEnsemble trial = move(e, dir, g, &clamped);
        Evaluation tev = evaluate(trial, level);
        if (acceptable(ev, tev)) {
          out.ensemble = std::move(trial);
          out.evaluation = std::move(tev);
          out.gamma = g;
          out.halvings = h;
          out.clamped = clamped;
          out.accepted = true;
          return out;
        }
      }
    }
    out.halvings = config_.max_halvings;
    return out;
  }

  // Without the shape term the surfaces decouple, so each must not get worse.
  bool acceptable(const Evaluation& before, const Evaluation& after) const {
    if (!(after.q <= before.q)) return false;
    if (config_.shape_term) return true;
    for (size_t j = 0; j < after.h.size(); ++j)
      if (after.h[j] < before.h[j]) return false;
    return true;
  }

  LevelParams level_params(const LandmarkEnsemble& e) const {
    LevelParams p;
    p.bandwidth = default_bandwidth(e, threads_);
    p.alpha = config_.alpha >= 0.0 ? config_.alpha : default_alpha(e.centered(), alpha_floor(e));
    return p;
  }

  int threads() const { return threads_; }

 private:
  static Vec3 slide_on_boundary(const TriangleMesh& mesh, const SurfacePoint& x, Vec3 d) {
    const Face& t = mesh.face(x.face);
    for (int i = 0; i < 3; ++i) {
      if (mesh.neighbor(x.face, i) >= 0 || x.bary[(i + 2) % 3] > 1e-9) continue;
      const Vec3 a = mesh.vertex(t[i]), b = mesh.vertex(t[(i + 1) % 3]), c = mesh.vertex(t[(i + 2) % 3]);
      const Vec3 edge = (b - a).normalized();
      Vec3 out = (a - c) - edge * edge.dot(a - c);
      if (out.norm() == 0.0) continue;
      out.normalize();
      const double s = d.dot(out);
      if (s > 0.0) d -= s * out;
    }
    return d;
  }

  const MeshEnsemble& meshes_;
  OptimizerConfig config_;
  int threads_;
  EnginePool pool_;
};

bool is_power_of_two(int v) { return v >= 1 && (v & (v - 1)) == 0; }

double mean_spacing(const TriangleMesh& mesh, int m) { return std::sqrt(mesh.total_area() / std::max(m, 1)); }

double nearest_one(GeodesicEngine& engine, const std::vector<SurfacePoint>& points, int k, double radius) {
  const int m = static_cast<int>(points.size());
  if (m < 2) return kInf;
  for (;;) {
    engine.propagate(points[k], radius);
    double best = kInf;
    for (int l = 0; l < m; ++l) {
      if (l == k || (points[l].position - points[k].position).norm() > radius) continue;
      best = std::min(best, engine.distance(points[l]));
    }
    if (best <= radius || !std::isfinite(radius)) return best;
    radius *= 2.0;
    if (radius > 4.0 * engine.mesh().bbox_diagonal()) radius = kInf;
  }
}

std::vector<std::vector<double>> nearest_all(const LandmarkEnsemble& e, int threads) {
  const int n = e.num_surfaces(), m = e.num_landmarks();
  std::vector<std::vector<double>> nn(n, std::vector<double>(m, kInf));
  if (m < 2) return nn;
  EnginePool pool(e.meshes, resolve_threads(threads));
  std::vector<double> radius(n);
  for (int j = 0; j < n; ++j) radius[j] = 1.5 * mean_spacing(e.meshes[j], m);
  parallel_for(n * m, threads, [&](int task, int worker) {
    const int j = task / m, k = task % m;
    nn[j][k] = nearest_one(pool.get(worker, j), e.landmarks[j], k, radius[j]);
  });
  return nn;
}

double mean_nearest(const LandmarkEnsemble& e, const std::vector<std::vector<double>>& nn) {
  double sum = 0.0;
  int count = 0;
  for (const auto& row : nn)
    for (double d : row)
      if (std::isfinite(d)) {
        sum += d;
        ++count;
      }
  if (count > 0) return sum / count;
  double spacing = 0.0;
  for (int j = 0; j < e.num_surfaces(); ++j) spacing += mean_spacing(e.meshes[j], e.num_landmarks());
  return spacing / e.num_surfaces();
}

}  // namespace

Eigen::MatrixXd LandmarkEnsemble::shape_matrix() const {
  const int n = num_surfaces(), m = num_landmarks();
  Eigen::MatrixXd z(n, 3 * m);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < m; ++k) z.block<1, 3>(j, 3 * k) = landmarks[j][k].position.transpose();
  return z;
}

// Offsets from the first row keep identical rows exactly centred at zero.
Eigen::RowVectorXd LandmarkEnsemble::mean_shape() const {
  const Eigen::MatrixXd z = shape_matrix();
  const Eigen::RowVectorXd ref = z.row(0);
  return ref + (z.rowwise() - ref).colwise().mean();
}

Eigen::MatrixXd LandmarkEnsemble::centered() const {
  Eigen::MatrixXd z = shape_matrix();
  const Eigen::RowVectorXd ref = z.row(0);
  z.rowwise() -= ref;
  const Eigen::RowVectorXd mean = z.colwise().mean();
  z.rowwise() -= mean;
  return z;
}

void LandmarkEnsemble::check() const {
  if (static_cast<int>(landmarks.size()) != meshes.size()) throw Error("landmark grid does not match the ensemble");
  const int m = num_landmarks();
  for (int j = 0; j < num_surfaces(); ++j) {
    if (static_cast<int>(landmarks[j].size()) != m) throw Error("ragged landmark grid");
    for (const auto& p : landmarks[j])
      if (!is_valid(meshes[j], p)) throw Error("landmark off surface " + meshes.ids[j]);
  }
}

void OptimizerConfig::check() const {
  if (!is_power_of_two(target_landmarks)) throw Error("target_landmarks must be a power of two");
  if (!(gamma > 0.0)) throw Error("gamma must be positive");
  if (inner_iters < 0) throw Error("inner_iters must be non-negative");
  if (!(conv_tol >= 0.0)) throw Error("conv_tol must be non-negative");
  if (max_halvings < 0) throw Error("max_halvings must be non-negative");
}

std::vector<double> estimate_density(const TriangleMesh& mesh, const std::vector<SurfacePoint>& landmarks,
                                     const KernelBandwidth& bandwidth, double cutoff) {
  const int m = static_cast<int>(landmarks.size());
  if (m < 1) throw Error("estimate_density: no landmarks");
  if (static_cast<int>(bandwidth.sigma.size()) != m) throw Error("estimate_density: one bandwidth per landmark");
  double max_radius = 0.0;
  for (double s : bandwidth.sigma) {
    if (!(s > 0.0)) throw Error("bandwidths must be positive");
    max_radius = std::max(max_radius, kernel_radius(s, cutoff));
  }
  const PointGrid grid(landmarks, max_radius);
  GeodesicEngine engine(mesh);
  std::vector<double> out(m);
  for (int k = 0; k < m; ++k) out[k] = kernel_sums(engine, landmarks, grid, k, bandwidth.sigma[k], cutoff, false).density;
  return out;
}

double surface_entropy(const std::vector<double>& density) {
  double h = 0.0;
  for (double p : density) h -= std::log(p);
  return h / static_cast<double>(density.size());
}

std::vector<TangentVector> surface_entropy_gradient(const TriangleMesh& mesh,
                                                    const std::vector<SurfacePoint>& landmarks,
                                                    const KernelBandwidth& bandwidth, double cutoff) {
  const int m = static_cast<int>(landmarks.size());
  if (m < 1) throw Error("surface_entropy_gradient: no landmarks");
  if (static_cast<int>(bandwidth.sigma.size()) != m) throw Error("surface_entropy_gradient: one bandwidth per landmark");
  double max_radius = 0.0;
  for (double s : bandwidth.sigma) {
    if (!(s > 0.0)) throw Error("bandwidths must be positive");
    max_radius = std::max(max_radius, kernel_radius(s, cutoff));
  }
  const PointGrid grid(landmarks, max_radius);
  GeodesicEngine engine(mesh);
  std::vector<TangentVector> out(m);
  for (int k = 0; k < m; ++k) {
    out[k].base = landmarks[k];
    out[k].direction = kernel_sums(engine, landmarks, grid, k, bandwidth.sigma[k], cutoff, true).gradient;
  }
  return out;
}

double shape_entropy(const Eigen::MatrixXd& y, double alpha) {
  if (y.rows() < 2) throw Error("shape entropy needs at least two surfaces");
  if (!(alpha > 0.0)) throw Error("shape entropy needs alpha > 0");
  const auto [variable, constant] = shape_entropy_parts(y, alpha);
  return variable + constant;
}

Eigen::MatrixXd shape_entropy_gradient(const Eigen::MatrixXd& y, double alpha) {
  if (y.rows() < 2) throw Error("shape entropy gradient needs at least two surfaces");
  if (alpha < 0.0) throw Error("alpha must be non-negative");
  Eigen::MatrixXd gram = y * y.transpose();
  gram.diagonal().array() += alpha;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const Eigen::VectorXd d = ldlt.vectorD();
  const double scale = std::max(gram.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-13 * scale)
    throw Error("shape entropy gradient: singular covariance (alpha too small for rank-deficient Y)");
  return 2.0 * ldlt.solve(y);
}

std::vector<std::vector<Vec3>> shape_entropy_gradient(const LandmarkEnsemble& ensemble, double alpha) {
  const Eigen::MatrixXd g = shape_entropy_gradient(ensemble.centered(), alpha);
  std::vector<std::vector<Vec3>> out(ensemble.num_surfaces(), std::vector<Vec3>(ensemble.num_landmarks()));
  for (int j = 0; j < ensemble.num_surfaces(); ++j)
    for (int k = 0; k < ensemble.num_landmarks(); ++k) out[j][k] = g.block<1, 3>(j, 3 * k).transpose();
  return out;
}

double default_alpha(const Eigen::MatrixXd& y, double floor) {
  const double p = static_cast<double>(std::max<Eigen::Index>(y.cols(), 1));
  return std::max({1e-3 * y.squaredNorm() / p, floor, 1e-300});
}

std::vector<double> nearest_neighbor_distances(const TriangleMesh& mesh, const std::vector<SurfacePoint>& landmarks) {
  const int m = static_cast<int>(landmarks.size());
  std::vector<double> out(m, kInf);
  GeodesicEngine engine(mesh);
  const double radius = 1.5 * mean_spacing(mesh, m);
  for (int k = 0; k < m; ++k) out[k] = nearest_one(engine, landmarks, k, radius);
  return out;
}

KernelBandwidth default_bandwidth(const LandmarkEnsemble& ensemble, int threads) {
  const double nn = mean_nearest(ensemble, nearest_all(ensemble, threads));
  double edge = 0.0;
  for (int j = 0; j < ensemble.num_surfaces(); ++j) edge += ensemble.meshes[j].mean_edge_length();
  edge /= ensemble.num_surfaces();
  KernelBandwidth b;
  b.sigma.assign(ensemble.num_landmarks(), std::max(nn * nn, edge * edge));
  return b;
}

StepResult gessa_step(const LandmarkEnsemble& ensemble, const KernelBandwidth& bandwidth,
                      const OptimizerConfig& config) {
  if (config.gamma < 0.0) throw Error("gamma must be non-negative");
  if (static_cast<int>(bandwidth.sigma.size()) != ensemble.num_landmarks())
    throw Error("gessa_step: one bandwidth per landmark");
  Optimizer opt(ensemble.meshes, config);
  LevelParams level;
  level.bandwidth = bandwidth;
  level.alpha = config.alpha >= 0.0 ? config.alpha : default_alpha(ensemble.centered(), alpha_floor(ensemble));
  const Evaluation ev = opt.evaluate(ensemble, level);
  StepResult out;
  out.q_before = ev.q;
  if (config.gamma == 0.0) {
    out.ensemble = ensemble;
    out.q_after = ev.q;
    out.accepted = true;
    return out;
  }
  auto s = opt.step(ensemble, ev, level, config.gamma);
  out.halvings = s.halvings;
  if (s.accepted) {
    out.ensemble = std::move(s.ensemble);
    out.q_after = s.evaluation.q;
    out.gamma_used = s.gamma;
    out.clamped = s.clamped;
    out.accepted = true;
  } else {
    out.ensemble = ensemble;
    out.q_after = ev.q;
  }
  return out;
}

LandmarkEnsemble split_landmarks(const LandmarkEnsemble& ensemble, std::mt19937_64& rng, double epsilon) {
  const int n = ensemble.num_surfaces(), m = ensemble.num_landmarks();
  if (!(epsilon > 0.0)) epsilon = 0.5 * mean_nearest(ensemble, nearest_all(ensemble, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vec3> dirs(m);
  for (int k = 0; k < m; ++k) {
    const double x = normal(rng), y = normal(rng), z = normal(rng);
    dirs[k] = Vec3(x, y, z);
  }
  LandmarkEnsemble out = ensemble;
  for (int j = 0; j < n; ++j) {
    const TriangleMesh& mesh = ensemble.meshes[j];
    out.landmarks[j].reserve(2 * m);
    for (int k = 0; k < m; ++k) {
      const SurfacePoint& x = ensemble.landmarks[j][k];
      Vec3 t = project_to_tangent(dirs[k], mesh.face_normal(x.face));
      if (t.norm() < 1e-8 * dirs[k].norm()) {
        const Face& f = mesh.face(x.face);
        t = mesh.vertex(f[1]) - mesh.vertex(f[0]);
      }
      t.normalize();
      // Near an open boundary the shared direction may run into the edge and
      // leave the child on top of its parent, which the kernel cannot pull
      // apart. Fall back to the opposite and the perpendicular directions.
      ExpResult best = exp_map_walk(mesh, x, epsilon * t);
      if (best.truncated) {
        const Vec3 side = mesh.face_normal(x.face).cross(t);
        double far = (best.point.position - x.position).norm();
        for (const Vec3& alt : {Vec3(-t), side, Vec3(-side)}) {
          if (far >= 0.5 * epsilon) break;
          ExpResult r = exp_map_walk(mesh, x, epsilon * alt);
          const double d = (r.point.position - x.position).norm();
          if (d > far) {
            far = d;
            best = std::move(r);
          }
        }
      }
      out.landmarks[j].push_back(best.point);
    }
  }
  return out;
}

LandmarkEnsemble initialize_landmarks(const MeshEnsemble& meshes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u0 = uniform(rng), u1 = uniform(rng), u2 = uniform(rng);
  LandmarkEnsemble e;
  e.meshes = meshes;
  for (int j = 0; j < meshes.size(); ++j) {
    const TriangleMesh& mesh = meshes[j];
    const double target = u0 * mesh.total_area();
    double acc = 0.0;
    int face = mesh.num_faces() - 1;
    for (int f = 0; f < mesh.num_faces(); ++f) {
      acc += mesh.face_area(f);
      if (acc >= target) {
        face = f;
        break;
      }
    }
    const double r = std::sqrt(u1);
    e.landmarks.push_back({make_surface_point(mesh, face, Vec3(1.0 - r, r * (1.0 - u2), r * u2))});
  }
  return e;
}

SamplingResult sample_correspondences(const MeshEnsemble& meshes, const OptimizerConfig& config,
                                      const std::function<void(const LevelState&)>& observer) {
  config.check();
  if (meshes.size() < 2) throw Error("sample_correspondences needs at least two surfaces");
  for (int j = 0; j < meshes.size(); ++j)
    if (meshes[j].num_components() != 1) throw Error("surface " + meshes.ids[j] + " is not a single component");

  Optimizer opt(meshes, config);
  std::mt19937_64 rng(config.seed);
  SamplingResult result;
  LandmarkEnsemble current = initialize_landmarks(meshes, config.seed);

  for (int level = 0;; ++level) {
    const bool final_level = current.num_landmarks() == config.target_landmarks;
    const int iters = final_level || config.coarse_iters < 0 ? config.inner_iters : config.coarse_iters;
    const LevelParams params = opt.level_params(current);
    Evaluation ev = opt.evaluate(current, params);
    CostRecord rec{level, 0, ev.q, ev.gamma_bar, ev.sum_h};
    result.trace.push_back(rec);
    if (observer) observer(LevelState{level, 0, current, params.bandwidth, params.alpha, rec});

    double gamma = config.gamma;
    bool converged = false;
    for (int it = 1; it <= iters; ++it) {
      auto s = opt.step(current, ev, params, gamma);
      if (!s.accepted) {
        converged = true;
        break;
      }
      current.check();
      const double change = std::abs(ev.q - s.evaluation.q);
      const double scale = std::max(s.evaluation.gamma_y + s.evaluation.sum_abs_h, 1e-300);
      current = std::move(s.ensemble);
      ev = std::move(s.evaluation);
      result.clamped += s.clamped;
      rec = CostRecord{level, it, ev.q, ev.gamma_bar, ev.sum_h};
      result.trace.push_back(rec);
      if (observer) observer(LevelState{level, it, current, params.bandwidth, params.alpha, rec});
      gamma = std::min(config.gamma, s.gamma * 1.25);
      if (change <= config.conv_tol * scale) {
        converged = true;
        break;
      }
    }
    if (final_level) {
      result.converged = converged;
      break;
    }
    current = split_landmarks(current, rng);
  }
  result.ensemble = std::move(current);
  return result;
}

void write_landmarks(const std::filesystem::path& path, const LandmarkEnsemble& ensemble) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "subject_id,landmark_id,face_index,b0,b1,b2,x,y,z\n";
  for (int j = 0; j < ensemble.num_surfaces(); ++j)
    for (int k = 0; k < ensemble.num_landmarks(); ++k) {
      const SurfacePoint& p = ensemble.landmarks[j][k];
      out << csv::join({ensemble.meshes.ids[j], std::to_string(k), std::to_string(p.face),
                        csv::format_double(p.bary[0]), csv::format_double(p.bary[1]), csv::format_double(p.bary[2]),
                        csv::format_double(p.position[0]), csv::format_double(p.position[1]),
                        csv::format_double(p.position[2])})
          << '\n';
    }
}

LandmarkEnsemble read_landmarks(const std::filesystem::path& path, const MeshEnsemble& meshes) {
  const csv::Table t = csv::read(path);
  const int cs = t.column("subject_id"), cl = t.column("landmark_id"), cf = t.column("face_index");
  const int c0 = t.column("b0"), c1 = t.column("b1"), c2 = t.column("b2");
  std::map<std::string, int> index;
  for (int j = 0; j < meshes.size(); ++j) index[meshes.ids[j]] = j;
  std::vector<std::map<int, SurfacePoint>> rows(meshes.size());
  for (const auto& row : t.rows) {
    const auto it = index.find(row[cs]);
    if (it == index.end()) throw Error("landmark file names unknown subject '" + row[cs] + "'");
    const Vec3 b(csv::parse_double(row[c0]), csv::parse_double(row[c1]), csv::parse_double(row[c2]));
    rows[it->second][csv::parse_int(row[cl])] = make_surface_point(meshes[it->second], csv::parse_int(row[cf]), b);
  }
  LandmarkEnsemble e;
  e.meshes = meshes;
  for (int j = 0; j < meshes.size(); ++j) {
    std::vector<SurfacePoint> pts;
    int expected = 0;
    for (const auto& [k, p] : rows[j]) {
      if (k != expected++) throw Error("landmark ids must be 0..M-1 for subject " + meshes.ids[j]);
      pts.push_back(p);
    }
    e.landmarks.push_back(std::move(pts));
  }
  e.check();
  return e;
}

void write_cost_trace(const std::filesystem::path& path, const std::vector<CostRecord>& trace) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "level,iteration,Q,Gamma_bar,sum_H_bar\n";
  for (const auto& r : trace)
    out << csv::join({std::to_string(r.level), std::to_string(r.iteration), csv::format_double(r.q),
                      csv::format_double(r.gamma_bar), csv::format_double(r.sum_h)})
        << '\n';
}

}  // namespace gessa
