#include "oracles.hpp"

#include "helpers.hpp"

#include "gessa/geodesic.hpp"
#include "gessa/shapes.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

using namespace gessa;

namespace testing {

double full_shape_entropy(const Eigen::MatrixXd& y, double alpha) {
  const int p = static_cast<int>(y.cols());
  Eigen::MatrixXd c = y.transpose() * y;
  c.diagonal().array() += alpha;
  c /= static_cast<double>(y.rows() - 1);
  const Eigen::LLT<Eigen::MatrixXd> llt(c);
  double logdet = 0.0;
  for (int i = 0; i < p; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return logdet;
}

LandmarkEnsemble random_instance(bool flat, int n, int m, std::mt19937_64& rng) {
  std::vector<MeshPtr> meshes;
  std::vector<std::string> ids;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int j = 0; j < n; ++j) {
    if (flat) {
      meshes.push_back(std::make_shared<TriangleMesh>(flat_grid(8, 8, 1.0, 1.0)));
    } else {
      // Mildly different radii keep the shape term non-trivial.
      meshes.push_back(std::make_shared<TriangleMesh>(icosphere(4, 1.0 + 0.05 * u(rng))));
    }
    ids.push_back("s" + std::to_string(j));
  }
  LandmarkEnsemble e;
  e.meshes = MeshEnsemble(meshes, ids);
  for (int j = 0; j < n; ++j) {
    std::vector<SurfacePoint> pts;
    for (int k = 0; k < m; ++k) pts.push_back(random_point(e.meshes[j], rng));
    e.landmarks.push_back(pts);
  }
  return e;
}

namespace {

// Two orthonormal directions in the plane of face f.
std::pair<Vec3, Vec3> tangent_basis(const TriangleMesh& mesh, int f) {
  const Face& t = mesh.face(f);
  const Vec3 a = (mesh.vertex(t[1]) - mesh.vertex(t[0])).normalized();
  const Vec3 b = mesh.face_normal(f).cross(a).normalized();
  return {a, b};
}

// Landmark k's own contribution to -H with the others fixed.
double own_term(const TriangleMesh& mesh, const std::vector<SurfacePoint>& pts, const KernelBandwidth& bw, int k) {
  const double p = estimate_density(mesh, pts, bw)[k];
  return std::log(p) / static_cast<double>(pts.size());
}

}  // namespace

// The surface is only piecewise smooth, so the stencil must not leave the
// landmark's face: at most half the distance to the nearest edge.
double in_face_step(const TriangleMesh& mesh, const SurfacePoint& p, double h) {
  const auto f = mesh.face(p.face);
  double edge = kInf;
  for (int i = 0; i < 3; ++i) {
    const Vec3 a = mesh.vertex(f[i]), b = mesh.vertex(f[(i + 1) % 3]);
    edge = std::min(edge, (p.position - a).cross(b - a).norm() / (b - a).norm());
  }
  return std::max(std::min(h, 0.5 * edge), 1e-9);
}

GradientCheck check_gradients(const LandmarkEnsemble& e, const KernelBandwidth& bw, double alpha, double h) {
  GradientCheck out;
  const int n = e.num_surfaces(), m = e.num_landmarks();

  double surf_num = 0.0, surf_den = 0.0;
  for (int j = 0; j < n; ++j) {
    const TriangleMesh& mesh = e.meshes[j];
    const auto grad = surface_entropy_gradient(mesh, e.landmarks[j], bw);
    for (int k = 0; k < m; ++k) {
      const auto [t1, t2] = tangent_basis(mesh, e.landmarks[j][k].face);
      const double hk = in_face_step(mesh, e.landmarks[j][k], h);
      for (const Vec3& t : {t1, t2}) {
        auto plus = e.landmarks[j], minus = e.landmarks[j];
        plus[k] = exp_map_walk(mesh, e.landmarks[j][k], hk * t).point;
        minus[k] = exp_map_walk(mesh, e.landmarks[j][k], -hk * t).point;
        const double fd = (own_term(mesh, plus, bw, k) - own_term(mesh, minus, bw, k)) / (2.0 * hk);
        const double an = grad[k].direction.dot(t);
        surf_num += (fd - an) * (fd - an);
        surf_den += an * an;
      }
    }
  }
  out.surface_error = std::sqrt(surf_num / std::max(surf_den, 1e-300));

  const auto shape = shape_entropy_gradient(e, alpha);
  double shape_num = 0.0, shape_den = 0.0;
  for (int j = 0; j < n; ++j) {
    const TriangleMesh& mesh = e.meshes[j];
    for (int k = 0; k < m; ++k) {
      const auto [t1, t2] = tangent_basis(mesh, e.landmarks[j][k].face);
      const double hk = in_face_step(mesh, e.landmarks[j][k], h);
      for (const Vec3& t : {t1, t2}) {
        LandmarkEnsemble plus = e, minus = e;
        plus.landmarks[j][k] = exp_map_walk(mesh, e.landmarks[j][k], hk * t).point;
        minus.landmarks[j][k] = exp_map_walk(mesh, e.landmarks[j][k], -hk * t).point;
        const double fd =
            (full_shape_entropy(plus.centered(), alpha) - full_shape_entropy(minus.centered(), alpha)) / (2.0 * hk);
        const double an = shape[j][k].dot(t);
        shape_num += (fd - an) * (fd - an);
        shape_den += an * an;
      }
    }
  }
  out.shape_error = std::sqrt(shape_num / std::max(shape_den, 1e-300));

  const Eigen::MatrixXd y = e.centered();
  const Eigen::MatrixXd g = shape_entropy_gradient(y, alpha);
  double y_num = 0.0, y_den = 0.0;
  for (int r = 0; r < y.rows(); ++r)
    for (int c = 0; c < y.cols(); ++c) {
      Eigen::MatrixXd yp = y, ym = y;
      yp(r, c) += h;
      ym(r, c) -= h;
      const double fd = (full_shape_entropy(yp, alpha) - full_shape_entropy(ym, alpha)) / (2.0 * h);
      y_num += (fd - g(r, c)) * (fd - g(r, c));
      y_den += g(r, c) * g(r, c);
    }
  out.shape_error_y = std::sqrt(y_num / std::max(y_den, 1e-300));
  return out;
}

double coefficient_of_variation(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return std::sqrt(var) / mean;
}

std::vector<double> brute_force_nearest(const TriangleMesh& mesh, const std::vector<SurfacePoint>& pts) {
  const Eigen::MatrixXd d = pairwise_geodesics(mesh, pts);
  std::vector<double> out(pts.size(), kInf);
  for (int i = 0; i < d.rows(); ++i)
    for (int j = 0; j < d.cols(); ++j)
      if (i != j) out[i] = std::min(out[i], d(i, j));
  return out;
}

TwinDataset simulate_twins(double a2, double c2, int n_mz, int n_dz, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  const double a = std::sqrt(a2), c = std::sqrt(c2), e = std::sqrt(1.0 - a2 - c2);
  TwinDataset d;
  d.mz.resize(n_mz, 2);
  d.dz.resize(n_dz, 2);
  for (int i = 0; i < n_mz; ++i) {
    const double shared = a * g(rng) + c * g(rng);
    d.mz(i, 0) = shared + e * g(rng);
    d.mz(i, 1) = shared + e * g(rng);
    d.mz_ids.push_back("m" + std::to_string(i));
  }
  const double half = std::sqrt(0.5);
  for (int i = 0; i < n_dz; ++i) {
    const double common = half * a * g(rng) + c * g(rng);
    d.dz(i, 0) = common + half * a * g(rng) + e * g(rng);
    d.dz(i, 1) = common + half * a * g(rng) + e * g(rng);
    d.dz_ids.push_back("d" + std::to_string(i));
  }
  return d;
}

double chi_square_tail_integral(double x, int df) {
  const double k = 0.5 * df;
  const auto pdf = [&](double t) {
    if (t <= 0.0) return df == 2 ? 0.5 : 0.0;
    return std::exp((k - 1.0) * std::log(t) - 0.5 * t - k * std::log(2.0) - std::lgamma(k));
  };
  // Integrate the density over [x, x + 200] in sqrt-spaced coordinates to
  // tame the singularity at zero for df = 1.
  const double lo = std::sqrt(x), hi = std::sqrt(x + 200.0);
  const int n = 200000;
  const double h = (hi - lo) / n;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double u = lo + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    sum += w * pdf(u * u) * 2.0 * u;
  }
  return sum * h / 3.0;
}

double ks_uniform(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  const double n = static_cast<double>(p.size());
  double d = 0.0;
  for (size_t i = 0; i < p.size(); ++i) d = std::max({d, (i + 1) / n - p[i], p[i] - i / n});
  return d;
}

}  // namespace testing
