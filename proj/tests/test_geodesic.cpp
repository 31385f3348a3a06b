#include "doctest.h"
#include "helpers.hpp"

#include "gessa/geodesic.hpp"
#include "gessa/shapes.hpp"

#include <cmath>

using namespace gessa;

namespace {

int antipodal_vertex(const TriangleMesh& m, int v) {
  int best = -1;
  double bd = kInf;
  for (int u = 0; u < m.num_vertices(); ++u) {
    const double d = (m.vertex(u) + m.vertex(v)).norm();
    if (d < bd) {
      bd = d;
      best = u;
    }
  }
  return best;
}

// Saddle fan: apex at the origin, ring vertices alternating above and below
// the plane, so the apex angle sum exceeds 2*pi.
TriangleMesh saddle_fan(int n, double h) {
  std::vector<Vec3> v{Vec3::Zero()};
  for (int k = 0; k < n; ++k) {
    const double t = 2.0 * kPi * k / n;
    v.emplace_back(std::cos(t), std::sin(t), (k % 2 ? -h : h));
  }
  std::vector<Face> f;
  for (int k = 0; k < n; ++k) f.push_back({0, 1 + k, 1 + (k + 1) % n});
  return TriangleMesh(v, f);
}

// Unfolded polar coordinates (surface angle, radius) around the apex.
std::pair<double, double> fan_polar(const TriangleMesh& m, const SurfacePoint& p) {
  double acc = 0.0;
  for (int f = 0; f < p.face; ++f) acc += m.corner_angle(f, 0);
  const Vec3 a = m.vertex(m.face(p.face)[1]);
  const Vec3 d = p.position;
  const double ang = std::atan2(a.cross(d).norm(), a.dot(d));
  return {acc + ang, d.norm()};
}

double fan_oracle(const TriangleMesh& m, const SurfacePoint& a, const SurfacePoint& b, double total) {
  const auto [ta, ra] = fan_polar(m, a);
  const auto [tb, rb] = fan_polar(m, b);
  double dt = std::abs(ta - tb);
  dt = std::min(dt, total - dt);
  if (dt >= kPi) return ra + rb;
  return std::sqrt(ra * ra + rb * rb - 2 * ra * rb * std::cos(dt));
}

}  // namespace

TEST_CASE("distance from a point to itself is zero") {
  const TriangleMesh m = icosphere_level(2);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 10; ++k) {
    const SurfacePoint p = testing::random_point(m, rng);
    CHECK(geodesic_distance(m, p, p) == 0.0);
  }
  CHECK(geodesic_distance(m, vertex_point(m, 3), vertex_point(m, 3)) == 0.0);
}

TEST_CASE("flat meshes reproduce Euclidean distances") {
  const TriangleMesh square = flat_grid(1, 1);
  CHECK(geodesic_distance(square, vertex_point(square, 0), vertex_point(square, 3)) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
  CHECK(geodesic_distance(square, vertex_point(square, 1), vertex_point(square, 2)) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));

  const TriangleMesh grid = flat_grid(9, 7, 1.3, 1.0);
  std::mt19937_64 rng(2);
  GeodesicEngine engine(grid);
  double worst = 0.0;
  for (int s = 0; s < 20; ++s) {
    const SurfacePoint a = testing::random_point(grid, rng);
    engine.propagate(a);
    for (int k = 0; k < 20; ++k) {
      const SurfacePoint b = testing::random_point(grid, rng);
      worst = std::max(worst, std::abs(engine.distance(b) - (a.position - b.position).norm()));
    }
    for (int v = 0; v < grid.num_vertices(); ++v)
      worst = std::max(worst, std::abs(engine.vertex_distance(v) - (a.position - grid.vertex(v)).norm()));
  }
  CHECK(worst < 1e-6);

  // Sources exactly on a vertex and on an edge.
  const SurfacePoint at_vertex = vertex_point(grid, 23);
  const SurfacePoint on_edge = make_surface_point(grid, 40, Vec3(0.3, 0.7, 0.0));
  for (const SurfacePoint& a : {at_vertex, on_edge}) {
    engine.propagate(a);
    for (int k = 0; k < 30; ++k) {
      const SurfacePoint b = testing::random_point(grid, rng);
      CHECK(engine.distance(b) == doctest::Approx((a.position - b.position).norm()).epsilon(1e-9));
    }
  }
}

TEST_CASE("icosphere antipodal distance converges to pi") {
  double previous = kInf;
  for (int level = 1; level <= 4; ++level) {
    const TriangleMesh m = icosphere_level(level);
    const int v = 0;
    const double d = geodesic_distance(m, vertex_point(m, v), vertex_point(m, antipodal_vertex(m, v)));
    const double err = std::abs(d - kPi) / kPi;
    MESSAGE("level " << level << " relative error " << err);
    CHECK(err < previous);
    if (level == 3) CHECK(err < 0.02);
    previous = err;
  }
}

TEST_CASE("saddle vertices: paths wrap through the apex when the angle gap exceeds pi") {
  const TriangleMesh m = saddle_fan(8, 0.5);
  const double total = m.vertex_angle_sum(0);
  REQUIRE(total > 2.0 * kPi + 0.5);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.02, 0.45);
  GeodesicEngine engine(m);
  int through_apex = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto pick = [&]() {
      const int f = std::uniform_int_distribution<int>(0, 7)(rng);
      const double r = u(rng);
      const double s = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
      return make_surface_point(m, f, Vec3(1.0 - r, r * (1.0 - s), r * s));
    };
    const SurfacePoint a = pick(), b = pick();
    const double want = fan_oracle(m, a, b, total);
    engine.propagate(a);
    const double got = engine.distance(b);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
    const auto [ta, ra] = fan_polar(m, a);
    const auto [tb, rb] = fan_polar(m, b);
    (void)ra;
    (void)rb;
    const double dt = std::min(std::abs(ta - tb), total - std::abs(ta - tb));
    through_apex += dt >= kPi;
    const GeodesicPath path = engine.path(b);
    CHECK(path.length == doctest::Approx(got).epsilon(1e-7));
  }
  CHECK(through_apex > 10);
}

TEST_CASE("non-convex boundary: paths bend around a reflex corner") {
  // L-shaped domain: [0,2]x[0,2] minus (1,2]x(1,2].
  const TriangleMesh full = flat_grid(4, 4, 2.0, 2.0);
  std::vector<Face> faces;
  for (int f = 0; f < full.num_faces(); ++f) {
    const Vec3 c = (full.vertex(full.face(f)[0]) + full.vertex(full.face(f)[1]) + full.vertex(full.face(f)[2])) / 3.0;
    if (!(c.x() > 1.0 && c.y() > 1.0)) faces.push_back(full.face(f));
  }
  const TriangleMesh m = remove_degenerate_faces(TriangleMesh(full.vertices(), faces));
  const Vec3 corner(1.0, 1.0, 0.0);
  const SurfacePoint a = testing::nearest_point(m, Vec3(1.8, 0.3, 0.0));
  const SurfacePoint b = testing::nearest_point(m, Vec3(0.3, 1.8, 0.0));
  const double want = (a.position - corner).norm() + (corner - b.position).norm();
  CHECK(geodesic_distance(m, a, b) == doctest::Approx(want).epsilon(1e-9));
  const GeodesicPath p = geodesic_path(m, a, b);
  CHECK(p.length == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("symmetry, triangle inequality and chord bound on an icosphere") {
  const TriangleMesh m = icosphere_level(2);
  std::mt19937_64 rng(4);
  std::vector<SurfacePoint> pts;
  for (int k = 0; k < 50; ++k) pts.push_back(testing::random_point(m, rng));
  const Eigen::MatrixXd d = pairwise_geodesics(m, pts);

  GeodesicEngine engine(m);
  for (int i = 0; i < 50; i += 7) {
    engine.propagate(pts[i]);
    for (int j = 0; j < 50; ++j) {
      const double dij = engine.distance(pts[j]);
      CHECK(std::abs(dij - d(i, j)) <= 1e-7 * std::max(d(i, j), m.bbox_diagonal() * 1e-9));
    }
  }
  int violations = 0;
  for (int i = 0; i < 50; ++i) {
    CHECK(d(i, i) == 0.0);
    for (int j = 0; j < 50; ++j) {
      CHECK(d(i, j) >= (pts[i].position - pts[j].position).norm() - 1e-12);
      for (int k = 0; k < 50; ++k) violations += d(i, k) > d(i, j) + d(j, k) + 1e-6;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("pairwise geodesics small cases") {
  const TriangleMesh m = flat_grid(3, 1, 3.0, 1.0);
  const std::vector<SurfacePoint> one{testing::nearest_point(m, Vec3(0.5, 0.5, 0))};
  const Eigen::MatrixXd d1 = pairwise_geodesics(m, one);
  CHECK(d1.rows() == 1);
  CHECK(d1(0, 0) == 0.0);

  std::vector<SurfacePoint> three;
  for (double x : {0.5, 1.5, 2.5}) three.push_back(testing::nearest_point(m, Vec3(x, 0.4, 0)));
  const Eigen::MatrixXd d = pairwise_geodesics(m, three);
  Eigen::Matrix3d want;
  want << 0, 1, 2, 1, 0, 1, 2, 1, 0;
  CHECK((d - want).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("different components are rejected") {
  const TriangleMesh m({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 0, 0}, {6, 0, 0}, {5, 1, 0}}, {{0, 1, 2}, {3, 4, 5}});
  CHECK_THROWS_AS(geodesic_distance(m, face_centroid(m, 0), face_centroid(m, 1)), ComponentError);
  CHECK_THROWS_AS(log_map(m, face_centroid(m, 0), face_centroid(m, 1)), ComponentError);
}

TEST_CASE("geodesic paths") {
  SUBCASE("flat square corners give the straight segment") {
    const TriangleMesh sq = flat_grid(1, 1);
    const GeodesicPath p = geodesic_path(sq, vertex_point(sq, 0), vertex_point(sq, 3));
    REQUIRE(p.points.size() == 2);
    CHECK((p.points.front().position - sq.vertex(0)).norm() < 1e-12);
    CHECK((p.points.back().position - sq.vertex(3)).norm() < 1e-12);
    CHECK(p.length == doctest::Approx(std::sqrt(2.0)));
  }
  SUBCASE("points in one face") {
    const TriangleMesh m = icosphere_level(2);
    const SurfacePoint a = make_surface_point(m, 17, Vec3(0.6, 0.3, 0.1));
    const SurfacePoint b = make_surface_point(m, 17, Vec3(0.1, 0.2, 0.7));
    const GeodesicPath p = geodesic_path(m, a, b);
    REQUIRE(p.points.size() == 2);
    CHECK(p.length == doctest::Approx((a.position - b.position).norm()).epsilon(1e-12));
  }
  SUBCASE("icosphere paths are straight in the unfolding and match the distance") {
    const TriangleMesh m = icosphere_level(3);
    std::mt19937_64 rng(5);
    GeodesicEngine engine(m);
    for (int trial = 0; trial < 20; ++trial) {
      const SurfacePoint a = testing::random_point(m, rng);
      const SurfacePoint b = testing::nearest_point(m, -a.position);
      engine.propagate(a);
      const double d = engine.distance(b);
      const GeodesicPath p = engine.path(b);
      REQUIRE(p.points.size() >= 3);
      CHECK(std::abs(p.length - d) <= 1e-7 * d);
      CHECK((p.points.front().position - a.position).norm() < 1e-12);
      CHECK((p.points.back().position - b.position).norm() < 1e-12);
      for (size_t k = 1; k + 1 < p.points.size(); ++k) {
        // Crossing point on an edge: the angles to the edge on both sides sum to pi.
        const SurfacePoint& c = p.points[k];
        int zero = -1;
        for (int i = 0; i < 3; ++i)
          if (c.bary[i] < 1e-12) zero = i;
        REQUIRE(zero >= 0);
        const Face& t = m.face(c.face);
        const Vec3 e = (m.vertex(t[(zero + 2) % 3]) - m.vertex(t[(zero + 1) % 3])).normalized();
        const Vec3 in = (p.points[k - 1].position - c.position).normalized();
        const Vec3 out = (p.points[k + 1].position - c.position).normalized();
        const double angle_sum = std::acos(std::clamp(in.dot(e), -1.0, 1.0)) + std::acos(std::clamp(out.dot(e), -1.0, 1.0));
        CHECK(std::abs(angle_sum - kPi) < 1e-6);
      }
    }
  }
}

TEST_CASE("log map") {
  SUBCASE("log of the base point is zero") {
    const TriangleMesh m = icosphere_level(2);
    const SurfacePoint a = face_centroid(m, 5);
    CHECK(log_map(m, a, a).direction.norm() == 0.0);
  }
  SUBCASE("flat mesh gives the difference vector") {
    const TriangleMesh m = flat_grid(6, 6);
    std::mt19937_64 rng(6);
    for (int k = 0; k < 30; ++k) {
      const SurfacePoint a = testing::random_point(m, rng), b = testing::random_point(m, rng);
      const TangentVector v = log_map(m, a, b);
      CHECK((v.direction - (b.position - a.position)).norm() < 1e-9);
    }
    // Vertex and edge base points.
    const SurfacePoint at_vertex = vertex_point(m, 24);
    const SurfacePoint on_edge = make_surface_point(m, 30, Vec3(0.0, 0.4, 0.6));
    for (const SurfacePoint& a : {at_vertex, on_edge})
      for (int k = 0; k < 20; ++k) {
        const SurfacePoint b = testing::random_point(m, rng);
        CHECK((log_map(m, a, b).direction - (b.position - a.position)).norm() < 1e-9);
      }
  }
  SUBCASE("icosphere: 30 degree arc") {
    const TriangleMesh m = icosphere_level(3);
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      const SurfacePoint a = testing::random_point(m, rng);
      const Vec3 n = a.position.normalized();
      Vec3 t = n.cross(Vec3(0.3, 0.5, 0.8)).normalized();
      const double arc = kPi / 6;
      const SurfacePoint b = testing::nearest_point(m, std::cos(arc) * n + std::sin(arc) * t);
      const TangentVector v = log_map(m, a, b);
      const double want_arc = std::acos(std::clamp(a.position.normalized().dot(b.position.normalized()), -1.0, 1.0));
      CHECK(std::abs(v.norm() - want_arc) < 0.02 * want_arc);
      const Vec3 bn = b.position.normalized();
      const Vec3 tangent = (bn - n * n.dot(bn)).normalized();
      const double angle = std::acos(std::clamp(v.direction.normalized().dot(tangent), -1.0, 1.0));
      CHECK(angle < 5.0 * kPi / 180.0);
      CHECK(std::abs(v.direction.dot(m.face_normal(a.face))) < 1e-9 * v.norm());
      CHECK(v.norm() == doctest::Approx(geodesic_distance(m, a, b)).epsilon(1e-7));
    }
  }
}

TEST_CASE("exp map") {
  SUBCASE("zero vector stays put") {
    const TriangleMesh m = icosphere_level(2);
    const SurfacePoint a = face_centroid(m, 3);
    const SurfacePoint b = exp_map(m, a, TangentVector{a, Vec3::Zero()});
    CHECK((b.position - a.position).norm() == 0.0);
  }
  SUBCASE("flat mesh adds the vector") {
    const TriangleMesh m = flat_grid(8, 8);
    std::mt19937_64 rng(9);
    for (int k = 0; k < 50; ++k) {
      const SurfacePoint a = testing::nearest_point(m, Vec3(0.5, 0.5, 0.0));
      std::uniform_real_distribution<double> u(-0.45, 0.45);
      const Vec3 step(u(rng), u(rng), 0.0);
      const ExpResult r = exp_map_walk(m, a, step);
      CHECK_FALSE(r.truncated);
      CHECK((r.point.position - (a.position + step)).norm() < 1e-9);
      CHECK(is_valid(m, r.point));
    }
  }
  SUBCASE("walk leaving an open boundary is clamped") {
    const TriangleMesh m = flat_grid(4, 4);
    const SurfacePoint a = testing::nearest_point(m, Vec3(0.5, 0.5, 0.0));
    const ExpResult r = exp_map_walk(m, a, Vec3(2.0, 0.0, 0.0));
    CHECK(r.truncated);
    CHECK(r.point.position.x() == doctest::Approx(1.0));
    CHECK(r.point.position.y() == doctest::Approx(0.5));
  }
  SUBCASE("exp inverts log on an icosphere") {
    const TriangleMesh m = icosphere_level(3);
    std::mt19937_64 rng(10);
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
      const SurfacePoint a = testing::random_point(m, rng), b = testing::random_point(m, rng);
      const TangentVector v = log_map(m, a, b);
      const SurfacePoint c = exp_map(m, a, v);
      worst = std::max(worst, (c.position - b.position).norm());
      CHECK(is_valid(m, c));
    }
    MESSAGE("worst exp(log) error " << worst);
    CHECK(worst < 1e-3 * m.bbox_diagonal());
  }
  SUBCASE("exp from a vertex follows the polar convention of log") {
    const TriangleMesh m = icosphere_level(3);
    const SurfacePoint a = vertex_point(m, 0);  // valence-5 vertex
    std::mt19937_64 rng(12);
    for (int k = 0; k < 20; ++k) {
      const SurfacePoint b = testing::random_point(m, rng);
      const TangentVector v = log_map(m, a, b);
      const SurfacePoint c = exp_map(m, a, v);
      CHECK((c.position - b.position).norm() < 2e-2 * m.bbox_diagonal());
    }
  }
}

TEST_CASE("radius-limited propagation is exact inside the radius") {
  const TriangleMesh m = ellipsoid(Vec3(1.0, 0.8, 0.6), 8);
  std::mt19937_64 rng(13);
  GeodesicEngine full(m), limited(m);
  for (int trial = 0; trial < 5; ++trial) {
    const SurfacePoint a = testing::random_point(m, rng);
    full.propagate(a);
    limited.propagate(a, 0.4);
    CHECK(limited.window_count() < full.window_count());
    for (int k = 0; k < 200; ++k) {
      const SurfacePoint b = testing::random_point(m, rng);
      const double df = full.distance(b);
      const double dl = limited.distance(b);
      if (df <= 0.4) CHECK(dl == doctest::Approx(df).epsilon(1e-12));
      else CHECK(dl > 0.4);
    }
  }
}
