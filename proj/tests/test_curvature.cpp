#include "doctest.h"
#include "helpers.hpp"

#include "gessa/curvature.hpp"
#include "gessa/shapes.hpp"

#include <cmath>

using namespace gessa;

namespace {

PrincipalCurvatures make(double a, double b) {
  PrincipalCurvatures pc;
  pc.k_max = a;
  pc.k_min = b;
  pc.defined = true;
  return pc;
}

TriangleMesh scaled(const TriangleMesh& m, double s) {
  std::vector<Vec3> v;
  for (const Vec3& p : m.vertices()) v.push_back(s * p);
  return TriangleMesh(v, m.faces());
}

// Worst relative error of both principal curvatures against 1/r at random points.
double sphere_error(int level, std::mt19937_64& rng) {
  const TriangleMesh m = icosphere_level(level, 1.0);
  const CurvatureField field(m);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto pc = field.at(testing::random_point(m, rng));
    REQUIRE(pc.defined);
    worst = std::max({worst, std::abs(pc.k_max - 1.0), std::abs(pc.k_min - 1.0)});
  }
  return worst;
}

}  // namespace

TEST_CASE("index formulas") {
  const auto sphere = curvature_record(make(1, 1));
  CHECK(sphere.mc == 1.0);
  CHECK(sphere.gc == 1.0);
  CHECK(sphere.cu == 1.0);
  CHECK(*sphere.si == doctest::Approx(1.0).epsilon(1e-15));

  const auto cyl = curvature_record(make(1, 0));
  CHECK(cyl.mc == 0.5);
  CHECK(cyl.gc == 0.0);
  CHECK(cyl.cu == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(*cyl.si == doctest::Approx(0.5).epsilon(1e-15));

  const auto saddle = curvature_record(make(1, -1));
  CHECK(saddle.mc == 0.0);
  CHECK(saddle.gc == -1.0);
  CHECK(saddle.cu == 1.0);
  CHECK(*saddle.si == 0.0);

  CHECK(*curvature_record(make(-2, -2)).si == doctest::Approx(-1.0));
  CHECK_FALSE(curvature_record(make(0, 0)).si.has_value());
  CHECK_FALSE(curvature_index(make(0, 0), CurvatureKind::SI).has_value());
  CHECK_FALSE(curvature_index(PrincipalCurvatures{}, CurvatureKind::MC).has_value());
  CHECK(*curvature_record(make(1, 0), true).si == doctest::Approx(kPi * kPi / 8.0));
}

TEST_CASE("record invariants on random curvatures") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 10000; ++i) {
    double a = u(rng), b = u(rng);
    if (a < b) std::swap(a, b);
    const auto r = curvature_record(make(a, b));
    CHECK(r.mc * r.mc >= r.gc - 1e-12 * std::abs(r.gc));
    CHECK(r.cu >= 0.0);
    CHECK(*r.si >= -1.0);
    CHECK(*r.si <= 1.0);
    const auto s = curvature_record(make(a / 3.0, b / 3.0));
    CHECK(*s.si == doctest::Approx(*r.si).epsilon(1e-12));
  }
}

TEST_CASE("sphere curvatures within five percent") {
  std::mt19937_64 rng(5);
  CHECK(sphere_error(3, rng) < 0.05);
}

TEST_CASE("sphere error shrinks with refinement") {
  std::mt19937_64 rng(6);
  double last = kInf;
  for (int level = 2; level <= 4; ++level) {
    const double e = sphere_error(level, rng);
    CHECK(e < last);
    last = e;
  }
}

TEST_CASE("plane has zero curvature") {
  const TriangleMesh m = flat_grid(10, 10);
  const CurvatureField field(m);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    const auto p = testing::random_point(m, rng);
    const auto pc = field.at(p);
    if (!pc.defined) continue;
    CHECK(std::abs(pc.k_max) < 1e-6);
    CHECK(std::abs(pc.k_min) < 1e-6);
  }
  const auto centre = field.at(testing::nearest_point(m, Vec3(0.45, 0.55, 0)));
  REQUIRE(centre.defined);
  CHECK(std::abs(centre.k_max) < 1e-6);
}

TEST_CASE("cylinder of radius two") {
  const TriangleMesh m = cylinder(2.0, 6.0, 96, 48);
  const CurvatureField field(m);
  std::mt19937_64 rng(8);
  int checked = 0;
  for (int i = 0; i < 200 && checked < 60; ++i) {
    const auto p = testing::random_point(m, rng);
    if (std::abs(p.position.z() - 3.0) > 2.0) continue;  // away from the rims
    const auto pc = field.at(p);
    REQUIRE(pc.defined);
    CHECK(pc.k_max == doctest::Approx(0.5).epsilon(0.05));
    CHECK(std::abs(pc.k_min) < 0.05 * 0.5);
    CHECK(std::abs(pc.d_max.dot(pc.d_min)) < 1e-6);
    CHECK(std::abs(pc.d_max.dot(pc.normal)) < 1e-6);
    CHECK(std::abs(pc.d_min.z()) > 0.95);  // flat direction runs along the axis
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("scaling the mesh scales the indices") {
  const TriangleMesh m = ellipsoid(Vec3(1.0, 0.7, 0.5), 12);
  const TriangleMesh big = scaled(m, 2.0);
  const CurvatureField f1(m), f2(big);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto p = testing::random_point(m, rng);
    const auto q = make_surface_point(big, p.face, p.bary);
    const auto a = curvature_record(f1.at(p)), b = curvature_record(f2.at(q));
    CHECK(std::abs(*a.si - *b.si) < 1e-3);
    CHECK(b.cu == doctest::Approx(a.cu / 2).epsilon(1e-9));
    CHECK(b.mc == doctest::Approx(a.mc / 2).epsilon(1e-9));
    CHECK(b.gc == doctest::Approx(a.gc / 4).epsilon(1e-9));
  }
}

TEST_CASE("curvature matrices") {
  auto s1 = std::make_shared<TriangleMesh>(icosphere_level(3, 1.0));
  auto s2 = std::make_shared<TriangleMesh>(icosphere_level(3, 2.0));
  std::mt19937_64 rng(10);
  LandmarkEnsemble e;
  e.meshes = MeshEnsemble({s1, s2}, {"r1", "r2"});
  std::vector<SurfacePoint> a, b;
  for (int k = 0; k < 20; ++k) {
    a.push_back(testing::random_point(*s1, rng));
    b.push_back(make_surface_point(*s2, a.back().face, a.back().bary));
  }
  e.landmarks = {a, b};
  const TraitMatrix mc = curvature_matrix(e, CurvatureKind::MC);
  CHECK(mc.rows() == 2);
  CHECK(mc.cols() == 20);
  CHECK(mc.values.row(0).mean() == doctest::Approx(1.0).epsilon(0.05));
  CHECK(mc.values.row(1).mean() == doctest::Approx(0.5).epsilon(0.05));

  LandmarkEnsemble same = e;
  same.meshes = MeshEnsemble({s1, s1}, {"a", "b"});
  same.landmarks = {a, a};
  const TraitMatrix gc = curvature_matrix(same, CurvatureKind::GC);
  for (int i = 0; i < gc.values.size(); ++i) CHECK(gc.values.data()[i] == doctest::Approx(1.0).epsilon(0.05));

  const TraitMatrix cu = curvature_matrix(e, CurvatureKind::CU);
  CHECK(cu.values.minCoeff() >= 0.0);
  for (bool f : cu.flagged) CHECK_FALSE(f);
}

TEST_CASE("flat landmarks leave SI missing and flag the column") {
  auto plane = std::make_shared<TriangleMesh>(flat_grid(6, 6));
  LandmarkEnsemble e;
  e.meshes = MeshEnsemble({plane, plane}, {"a", "b"});
  const auto p = testing::nearest_point(*plane, Vec3(0.5, 0.5, 0));
  e.landmarks = {{p}, {p}};
  const TraitMatrix si = curvature_matrix(e, CurvatureKind::SI);
  CHECK(std::isnan(si.values(0, 0)));
  CHECK(si.flagged[0]);
  const TraitMatrix mc = curvature_matrix(e, CurvatureKind::MC);
  CHECK(mc.values(0, 0) == 0.0);
}

TEST_CASE("kind names") {
  CHECK(curvature_kind_from_string("GC") == CurvatureKind::GC);
  CHECK(std::string(to_string(CurvatureKind::SI)) == "SI");
  CHECK_THROWS_AS(curvature_kind_from_string("XX"), Error);
}
