#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"

#include "gessa/heritability.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <random>

using namespace gessa;

namespace {

// Pairs whose sample covariance is exactly the identity.
Eigen::MatrixX2d whitened(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixX2d x(n, 2);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  x.rowwise() -= x.colwise().mean();
  const Eigen::Matrix2d s = (x.transpose() * x) / (n - 1.0);
  const Eigen::Matrix2d l = s.llt().matrixL();
  return x * l.inverse().transpose();
}

TraitMatrix traits_from(const std::vector<TwinDataset>& columns, std::vector<TwinRecord>& registry) {
  const TwinDataset& first = columns.front();
  const int pairs = first.n_mz() + first.n_dz();
  TraitMatrix m;
  m.values.resize(2 * pairs, static_cast<Eigen::Index>(columns.size()));
  registry.clear();
  for (int p = 0; p < pairs; ++p) {
    const bool mz = p < first.n_mz();
    for (int t = 0; t < 2; ++t) {
      const std::string id = "p" + std::to_string(p) + "_" + std::to_string(t);
      m.subject_ids.push_back(id);
      registry.push_back({id, "p" + std::to_string(p), mz, 40.0});
    }
  }
  for (size_t c = 0; c < columns.size(); ++c) {
    m.labels.push_back("t" + std::to_string(c));
    for (int p = 0; p < pairs; ++p) {
      const bool mz = p < first.n_mz();
      const auto row = mz ? columns[c].mz.row(p) : columns[c].dz.row(p - first.n_mz());
      m.values(2 * p, static_cast<Eigen::Index>(c)) = row[0];
      m.values(2 * p + 1, static_cast<Eigen::Index>(c)) = row[1];
    }
  }
  return m;
}

}  // namespace

TEST_CASE("group covariance") {
  Eigen::MatrixX2d two(2, 2);
  two << 1, 2, 3, 4;
  const Eigen::Matrix2d s = group_covariance(two);
  CHECK((s - Eigen::Matrix2d::Constant(2.0)).norm() == 0.0);

  Eigen::MatrixX2d same(5, 2);
  same.col(0) << 1, 4, 2, 8, 5;
  same.col(1) = same.col(0);
  const Eigen::Matrix2d t = group_covariance(same);
  CHECK(t(0, 0) == t(1, 1));
  CHECK(t(0, 1) == t(0, 0));

  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixX2d big(100000, 2);
  for (int i = 0; i < big.size(); ++i) big.data()[i] = g(rng);
  CHECK(std::abs(group_covariance(big)(0, 1)) < 0.02);

  CHECK_THROWS_AS(group_covariance(Eigen::MatrixX2d(1, 2)), Error);
}

TEST_CASE("implied covariance algebra") {
  const Eigen::Matrix2d m = implied_mz(0.6, 0.3, 0.5), d = implied_dz(0.6, 0.3, 0.5);
  CHECK(m(0, 0) == doctest::Approx(0.36 + 0.09 + 0.25));
  CHECK(m(0, 1) == doctest::Approx(0.36 + 0.09));
  CHECK(d(0, 1) == doctest::Approx(0.18 + 0.09));
  CHECK(d(1, 1) == m(1, 1));
}

TEST_CASE("saturated likelihood on identity covariances") {
  std::mt19937_64 rng(2);
  TwinDataset d;
  d.mz = whitened(40, rng);
  d.dz = whitened(60, rng);
  const SaturatedFit sat = fit_saturated(d);
  CHECK(sat.minus2ll == doctest::Approx(2.0 * 100).epsilon(1e-12));
  CHECK(sat.df == 6);

  const SemFit ae = fit_sem(d, SemModel::AE);
  CHECK(ae.converged);
  CHECK(ae.h2() < 0.02);
  CHECK(ae.minus2ll >= sat.minus2ll - 1e-9);
  const GoodnessOfFit g = goodness_of_fit(ae, sat);
  CHECK(g.df == 4);
  CHECK(g.chi2 < 1e-6);
  CHECK(g.p == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("AE recovery on simulated twins") {
  std::mt19937_64 rng(3);
  const TwinDataset d = testing::simulate_twins(0.7, 0.0, 2000, 2000, rng);
  const SemFit ae = fit_sem(d, SemModel::AE);
  REQUIRE(ae.converged);
  CHECK(ae.h2() == doctest::Approx(0.7).epsilon(0.05 / 0.7));
  CHECK(ae.c == 0.0);
  CHECK(ae.a2() + ae.e2() == doctest::Approx(1.0));
  CHECK(ae.k == 2);
  CHECK(ae.aic == doctest::Approx(ae.minus2ll + 4.0));
}

TEST_CASE("ACE recovery on simulated twins") {
  std::mt19937_64 rng(4);
  const TwinDataset d = testing::simulate_twins(0.4, 0.3, 2000, 2000, rng);
  const SemFit ace = fit_sem(d, SemModel::ACE);
  REQUIRE(ace.converged);
  CHECK(std::abs(ace.a2() - 0.4) < 0.05);
  CHECK(std::abs(ace.c2() - 0.3) < 0.05);
  CHECK(std::abs(ace.e2() - 0.3) < 0.05);
}

TEST_CASE("nesting, bounds and positive definiteness over random data") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 40; ++t) {
    const double a2 = 0.9 * u(rng), c2 = (0.95 - a2) * u(rng);
    const TwinDataset d = testing::simulate_twins(a2, c2, 50 + t * 10, 60 + t * 7, rng);
    const SaturatedFit sat = fit_saturated(d);
    std::vector<SemFit> fits;
    for (auto m : {SemModel::ACE, SemModel::AE, SemModel::E}) fits.push_back(fit_sem(d, m));
    for (const auto& f : fits) {
      REQUIRE(f.converged);
      CHECK(f.minus2ll >= sat.minus2ll - 1e-6);
      CHECK(f.h2() >= 0.0);
      CHECK(f.h2() <= 1.0);
      CHECK(f.e > 0.0);
      CHECK(f.sigma_mz.llt().info() == Eigen::Success);
      CHECK(f.sigma_dz.llt().info() == Eigen::Success);
      CHECK((f.sigma_mz - f.sigma_mz.transpose()).norm() == 0.0);
    }
    CHECK(fits[1].minus2ll >= fits[0].minus2ll - 1e-6);
    CHECK(fits[2].minus2ll >= fits[1].minus2ll - 1e-6);
  }
}

TEST_CASE("rescaling and twin order do not change the estimate") {
  std::mt19937_64 rng(6);
  TwinDataset d = testing::simulate_twins(0.5, 0.2, 300, 300, rng);
  const SemFit base = fit_sem(d, SemModel::ACE);
  TwinDataset scaled = d;
  scaled.mz *= 10.0;
  scaled.dz *= 10.0;
  const SemFit big = fit_sem(scaled, SemModel::ACE);
  CHECK(std::abs(big.h2() - base.h2()) < 1e-6);
  CHECK(std::abs(big.c2() - base.c2()) < 1e-6);

  TwinDataset swapped = d;
  swapped.mz.col(0).swap(swapped.mz.col(1));
  swapped.dz.col(0).swap(swapped.dz.col(1));
  const SemFit s = fit_sem(swapped, SemModel::ACE);
  CHECK(s.h2() == base.h2());
  CHECK(s.minus2ll == base.minus2ll);

  // Reordering only some pairs moves the column means, an O(1/n) effect.
  TwinDataset mixed = d;
  for (int i = 0; i < 300; i += 3) std::swap(mixed.dz(i, 0), mixed.dz(i, 1));
  CHECK(std::abs(fit_sem(mixed, SemModel::ACE).h2() - base.h2()) < 0.02);
}

TEST_CASE("singular covariance is an error") {
  TwinDataset d;
  d.mz.resize(4, 2);
  d.mz.col(0) << 1, 2, 3, 4;
  d.mz.col(1) = d.mz.col(0);
  d.dz.resize(3, 2);
  d.dz << 1, 0, 0, 1, 2, 2;
  CHECK_THROWS_AS(fit_sem(d, SemModel::AE), Error);
  CHECK_THROWS_AS(fit_saturated(d), Error);
}

TEST_CASE("chi-square tail") {
  CHECK(chi_square_p(0.0, 3) == 1.0);
  CHECK(chi_square_p(-1.0, 1) == 1.0);
  CHECK(std::abs(chi_square_p(3.84, 1) - 0.05) < 1e-3);
  for (int df : {1, 2, 4, 5})
    for (double x : {0.5, 2.0, 7.5})
      CHECK(chi_square_p(x, df) == doctest::Approx(testing::chi_square_tail_integral(x, df)).epsilon(1e-6));
  SemFit f;
  f.k = 2;
  f.minus2ll = 10.0;
  CHECK_THROWS_AS(goodness_of_fit(f, SaturatedFit{10.1, 6}), Error);
  const GoodnessOfFit exact = goodness_of_fit(f, SaturatedFit{10.0, 6});
  CHECK(exact.chi2 == 0.0);
  CHECK(exact.p == 1.0);
}

TEST_CASE("AIC selection and the tie rule") {
  SemFit ace, ae, e;
  ace.model = SemModel::ACE, ace.k = 3, ace.aic = 100.0, ace.converged = true;
  ae.model = SemModel::AE, ae.k = 2, ae.aic = 100.0, ae.converged = true;
  e.model = SemModel::E, e.k = 1, e.aic = 120.0, e.converged = true;
  CHECK(select_model({ace, ae, e}).model == SemModel::AE);
  ace.aic = 99.0;
  CHECK(select_model({ace, ae, e}).model == SemModel::ACE);
  ace.converged = false;
  CHECK(select_model({ace, ae, e}).model == SemModel::AE);
  ae.converged = e.converged = false;
  CHECK_THROWS_AS(select_model({ace, ae, e}), Error);
}

TEST_CASE("E is chosen for noise and never for strong heritability") {
  std::mt19937_64 rng(7);
  int noise_e = 0;
  const int reps = 40;
  for (int r = 0; r < reps; ++r) {
    const TwinDataset noise = testing::simulate_twins(0.0, 0.0, 300, 300, rng);
    std::vector<SemFit> fits;
    for (auto m : {SemModel::ACE, SemModel::AE, SemModel::E}) fits.push_back(fit_sem(noise, m));
    noise_e += select_model(fits).model == SemModel::E;

    const TwinDataset strong = testing::simulate_twins(0.7, 0.0, 300, 300, rng);
    std::vector<SemFit> sfits;
    for (auto m : {SemModel::ACE, SemModel::AE, SemModel::E}) sfits.push_back(fit_sem(strong, m));
    CHECK(select_model(sfits).model != SemModel::E);
    CHECK(sfits[2].aic > sfits[1].aic);
  }
  CHECK(noise_e > reps / 2);
}

TEST_CASE("LRT against the saturated model stays small under the true model") {
  std::mt19937_64 rng(8);
  int small = 0;
  const int reps = 60;
  for (int r = 0; r < reps; ++r) {
    const TwinDataset d = testing::simulate_twins(0.5, 0.0, 400, 400, rng);
    const GoodnessOfFit g = goodness_of_fit(fit_sem(d, SemModel::AE), fit_saturated(d));
    small += g.p > 0.05;
  }
  CHECK(small >= 0.9 * reps);
}

TEST_CASE("heritability map batch") {
  std::mt19937_64 rng(9);
  const double truth[] = {0.2, 0.5, 0.8};
  std::vector<TwinDataset> cols;
  std::vector<double> expected;
  for (int c = 0; c < 30; ++c) {
    expected.push_back(truth[c % 3]);
    cols.push_back(testing::simulate_twins(truth[c % 3], 0.0, 1000, 1000, rng));
  }
  std::vector<TwinRecord> registry;
  TraitMatrix m = traits_from(cols, registry);
  const HeritabilityMap map = heritability_map(m, registry, 2);
  REQUIRE(map.size() == 30);
  double err = 0.0;
  for (int c = 0; c < 30; ++c) {
    CHECK(map[c].status == "ok");
    CHECK(map[c].trait_id == m.labels[c]);
    CHECK(map[c].aic_ae.has_value());
    err += std::abs(map[c].h2 - expected[c]);
  }
  CHECK(err / 30 < 0.08);

  // Identical columns, a constant column, a flagged column and a missing entry.
  m.values.col(1) = m.values.col(0);
  m.values.col(2).setConstant(3.0);
  m.flagged.assign(m.cols(), false);
  m.flagged[3] = true;
  m.values(0, 4) = std::numeric_limits<double>::quiet_NaN();
  const HeritabilityMap again = heritability_map(m, registry, 1);
  CHECK(again[1].h2 == again[0].h2);
  CHECK(again[2].status == "constant");
  CHECK_FALSE(again[2].model.has_value());
  CHECK(again[3].status == "flagged");
  CHECK(again[4].status == "ok");
  CHECK(again[5].h2 == map[5].h2);

  const auto dir = testing::temp_dir("herit");
  write_heritability_map(dir / "h.csv", again);
  const HeritabilityMap back = read_heritability_map(dir / "h.csv");
  REQUIRE(back.size() == again.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].trait_id == again[i].trait_id);
    CHECK(back[i].status == again[i].status);
    CHECK(back[i].h2 == again[i].h2);
    CHECK(back[i].gof_p == again[i].gof_p);
    CHECK(back[i].aic_e == again[i].aic_e);
  }

  auto bad = registry;
  bad.push_back({"ghost", "px", true, 30.0});
  bad.push_back({"p0_0", "px", true, 30.0});
  try {
    heritability_map(m, bad);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
  }
}

TEST_CASE("registry round trip and ages") {
  const auto dir = testing::temp_dir("registry");
  testing::write_text(dir / "r.csv", "subject_id,pair_id,zygosity,age\na,1,mz,51\nb,1,MZ,51\nc,2,DZ,\n");
  const auto reg = read_registry(dir / "r.csv");
  REQUIRE(reg.size() == 3);
  CHECK(reg[0].mz);
  CHECK_FALSE(reg[2].mz);
  CHECK_FALSE(reg[2].age.has_value());
  write_registry(dir / "s.csv", reg);
  const auto back = read_registry(dir / "s.csv");
  CHECK(back[1].age == 51.0);
  TraitMatrix m;
  m.subject_ids = {"b", "a"};
  CHECK(registry_ages(reg, m) == std::vector<double>{51.0, 51.0});
  m.subject_ids = {"c"};
  CHECK_THROWS_AS(registry_ages(reg, m), Error);
  testing::write_text(dir / "bad.csv", "subject_id,pair_id,zygosity\na,1,XY\n");
  CHECK_THROWS_AS(read_registry(dir / "bad.csv"), Error);
}
