#include "gessa/heritability.hpp"

#include "gessa/csv.hpp"
#include "gessa/parallel.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>

namespace gessa {

const char* to_string(SemModel model) {
  switch (model) {
    case SemModel::ACE: return "ACE";
    case SemModel::AE: return "AE";
    case SemModel::E: return "E";
  }
  return "?";
}

int parameter_count(SemModel model) {
  switch (model) {
    case SemModel::ACE: return 3;
    case SemModel::AE: return 2;
    case SemModel::E: return 1;
  }
  return 0;
}

namespace {

SemModel model_from_string(const std::string& s) {
  for (auto m : {SemModel::ACE, SemModel::AE, SemModel::E})
    if (s == to_string(m)) return m;
  throw Error("unknown model '" + s + "'");
}

double checked_logdet(const Eigen::Matrix2d& s) {
  const double det = s.determinant();
  const double scale = s.trace() * s.trace();
  if (!(det > 1e-12 * scale) || !(scale > 0.0)) throw Error("singular twin covariance matrix");
  return std::log(det);
}

// Objective over the free coefficients of one model, on standardized data.
struct SemProblem {
  SemModel model;
  Eigen::Matrix2d s_mz, s_dz;
  int n_mz, n_dz;

  std::vector<int> free() const {
    switch (model) {
      case SemModel::ACE: return {0, 1, 2};
      case SemModel::AE: return {0, 2};
      case SemModel::E: return {2};
    }
    return {};
  }

  // Value and gradient with respect to the variances (a^2, c^2, e^2). Infinite
  // outside the positive definite cone.
  double eval(const Eigen::Vector3d& v, Eigen::Vector3d* grad) const {
    const Eigen::Vector3d x = v.cwiseMax(0.0).cwiseSqrt();
    const Eigen::Matrix2d sm = implied_mz(x[0], x[1], x[2]), sd = implied_dz(x[0], x[1], x[2]);
    const double det_m = sm.determinant(), det_d = sd.determinant();
    if (!(det_m > 0.0) || !(det_d > 0.0)) return kInf;
    const Eigen::Matrix2d im = sm.inverse(), id = sd.inverse();
    const double f = n_mz * (std::log(det_m) + (im * s_mz).trace()) + n_dz * (std::log(det_d) + (id * s_dz).trace());
    if (grad) {
      // d/dSigma of N[ln|Sigma| + tr(Sigma^-1 S)] is N (Sigma^-1 - Sigma^-1 S Sigma^-1).
      const Eigen::Matrix2d gm = n_mz * (im - im * s_mz * im), gd = n_dz * (id - id * s_dz * id);
      const Eigen::Matrix2d ones = Eigen::Matrix2d::Ones();
      Eigen::Matrix2d half;
      half << 1.0, 0.5, 0.5, 1.0;
      const auto dot = [](const Eigen::Matrix2d& p, const Eigen::Matrix2d& q) { return (p.array() * q.array()).sum(); };
      (*grad)[0] = dot(gm, ones) + dot(gd, half);
      (*grad)[1] = dot(gm, ones) + dot(gd, ones);
      (*grad)[2] = gm.trace() + gd.trace();
    }
    return f;
  }
};

struct Minimum {
  Eigen::Vector3d x = Eigen::Vector3d::Zero();
  double f = kInf;
  bool converged = false;
  int iterations = 0;
};

// Projected BFGS on the box x >= lower over the free coordinates.
Minimum projected_bfgs(const SemProblem& prob, Eigen::Vector3d x, const Eigen::Vector3d& lower) {
  const std::vector<int> idx = prob.free();
  const int p = static_cast<int>(idx.size());
  // Near the optimum the objective's rounding error is about 1e-13 N; this
  // gradient level is the smallest one a line search can still act on.
  const double gtol = 1e-6 * (prob.n_mz + prob.n_dz);
  auto project = [&](Eigen::Vector3d v) {
    for (int i : idx) v[i] = std::max(v[i], lower[i]);
    return v;
  };
  auto reduce = [&](const Eigen::Vector3d& v) {
    Eigen::VectorXd r(p);
    for (int i = 0; i < p; ++i) r[i] = v[idx[i]];
    return r;
  };

  Minimum out;
  x = project(x);
  Eigen::Vector3d g;
  double f = prob.eval(x, &g);
  if (!std::isfinite(f)) return out;
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(p, p);
  bool fresh = true;
  int it = 0;
  for (; it < 500; ++it) {
    const Eigen::VectorXd gr = reduce(g), xr = reduce(x);
    std::vector<bool> active(p);
    Eigen::VectorXd pg = gr;
    for (int i = 0; i < p; ++i) {
      active[i] = xr[i] <= lower[idx[i]] && gr[i] > 0.0;
      if (active[i]) pg[i] = 0.0;
    }
    if (pg.lpNorm<Eigen::Infinity>() <= gtol) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd d = -h * pg;
    for (int i = 0; i < p; ++i)
      if (active[i]) d[i] = 0.0;
    if (pg.dot(d) >= 0.0) {
      h.setIdentity();
      d = -pg;
      fresh = true;
    }
    double t = 1.0, fn = kInf;
    Eigen::Vector3d xn, gn;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      Eigen::Vector3d trial = x;
      for (int i = 0; i < p; ++i) trial[idx[i]] += t * d[i];
      xn = project(trial);
      if (xn == x) break;
      fn = prob.eval(xn, &gn);
      if (fn <= f + 1e-4 * gr.dot(reduce(xn) - xr)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (fresh) {
        // No descent left at machine precision; accept if nearly stationary.
        out.converged = pg.lpNorm<Eigen::Infinity>() <= 10.0 * gtol;
        break;
      }
      h.setIdentity();
      fresh = true;
      continue;
    }
    const Eigen::VectorXd s = reduce(xn) - xr, y = reduce(gn) - gr;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(p, p);
      if (fresh) h = eye * (sy / y.squaredNorm());
      h = (eye - rho * s * y.transpose()) * h * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
      fresh = false;
    } else {
      // Negative curvature along the step: the old inverse Hessian is stale.
      h.setIdentity();
      fresh = true;
    }
    x = xn;
    f = fn;
    g = gn;
  }
  out.x = x;
  out.f = f;
  out.iterations = it;
  return out;
}

}  // namespace

void TwinDataset::check() const {
  if (n_mz() < 2 || n_dz() < 2) throw Error("twin dataset needs at least 2 MZ and 2 DZ pairs");
  if (!mz.allFinite() || !dz.allFinite()) throw Error("twin dataset contains missing values");
}

Eigen::Matrix2d group_covariance(const Eigen::MatrixX2d& pairs) {
  const auto n = pairs.rows();
  if (n < 2) throw Error("covariance needs at least 2 pairs");
  const Eigen::MatrixX2d c = pairs.rowwise() - pairs.colwise().mean();
  return (c.transpose() * c) / static_cast<double>(n - 1);
}

Eigen::Matrix2d exchange_symmetric(const Eigen::Matrix2d& s) {
  Eigen::Matrix2d out;
  out(0, 0) = out(1, 1) = 0.5 * (s(0, 0) + s(1, 1));
  out(0, 1) = out(1, 0) = 0.5 * (s(0, 1) + s(1, 0));
  return out;
}

Eigen::Matrix2d implied_mz(double a, double c, double e) {
  const double shared = a * a + c * c;
  Eigen::Matrix2d s;
  s << shared + e * e, shared, shared, shared + e * e;
  return s;
}

Eigen::Matrix2d implied_dz(double a, double c, double e) {
  const double shared = 0.5 * a * a + c * c;
  Eigen::Matrix2d s;
  s << a * a + c * c + e * e, shared, shared, a * a + c * c + e * e;
  return s;
}

double minus_two_log_likelihood(const Eigen::Matrix2d& sigma_mz, const Eigen::Matrix2d& s_mz, int n_mz,
                                const Eigen::Matrix2d& sigma_dz, const Eigen::Matrix2d& s_dz, int n_dz) {
  const double det_m = sigma_mz.determinant(), det_d = sigma_dz.determinant();
  if (!(det_m > 0.0) || !(det_d > 0.0)) throw Error("implied covariance is not positive definite");
  return n_mz * (std::log(det_m) + (sigma_mz.inverse() * s_mz).trace()) +
         n_dz * (std::log(det_d) + (sigma_dz.inverse() * s_dz).trace());
}

SemFit fit_sem(const TwinDataset& data, SemModel model) {
  data.check();
  const Eigen::Matrix2d s_mz = exchange_symmetric(group_covariance(data.mz));
  const Eigen::Matrix2d s_dz = exchange_symmetric(group_covariance(data.dz));
  checked_logdet(group_covariance(data.mz));
  checked_logdet(group_covariance(data.dz));

  // Fit in units of the pooled phenotype SD so the tolerances are scale free.
  const double sd = std::sqrt(0.5 * (s_mz(0, 0) + s_dz(0, 0)));
  SemProblem prob{model, s_mz / (sd * sd), s_dz / (sd * sd), data.n_mz(), data.n_dz()};
  // Optimized over variances; e >= 1e-6 SD becomes e^2 >= 1e-12.
  const Eigen::Vector3d lower(0.0, 0.0, 1e-12);

  Minimum best;
  const double starts[3][3] = {{0.5, 0.3, 0.8}, {0.3, 0.8, 0.5}, {0.8, 0.5, 0.3}};
  for (const auto& st : starts) {
    Eigen::Vector3d x(st[0] * st[0], st[1] * st[1], st[2] * st[2]);
    if (model != SemModel::ACE) x[1] = 0.0;
    if (model == SemModel::E) x[0] = 0.0;
    const Minimum m = projected_bfgs(prob, x, lower);
    if (m.f < best.f || (m.converged && !best.converged && m.f <= best.f + 1e-9 * std::abs(best.f))) best = m;
  }

  SemFit fit;
  fit.model = model;
  fit.k = parameter_count(model);
  fit.converged = best.converged;
  fit.iterations = best.iterations;
  if (!std::isfinite(best.f)) {
    fit.converged = false;
    fit.minus2ll = kInf;
    fit.aic = kInf;
    return fit;
  }
  fit.a = std::sqrt(best.x[0]) * sd;
  fit.c = std::sqrt(best.x[1]) * sd;
  fit.e = std::sqrt(best.x[2]) * sd;
  fit.sigma_mz = implied_mz(fit.a, fit.c, fit.e);
  fit.sigma_dz = implied_dz(fit.a, fit.c, fit.e);
  fit.minus2ll = minus_two_log_likelihood(fit.sigma_mz, s_mz, data.n_mz(), fit.sigma_dz, s_dz, data.n_dz());
  fit.aic = fit.minus2ll + 2.0 * fit.k;
  return fit;
}

SaturatedFit fit_saturated(const TwinDataset& data) {
  data.check();
  const Eigen::Matrix2d s_mz = group_covariance(data.mz), s_dz = group_covariance(data.dz);
  SaturatedFit out;
  out.minus2ll = data.n_mz() * (checked_logdet(s_mz) + 2.0) + data.n_dz() * (checked_logdet(s_dz) + 2.0);
  out.df = 6;
  return out;
}

double chi_square_p(double chi2, int df) {
  if (df <= 0) throw Error("chi-square needs positive degrees of freedom");
  if (chi2 <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), chi2));
}

GoodnessOfFit goodness_of_fit(const SemFit& fit, const SaturatedFit& saturated) {
  GoodnessOfFit g;
  g.chi2 = fit.minus2ll - saturated.minus2ll;
  if (g.chi2 < -1e-6) throw Error("structured fit beats the saturated model; optimizer failure");
  g.chi2 = std::max(g.chi2, 0.0);
  g.df = saturated.df - fit.k;
  g.p = chi_square_p(g.chi2, g.df);
  return g;
}

const SemFit& select_model(const std::vector<SemFit>& fits) {
  const SemFit* best = nullptr;
  std::vector<const SemFit*> order;
  for (const auto& f : fits)
    if (f.converged) order.push_back(&f);
  std::stable_sort(order.begin(), order.end(), [](const SemFit* x, const SemFit* y) { return x->k < y->k; });
  for (const SemFit* f : order) {
    const double tol = 1e-9 * std::max(1.0, std::abs(f->aic));
    if (!best || f->aic < best->aic - tol) best = f;
  }
  if (!best) throw Error("no converged model");
  return *best;
}

std::vector<TwinRecord> read_registry(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const int cs = t.column("subject_id"), cp = t.column("pair_id"), cz = t.column("zygosity");
  int ca = -1;
  for (size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i] == "age") ca = static_cast<int>(i);
  std::vector<TwinRecord> out;
  for (const auto& row : t.rows) {
    TwinRecord r;
    r.subject_id = row[cs];
    r.pair_id = row[cp];
    std::string z = row[cz];
    std::transform(z.begin(), z.end(), z.begin(), [](unsigned char ch) { return std::toupper(ch); });
    if (z != "MZ" && z != "DZ") throw Error("registry subject '" + r.subject_id + "': zygosity must be MZ or DZ");
    r.mz = z == "MZ";
    if (ca >= 0) r.age = csv::parse_optional(row[ca]);
    out.push_back(r);
  }
  return out;
}

void write_registry(const std::filesystem::path& path, const std::vector<TwinRecord>& registry) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "subject_id,pair_id,zygosity,age\n";
  for (const auto& r : registry)
    out << csv::join({r.subject_id, r.pair_id, r.mz ? "MZ" : "DZ", csv::format_optional(r.age)}) << '\n';
}

std::vector<double> registry_ages(const std::vector<TwinRecord>& registry, const TraitMatrix& m) {
  std::unordered_map<std::string, const TwinRecord*> by_id;
  for (const auto& r : registry) by_id[r.subject_id] = &r;
  std::vector<double> ages;
  for (const auto& id : m.subject_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end() || !it->second->age) throw Error("no age for subject '" + id + "'");
    ages.push_back(*it->second->age);
  }
  return ages;
}

namespace {

struct Pair {
  std::string id;
  bool mz;
  int rows[2];
};

std::vector<Pair> build_pairs(const TraitMatrix& traits, const std::vector<TwinRecord>& registry) {
  std::unordered_map<std::string, int> row_of;
  for (int r = 0; r < traits.rows(); ++r) row_of[traits.subject_ids[r]] = r;
  std::vector<Pair> pairs;
  std::map<std::string, std::vector<const TwinRecord*>> members;
  std::vector<std::string> order;
  for (const auto& rec : registry) {
    if (!row_of.count(rec.subject_id)) throw Error("registry subject '" + rec.subject_id + "' not found in trait matrix");
    auto& list = members[rec.pair_id];
    if (list.empty()) order.push_back(rec.pair_id);
    list.push_back(&rec);
  }
  for (const auto& id : order) {
    const auto& list = members[id];
    if (list.size() != 2) throw Error("pair '" + id + "' has " + std::to_string(list.size()) + " members, expected 2");
    if (list[0]->mz != list[1]->mz) throw Error("pair '" + id + "' has mixed zygosity");
    pairs.push_back({id, list[0]->mz, {row_of[list[0]->subject_id], row_of[list[1]->subject_id]}});
  }
  return pairs;
}

TwinDataset assemble(const TraitMatrix& traits, int column, const std::vector<Pair>& pairs) {
  std::vector<std::array<double, 2>> mz, dz;
  TwinDataset d;
  for (const auto& p : pairs) {
    const double x = traits.values(p.rows[0], column), y = traits.values(p.rows[1], column);
    if (std::isnan(x) || std::isnan(y)) continue;
    (p.mz ? mz : dz).push_back({x, y});
    (p.mz ? d.mz_ids : d.dz_ids).push_back(p.id);
  }
  d.mz.resize(static_cast<Eigen::Index>(mz.size()), 2);
  d.dz.resize(static_cast<Eigen::Index>(dz.size()), 2);
  for (size_t i = 0; i < mz.size(); ++i) d.mz.row(static_cast<Eigen::Index>(i)) << mz[i][0], mz[i][1];
  for (size_t i = 0; i < dz.size(); ++i) d.dz.row(static_cast<Eigen::Index>(i)) << dz[i][0], dz[i][1];
  return d;
}

HeritabilityRecord analyze(const std::string& label, const TwinDataset& d) {
  HeritabilityRecord rec;
  rec.trait_id = label;
  if (d.n_mz() < 2 || d.n_dz() < 2) {
    rec.status = "too_few_pairs";
    return rec;
  }
  const double lo = std::min(d.mz.minCoeff(), d.dz.minCoeff()), hi = std::max(d.mz.maxCoeff(), d.dz.maxCoeff());
  if (!(hi > lo)) {
    rec.status = "constant";
    return rec;
  }
  try {
    std::vector<SemFit> fits;
    for (auto m : {SemModel::ACE, SemModel::AE, SemModel::E}) fits.push_back(fit_sem(d, m));
    if (fits[0].converged) rec.aic_ace = fits[0].aic;
    if (fits[1].converged) rec.aic_ae = fits[1].aic;
    if (fits[2].converged) rec.aic_e = fits[2].aic;
    if (!fits[0].converged && !fits[1].converged && !fits[2].converged) {
      rec.status = "not_converged";
      return rec;
    }
    const SemFit& chosen = select_model(fits);
    const GoodnessOfFit g = goodness_of_fit(chosen, fit_saturated(d));
    rec.model = chosen.model;
    rec.a2 = chosen.a2();
    rec.c2 = chosen.c2();
    rec.e2 = chosen.e2();
    rec.h2 = chosen.h2();
    rec.gof_chi2 = g.chi2;
    rec.gof_df = g.df;
    rec.gof_p = g.p;
  } catch (const Error& e) {
    rec.status = std::string("error: ") + e.what();
  }
  return rec;
}

}  // namespace

TwinDataset assemble_twins(const TraitMatrix& traits, int column, const std::vector<TwinRecord>& registry) {
  return assemble(traits, column, build_pairs(traits, registry));
}

HeritabilityMap heritability_map(const TraitMatrix& traits, const std::vector<TwinRecord>& registry, int threads) {
  traits.check();
  const std::vector<Pair> pairs = build_pairs(traits, registry);
  HeritabilityMap out(static_cast<size_t>(traits.cols()));
  parallel_for(traits.cols(), threads, [&](int c, int) {
    if (!traits.flagged.empty() && traits.flagged[c]) {
      out[c].trait_id = traits.labels[c];
      out[c].status = "flagged";
      return;
    }
    out[c] = analyze(traits.labels[c], assemble(traits, c, pairs));
  });
  return out;
}

void write_heritability_map(const std::filesystem::path& path, const HeritabilityMap& map) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "trait_id,model,a2,c2,e2,h2,gof_chi2,gof_df,gof_p,aic_ace,aic_ae,aic_e,status\n";
  for (const auto& r : map) {
    std::vector<std::string> row{r.trait_id, r.model ? to_string(*r.model) : ""};
    if (r.model) {
      for (double v : {r.a2, r.c2, r.e2, r.h2, r.gof_chi2}) row.push_back(csv::format_double(v));
      row.push_back(std::to_string(r.gof_df));
      row.push_back(csv::format_double(r.gof_p));
    } else {
      row.insert(row.end(), 7, "");
    }
    for (const auto& a : {r.aic_ace, r.aic_ae, r.aic_e}) row.push_back(csv::format_optional(a));
    row.push_back(r.status);
    out << csv::join(row) << '\n';
  }
}

HeritabilityMap read_heritability_map(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  HeritabilityMap out;
  for (const auto& row : t.rows) {
    HeritabilityRecord r;
    r.trait_id = row[t.column("trait_id")];
    r.status = row[t.column("status")];
    const std::string model = row[t.column("model")];
    if (!model.empty()) {
      r.model = model_from_string(model);
      r.a2 = csv::parse_double(row[t.column("a2")]);
      r.c2 = csv::parse_double(row[t.column("c2")]);
      r.e2 = csv::parse_double(row[t.column("e2")]);
      r.h2 = csv::parse_double(row[t.column("h2")]);
      r.gof_chi2 = csv::parse_double(row[t.column("gof_chi2")]);
      r.gof_df = csv::parse_int(row[t.column("gof_df")]);
      r.gof_p = csv::parse_double(row[t.column("gof_p")]);
    }
    r.aic_ace = csv::parse_optional(row[t.column("aic_ace")]);
    r.aic_ae = csv::parse_optional(row[t.column("aic_ae")]);
    r.aic_e = csv::parse_optional(row[t.column("aic_e")]);
    out.push_back(r);
  }
  return out;
}

}  // namespace gessa
