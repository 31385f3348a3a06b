#include "gessa/traits.hpp"

#include "gessa/csv.hpp"
#include "gessa/geodesic.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <limits>
#include <map>

namespace gessa {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double l1_of_unit(const Eigen::VectorXd& v) {
  const double n = v.norm();
  return n > 0.0 ? v.lpNorm<1>() / n : 0.0;
}

Eigen::VectorXd soft(const Eigen::VectorXd& a, double delta) {
  return a.unaryExpr([delta](double x) { return std::copysign(std::max(std::abs(x) - delta, 0.0), x); });
}

// Alternating maximization from a starting v.
SparseComponent alternate(const Eigen::MatrixXd& p, double s_p, Eigen::VectorXd v, int max_iters) {
  SparseComponent c;
  c.s_p = s_p;
  double last = -kInf;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd u = p * v;
    const double un = u.norm();
    if (un == 0.0) break;
    u /= un;
    const Eigen::VectorXd nv = soft_threshold_unit(p.transpose() * u, s_p);
    if (nv.norm() == 0.0) break;
    v = nv;
    c.u = p * v;
    const double d = u.dot(c.u);
    c.u = u;
    c.v = v;
    c.d = d;
    c.objective.push_back(d);
    c.iterations = it + 1;
    if (std::abs(d - last) <= 1e-7 * std::max(std::abs(d), 1e-300)) break;
    last = d;
  }
  return c;
}

}  // namespace

double TraitMatrix::missing_fraction(int column) const {
  if (rows() == 0) return 0.0;
  int missing = 0;
  for (int r = 0; r < rows(); ++r) missing += std::isnan(values(r, column));
  return static_cast<double>(missing) / rows();
}

void TraitMatrix::flag_missing(double max_missing) {
  flagged.assign(cols(), false);
  for (int c = 0; c < cols(); ++c) flagged[c] = missing_fraction(c) > max_missing;
}

void TraitMatrix::center() {
  column_means = Eigen::RowVectorXd::Zero(cols());
  for (int c = 0; c < cols(); ++c) {
    double sum = 0.0;
    int count = 0;
    for (int r = 0; r < rows(); ++r)
      if (!std::isnan(values(r, c))) {
        sum += values(r, c);
        ++count;
      }
    const double mean = count > 0 ? sum / count : 0.0;
    column_means[c] = mean;
    for (int r = 0; r < rows(); ++r) values(r, c) -= mean;
  }
}

void TraitMatrix::check() const {
  if (static_cast<int>(subject_ids.size()) != rows()) throw Error("trait matrix: subject ids do not match rows");
  if (static_cast<int>(labels.size()) != cols()) throw Error("trait matrix: labels do not match columns");
  if (!flagged.empty() && static_cast<int>(flagged.size()) != cols()) throw Error("trait matrix: flag count mismatch");
}

void write_trait_matrix(const std::filesystem::path& path, const TraitMatrix& m) {
  m.check();
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  std::vector<std::string> header{"subject_id"};
  header.insert(header.end(), m.labels.begin(), m.labels.end());
  out << csv::join(header) << '\n';
  for (int r = 0; r < m.rows(); ++r) {
    std::vector<std::string> row{m.subject_ids[r]};
    for (int c = 0; c < m.cols(); ++c)
      row.push_back(std::isnan(m.values(r, c)) ? std::string() : csv::format_double(m.values(r, c)));
    out << csv::join(row) << '\n';
  }
}

TraitMatrix read_trait_matrix(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  if (t.header.empty() || t.header[0] != "subject_id") throw Error("trait matrix '" + path.string() + "' must start with subject_id");
  TraitMatrix m;
  m.labels.assign(t.header.begin() + 1, t.header.end());
  m.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(m.labels.size()));
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != t.header.size()) throw Error("trait matrix row " + std::to_string(r + 1) + " has the wrong width");
    m.subject_ids.push_back(row[0]);
    for (size_t c = 1; c < row.size(); ++c) {
      const auto v = csv::parse_optional(row[c]);
      m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - 1)) = v ? *v : kNaN;
    }
  }
  m.flag_missing(0.05);
  return m;
}

TraitMatrix residualize_covariate(const TraitMatrix& m, const std::vector<double>& covariate, bool* constant_covariate) {
  if (static_cast<int>(covariate.size()) != m.rows()) throw Error("covariate length does not match subjects");
  for (double c : covariate)
    if (!std::isfinite(c)) throw Error("covariate must be known for all subjects");
  TraitMatrix out = m;
  bool constant = true;
  for (int c = 0; c < m.cols(); ++c) {
    std::vector<int> rows;
    for (int r = 0; r < m.rows(); ++r)
      if (!std::isnan(m.values(r, c))) rows.push_back(r);
    if (rows.empty()) continue;
    double mx = 0.0, my = 0.0;
    for (int r : rows) {
      mx += covariate[r];
      my += m.values(r, c);
    }
    mx /= rows.size();
    my /= rows.size();
    double sxx = 0.0, sxy = 0.0, scale = 0.0;
    for (int r : rows) {
      sxx += (covariate[r] - mx) * (covariate[r] - mx);
      sxy += (covariate[r] - mx) * (m.values(r, c) - my);
      scale = std::max(scale, std::abs(covariate[r]));
    }
    const bool flat = sxx <= 1e-24 * std::max(scale * scale, 1e-300) * rows.size();
    if (!flat) constant = false;
    const double beta = flat ? 0.0 : sxy / sxx;
    for (int r : rows) out.values(r, c) = (m.values(r, c) - my) - beta * (covariate[r] - mx);
  }
  if (constant_covariate) *constant_covariate = constant && m.cols() > 0;
  return out;
}

Eigen::VectorXd soft_threshold_unit(const Eigen::VectorXd& a, double s) {
  if (a.norm() == 0.0) return Eigen::VectorXd::Zero(a.size());
  if (l1_of_unit(a) <= s) return a / a.norm();
  double lo = 0.0, hi = a.cwiseAbs().maxCoeff();
  // hi leaves only the largest entries, whose unit L1 norm is 1 <= s.
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const Eigen::VectorXd t = soft(a, mid);
    if (t.norm() > 0.0 && l1_of_unit(t) > s) {
      lo = mid;
    } else {
      hi = mid;
    }
    const Eigen::VectorXd th = soft(a, hi);
    if (th.norm() > 0.0 && s - l1_of_unit(th) <= 1e-8) break;
  }
  Eigen::VectorXd t = soft(a, hi);
  if (t.norm() == 0.0) {
    // Ties at the maximum; keep them all.
    t = soft(a, lo);
  }
  return t / t.norm();
}

SparseComponent pmd_rank_one(const Eigen::MatrixXd& p, double s_p, int max_iters) {
  if (p.cols() == 0 || p.rows() == 0) throw Error("pmd_rank_one: empty matrix");
  if (!p.allFinite()) throw Error("pmd_rank_one: matrix has missing entries");
  const double root_m = std::sqrt(static_cast<double>(p.cols()));
  if (s_p < 1.0 - 1e-12 || s_p > root_m + 1e-9) throw Error("pmd_rank_one: s_p must lie in [1, sqrt(columns)]");
  SparseComponent best;
  best.s_p = s_p;
  if (p.norm() == 0.0) {
    best.zero = true;
    best.v = Eigen::VectorXd::Zero(p.cols());
    best.u = Eigen::VectorXd::Zero(p.rows());
    return best;
  }

  int top = 0;
  p.colwise().norm().maxCoeff(&top);
  if (s_p <= 1.0) {
    // The feasible set's extreme points with unit 2-norm are the signed axes.
    best.v = Eigen::VectorXd::Zero(p.cols());
    best.v[top] = 1.0;
    best.u = p.col(top) / p.col(top).norm();
    best.d = p.col(top).norm();
    best.objective.push_back(best.d);
    best.iterations = 1;
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(p, Eigen::ComputeThinV);
    std::vector<Eigen::VectorXd> starts{svd.matrixV().col(0), Eigen::VectorXd::Unit(p.cols(), top)};
    bool first = true;
    for (const auto& v0 : starts) {
      SparseComponent c = alternate(p, s_p, v0, max_iters);
      if (c.v.size() == 0) continue;
      if (first || c.d > best.d) best = c;
      first = false;
    }
    if (first) {
      best.zero = true;
      best.v = Eigen::VectorXd::Zero(p.cols());
      best.u = Eigen::VectorXd::Zero(p.rows());
      return best;
    }
  }
  Eigen::Index arg = 0;
  best.v.cwiseAbs().maxCoeff(&arg);
  if (best.v[arg] < 0.0) {
    best.v = -best.v;
    best.u = -best.u;
  }
  return best;
}

SparsePcaResult sparse_pca(const Eigen::MatrixXd& p, int k, double s_p, int max_iters) {
  if (k < 1 || k > std::min(p.rows(), p.cols())) throw Error("sparse_pca: K must be between 1 and min(rows, columns)");
  SparsePcaResult out;
  const double total = p.squaredNorm();
  Eigen::MatrixXd current = p;
  Eigen::MatrixXd basis(p.cols(), 0);
  for (int i = 0; i < k; ++i) {
    SparseComponent c = pmd_rank_one(current, s_p, max_iters);
    c.explained = total > 0.0 ? (p * c.v).squaredNorm() / total : 0.0;
    if (!c.zero) {
      current -= (current * c.v) * c.v.transpose();
      basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
      basis.col(basis.cols() - 1) = c.v;
    }
    // Loadings are not orthogonal; the cumulative share uses the projection
    // onto their span so it never exceeds one.
    double cumulative = 0.0;
    if (basis.cols() > 0 && total > 0.0) {
      const Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
      const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(basis.rows(), basis.cols());
      cumulative = (p * q).squaredNorm() / total;
    }
    out.cumulative_explained.push_back(cumulative);
    out.components.push_back(std::move(c));
  }
  return out;
}

void write_loadings(const std::filesystem::path& path, const SparsePcaResult& result,
                    const std::vector<std::string>& labels) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "landmark_id,component,weight\n";
  for (size_t c = 0; c < result.components.size(); ++c) {
    const auto& v = result.components[c].v;
    if (static_cast<size_t>(v.size()) != labels.size()) throw Error("loadings and labels differ in length");
    for (int i = 0; i < v.size(); ++i)
      out << csv::join({labels[i], std::to_string(c + 1), csv::format_double(v[i])}) << '\n';
  }
}

TraitMatrix distance_traits(const LandmarkEnsemble& ensemble, const std::vector<DistanceTraitDef>& defs) {
  const int n = ensemble.num_surfaces(), m = ensemble.num_landmarks();
  for (const auto& d : defs)
    if (d.first == d.second || d.first < 0 || d.second < 0 || d.first >= m || d.second >= m)
      throw Error("distance trait '" + d.label + "' has invalid landmark indices");
  TraitMatrix out;
  out.values = Eigen::MatrixXd::Constant(n, static_cast<Eigen::Index>(defs.size()), kNaN);
  out.subject_ids = ensemble.meshes.ids;
  for (const auto& d : defs) out.labels.push_back(d.label);
  for (int j = 0; j < n; ++j) {
    const TriangleMesh& mesh = ensemble.meshes[j];
    GeodesicEngine engine(mesh);
    int propagated = -1;
    for (size_t c = 0; c < defs.size(); ++c) {
      const SurfacePoint& a = ensemble.landmarks[j][defs[c].first];
      const SurfacePoint& b = ensemble.landmarks[j][defs[c].second];
      if (defs[c].metric == DistanceMetric::Euclidean) {
        out.values(j, static_cast<Eigen::Index>(c)) = (a.position - b.position).norm();
        continue;
      }
      if (mesh.component(a.face) != mesh.component(b.face)) continue;
      if (propagated != defs[c].first) {
        engine.propagate(a);
        propagated = defs[c].first;
      }
      const double d = engine.distance(b);
      if (std::isfinite(d)) out.values(j, static_cast<Eigen::Index>(c)) = d;
    }
  }
  out.flag_missing(0.05);
  return out;
}

std::vector<DistanceTraitDef> read_distance_defs(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const int cl = t.column("label"), ca = t.column("first"), cb = t.column("second"), cm = t.column("metric");
  std::vector<DistanceTraitDef> out;
  for (const auto& row : t.rows) {
    DistanceTraitDef d;
    d.label = row[cl];
    d.first = csv::parse_int(row[ca]);
    d.second = csv::parse_int(row[cb]);
    const std::string& metric = row[cm];
    if (metric == "euclidean" || metric == "EDT") {
      d.metric = DistanceMetric::Euclidean;
    } else if (metric == "geodesic" || metric == "GDT") {
      d.metric = DistanceMetric::Geodesic;
    } else {
      throw Error("unknown distance metric '" + metric + "'");
    }
    out.push_back(d);
  }
  return out;
}

}  // namespace gessa
