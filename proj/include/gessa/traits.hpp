#pragma once

#include "gessa/sampling.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace gessa {

/// Subjects x traits. Missing entries are NaN.
struct TraitMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> subject_ids;
  std::vector<std::string> labels;
  Eigen::RowVectorXd column_means;  // set by center()
  std::vector<bool> flagged;        // columns excluded downstream

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }

  double missing_fraction(int column) const;
  /// Flags every column whose missing fraction exceeds `max_missing`.
  void flag_missing(double max_missing = 0.05);
  /// Subtracts column means over the observed entries and records them.
  void center();
  void check() const;
};

void write_trait_matrix(const std::filesystem::path& path, const TraitMatrix& m);
TraitMatrix read_trait_matrix(const std::filesystem::path& path);

/// Replaces each column by its residuals from least squares on [1, covariate]
/// over the observed entries. A constant covariate reduces to mean removal.
TraitMatrix residualize_covariate(const TraitMatrix& m, const std::vector<double>& covariate,
                                  bool* constant_covariate = nullptr);

struct SparseComponent {
  Eigen::VectorXd v;  // loadings over traits
  Eigen::VectorXd u;  // scores over subjects
  double d = 0.0;
  double s_p = 0.0;
  double explained = 0.0;  // ||P1 v||^2 / ||P1||_F^2
  int iterations = 0;
  bool zero = false;       // no signal left in the matrix
  std::vector<double> objective;  // u^T P v after each alternation
};

/// Soft threshold of `a` with the smallest Delta >= 0 such that the
/// normalized result has L1 norm at most `s` (bisection to 1e-8).
Eigen::VectorXd soft_threshold_unit(const Eigen::VectorXd& a, double s);

/// Rank-one penalized matrix decomposition: max u^T P v subject to
/// ||u||_2 <= 1, ||v||_2 <= 1, ||v||_1 <= s_p. P must be complete.
SparseComponent pmd_rank_one(const Eigen::MatrixXd& p, double s_p, int max_iters = 1000);

struct SparsePcaResult {
  std::vector<SparseComponent> components;
  std::vector<double> cumulative_explained;
};

/// K components with deflation P <- P - P v v^T.
SparsePcaResult sparse_pca(const Eigen::MatrixXd& p, int k, double s_p, int max_iters = 1000);

/// CSV with columns landmark_id (or trait label), component, weight.
void write_loadings(const std::filesystem::path& path, const SparsePcaResult& result,
                    const std::vector<std::string>& labels);

enum class DistanceMetric { Euclidean, Geodesic };

struct DistanceTraitDef {
  std::string label;
  int first = 0;
  int second = 0;
  DistanceMetric metric = DistanceMetric::Euclidean;
};

/// One column per definition; geodesic failures become missing entries.
TraitMatrix distance_traits(const LandmarkEnsemble& ensemble, const std::vector<DistanceTraitDef>& defs);

/// Parses "label,first,second,metric" lines (metric: euclidean|geodesic or EDT|GDT).
std::vector<DistanceTraitDef> read_distance_defs(const std::filesystem::path& path);

}  // namespace gessa
