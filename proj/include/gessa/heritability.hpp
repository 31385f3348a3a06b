#pragma once

#include "gessa/traits.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gessa {

enum class SemModel { ACE, AE, E };

const char* to_string(SemModel model);
int parameter_count(SemModel model);

/// Phenotype pairs per zygosity, one row per pair.
struct TwinDataset {
  Eigen::MatrixX2d mz;
  Eigen::MatrixX2d dz;
  std::vector<std::string> mz_ids;
  std::vector<std::string> dz_ids;

  int n_mz() const { return static_cast<int>(mz.rows()); }
  int n_dz() const { return static_cast<int>(dz.rows()); }
  void check() const;
};

/// Unbiased 2x2 sample covariance of the two columns.
Eigen::Matrix2d group_covariance(const Eigen::MatrixX2d& pairs);

/// Average of S and its twin-swapped counterpart. Identical to double entry
/// of every pair with per-column means, and invariant to within-pair order.
Eigen::Matrix2d exchange_symmetric(const Eigen::Matrix2d& s);

struct SemFit {
  SemModel model = SemModel::AE;
  double a = 0.0, c = 0.0, e = 0.0;  // phenotype units
  Eigen::Matrix2d sigma_mz = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d sigma_dz = Eigen::Matrix2d::Zero();
  double minus2ll = 0.0;
  int k = 0;
  double aic = 0.0;
  bool converged = false;
  int iterations = 0;
  // Filled by goodness_of_fit.
  double gof_chi2 = 0.0;
  int gof_df = 0;
  double gof_p = 1.0;

  double variance() const { return a * a + c * c + e * e; }
  double a2() const { return a * a / variance(); }
  double c2() const { return c * c / variance(); }
  double e2() const { return e * e / variance(); }
  double h2() const { return model == SemModel::E ? 0.0 : a2(); }
};

/// Structured covariances for given path coefficients.
Eigen::Matrix2d implied_mz(double a, double c, double e);
Eigen::Matrix2d implied_dz(double a, double c, double e);

/// Sum over groups of N_g [ln|Sigma_g| + tr(Sigma_g^-1 S_g)].
double minus_two_log_likelihood(const Eigen::Matrix2d& sigma_mz, const Eigen::Matrix2d& s_mz, int n_mz,
                                const Eigen::Matrix2d& sigma_dz, const Eigen::Matrix2d& s_dz, int n_dz);

/// Bound-constrained maximum likelihood with three deterministic starts.
SemFit fit_sem(const TwinDataset& data, SemModel model);

struct SaturatedFit {
  double minus2ll = 0.0;
  int df = 6;
};

SaturatedFit fit_saturated(const TwinDataset& data);

struct GoodnessOfFit {
  double chi2 = 0.0;
  int df = 0;
  double p = 1.0;
};

/// Upper-tail chi-square probability; 1 at chi2 <= 0.
double chi_square_p(double chi2, int df);

/// Likelihood ratio against the saturated model. Throws when the statistic
/// is below -1e-6, which means the structured fit beat its own optimum.
GoodnessOfFit goodness_of_fit(const SemFit& fit, const SaturatedFit& saturated);

/// Minimum AIC among converged fits, ties toward fewer parameters. Throws if
/// none converged.
const SemFit& select_model(const std::vector<SemFit>& fits);

struct TwinRecord {
  std::string subject_id;
  std::string pair_id;
  bool mz = false;
  std::optional<double> age;
};

std::vector<TwinRecord> read_registry(const std::filesystem::path& path);
void write_registry(const std::filesystem::path& path, const std::vector<TwinRecord>& registry);

/// Per-subject ages in the row order of `m`; throws if a subject lacks one.
std::vector<double> registry_ages(const std::vector<TwinRecord>& registry, const TraitMatrix& m);

/// Pairs the rows of one trait column. Pairs with a missing value are dropped.
TwinDataset assemble_twins(const TraitMatrix& traits, int column, const std::vector<TwinRecord>& registry);

struct HeritabilityRecord {
  std::string trait_id;
  std::string status = "ok";  // ok, flagged, constant, too_few_pairs, not_converged, error: ...
  std::optional<SemModel> model;
  double a2 = 0.0, c2 = 0.0, e2 = 0.0, h2 = 0.0;
  double gof_chi2 = 0.0;
  int gof_df = 0;
  double gof_p = 1.0;
  std::optional<double> aic_ace, aic_ae, aic_e;
};

using HeritabilityMap = std::vector<HeritabilityRecord>;

/// One record per column. Failures are recorded in `status` and never abort
/// the batch. Throws only when the registry names a subject absent from
/// the trait matrix.
HeritabilityMap heritability_map(const TraitMatrix& traits, const std::vector<TwinRecord>& registry, int threads = 0);

void write_heritability_map(const std::filesystem::path& path, const HeritabilityMap& map);
HeritabilityMap read_heritability_map(const std::filesystem::path& path);

}  // namespace gessa
