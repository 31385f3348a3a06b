#pragma once

// Finite-difference and brute-force references shared by the unit tests and
// the acceptance runner.

#include "gessa/heritability.hpp"
#include "gessa/sampling.hpp"

#include <random>

namespace testing {

/// Log-determinant of (Y^T Y + alpha I) / (N - 1) through the full 3M x 3M matrix.
double full_shape_entropy(const Eigen::MatrixXd& y, double alpha);

struct GradientCheck {
  double surface_error = 0.0;  // ||fd - analytic|| / ||analytic|| over all landmarks
  double shape_error = 0.0;
  double shape_error_y = 0.0;  // single-coordinate perturbation of Y itself
};

/// Random instance: N surfaces (flat squares or icospheres), M landmarks each.
gessa::LandmarkEnsemble random_instance(bool flat, int n, int m, std::mt19937_64& rng);

/// Compares both analytic gradients with central differences. Landmarks are
/// perturbed by +-h (shrunk to stay inside their face) along two tangent directions.
GradientCheck check_gradients(const gessa::LandmarkEnsemble& e, const gessa::KernelBandwidth& bw, double alpha,
                              double h);

/// Coefficient of variation (population SD over mean).
double coefficient_of_variation(const std::vector<double>& v);

/// Nearest-neighbour distances from a full pairwise geodesic matrix.
std::vector<double> brute_force_nearest(const gessa::TriangleMesh& mesh, const std::vector<gessa::SurfacePoint>& pts);

/// Twin pairs from independent latent A, C and E draws with unit total
/// variance. DZ additive factors share half their variance.
gessa::TwinDataset simulate_twins(double a2, double c2, int n_mz, int n_dz, std::mt19937_64& rng);

/// Upper chi-square tail by Simpson integration of the density.
double chi_square_tail_integral(double x, int df);

/// Kolmogorov-Smirnov distance between a sample and the uniform law on [0, 1].
double ks_uniform(std::vector<double> p);

}  // namespace testing
