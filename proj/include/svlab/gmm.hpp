// Ex-post latent density estimation: EM-fitted Gaussian mixtures, mixture
// sampling, and collapsed-variable diagnostics.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace svlab {

enum class CovarianceKind { full, diagonal };

struct GaussianMixture {
  CovarianceKind kind = CovarianceKind::full;
  Eigen::VectorXd weights;                    // [n], simplex
  Eigen::MatrixXd means;                      // [n,k]
  std::vector<Eigen::MatrixXd> covariances;   // n matrices of [k,k]

  int n_components() const { return static_cast<int>(weights.size()); }
  int dims() const { return static_cast<int>(means.cols()); }
};

struct GmmFitOptions {
  int max_iters = 200;
  double tol = 1e-6;           // stop when mean log-likelihood gain drops below
  CovarianceKind kind = CovarianceKind::full;
  double eigen_floor = 1e-6;   // covariance eigenvalue floor
};

// EM with k-means++-style seeding. Asserts that the total log-likelihood
// never decreases between iterations. Components left with fewer than two
// responsible points keep a floored covariance and emit a warning.
GaussianMixture fit_gmm(const Eigen::MatrixXd& points, int n_components,
                        const GmmFitOptions& options, uint64_t seed);

// Total log-likelihood of the points under the mixture.
double gmm_log_likelihood(const GaussianMixture& gmm, const Eigen::MatrixXd& points);

// Component chosen by weight, then a Gaussian draw through the Cholesky
// factor; deterministic per seed.
Eigen::MatrixXd sample_gmm(const GaussianMixture& gmm, int count, uint64_t seed);

struct ActiveUnitsReport {
  int count_active = 0;
  std::vector<bool> collapsed;  // one flag per latent unit
};

// A unit is collapsed when its dataset-averaged KL falls below the
// threshold (default 0.01 nats).
ActiveUnitsReport active_units(const std::vector<double>& per_unit_kl, double threshold = 0.01);

}  // namespace svlab
