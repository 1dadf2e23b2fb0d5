#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "svlab/gmm.hpp"
#include "svlab/rng.hpp"

using namespace svlab;

namespace {

Eigen::MatrixXd gaussian_blob(int count, const Eigen::VectorXd& mean, double sigma, Rng& rng) {
  Eigen::MatrixXd out(count, mean.size());
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < mean.size(); ++j) out(i, j) = mean[j] + sigma * rng.next_normal();
  }
  return out;
}

}  // namespace

TEST_CASE("single component recovers the maximum-likelihood moments") {
  Rng rng(1);
  Eigen::VectorXd mean(3);
  mean << 1.0, -2.0, 0.5;
  Eigen::MatrixXd points = gaussian_blob(400, mean, 0.7, rng);

  GaussianMixture gmm = fit_gmm(points, 1, GmmFitOptions{}, 11);

  Eigen::RowVectorXd sample_mean = points.colwise().mean();
  Eigen::MatrixXd centered = points.rowwise() - sample_mean;
  Eigen::MatrixXd sample_cov = (centered.transpose() * centered) / 400.0;

  CHECK((gmm.means.row(0) - sample_mean).norm() < 1e-9);
  CHECK((gmm.covariances[0] - sample_cov).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(gmm.weights[0] == doctest::Approx(1.0));
}

TEST_CASE("two well-separated clusters are recovered") {
  Rng rng(2);
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(4);
  m1[0] = 5.0;
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(4);
  m2[0] = -5.0;
  Eigen::MatrixXd a = gaussian_blob(500, m1, std::sqrt(0.1), rng);
  Eigen::MatrixXd b = gaussian_blob(500, m2, std::sqrt(0.1), rng);
  Eigen::MatrixXd points(1000, 4);
  points << a, b;

  GaussianMixture gmm = fit_gmm(points, 2, GmmFitOptions{}, 17);

  const int hi = gmm.means(0, 0) > gmm.means(1, 0) ? 0 : 1;
  const int lo = 1 - hi;
  CHECK((gmm.means.row(hi).transpose() - m1).norm() < 0.1);
  CHECK((gmm.means.row(lo).transpose() - m2).norm() < 0.1);
  CHECK(gmm.weights[hi] == doctest::Approx(0.5).epsilon(0.1));
  CHECK(gmm.weights[lo] == doctest::Approx(0.5).epsilon(0.1));
  CHECK(gmm.weights.sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("component counts from the experiment grid are accepted") {
  Rng rng(3);
  Eigen::MatrixXd points = gaussian_blob(600, Eigen::VectorXd::Zero(4), 1.0, rng);
  for (int components : {20, 100}) {
    GmmFitOptions options;
    options.max_iters = 15;
    GaussianMixture gmm = fit_gmm(points, components, options, 23);
    CHECK(gmm.n_components() == components);
    CHECK(gmm.weights.sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("fewer points than components is rejected") {
  Rng rng(4);
  Eigen::MatrixXd points = gaussian_blob(5, Eigen::VectorXd::Zero(2), 1.0, rng);
  CHECK_THROWS_AS(fit_gmm(points, 6, GmmFitOptions{}, 1), std::invalid_argument);
}

TEST_CASE("diagonal covariance mode keeps off-diagonals at zero") {
  Rng rng(5);
  Eigen::MatrixXd points = gaussian_blob(300, Eigen::VectorXd::Zero(3), 1.0, rng);
  GmmFitOptions options;
  options.kind = CovarianceKind::diagonal;
  GaussianMixture gmm = fit_gmm(points, 2, options, 31);
  for (const auto& cov : gmm.covariances) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        if (i != j) CHECK(cov(i, j) == 0.0);
      }
  }
}

TEST_CASE("sampling") {
  SUBCASE("single standard component matches moments at 1e5 draws") {
    GaussianMixture gmm;
    gmm.weights = Eigen::VectorXd::Ones(1);
    gmm.means = Eigen::MatrixXd::Zero(1, 3);
    gmm.covariances = {Eigen::MatrixXd::Identity(3, 3)};
    Eigen::MatrixXd draws = sample_gmm(gmm, 100000, 7);
    Eigen::RowVectorXd mean = draws.colwise().mean();
    Eigen::MatrixXd centered = draws.rowwise() - mean;
    Eigen::MatrixXd cov = (centered.transpose() * centered) / (draws.rows() - 1.0);
    CHECK(mean.cwiseAbs().maxCoeff() < 0.02);
    for (int i = 0; i < 3; ++i) CHECK(cov(i, i) == doctest::Approx(1.0).epsilon(0.02));
  }
  SUBCASE("degenerate weights route every draw to component zero") {
    GaussianMixture gmm;
    gmm.weights = Eigen::VectorXd::Zero(2);
    gmm.weights[0] = 1.0;
    gmm.means = Eigen::MatrixXd::Zero(2, 2);
    gmm.means(1, 0) = 100.0;
    gmm.covariances = {Eigen::MatrixXd::Identity(2, 2) * 0.01,
                       Eigen::MatrixXd::Identity(2, 2) * 0.01};
    Eigen::MatrixXd draws = sample_gmm(gmm, 500, 9);
    CHECK(draws.col(0).cwiseAbs().maxCoeff() < 10.0);
  }
  SUBCASE("fixed seed reproduces the draws") {
    GaussianMixture gmm;
    gmm.weights = Eigen::VectorXd::Ones(1);
    gmm.means = Eigen::MatrixXd::Zero(1, 2);
    gmm.covariances = {Eigen::MatrixXd::Identity(2, 2)};
    Eigen::MatrixXd a = sample_gmm(gmm, 64, 13);
    Eigen::MatrixXd b = sample_gmm(gmm, 64, 13);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("fit-sample round trip preserves the log-likelihood on separated data") {
  Rng rng(6);
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(2);
  m1[0] = 6.0;
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(2);
  m2[0] = -6.0;
  Eigen::MatrixXd a = gaussian_blob(400, m1, 0.5, rng);
  Eigen::MatrixXd b = gaussian_blob(400, m2, 0.5, rng);
  Eigen::MatrixXd points(800, 2);
  points << a, b;

  GaussianMixture first = fit_gmm(points, 2, GmmFitOptions{}, 41);
  Eigen::MatrixXd resampled = sample_gmm(first, 2000, 43);
  GaussianMixture second = fit_gmm(resampled, 2, GmmFitOptions{}, 47);

  const double ll_first = gmm_log_likelihood(first, resampled) / resampled.rows();
  const double ll_second = gmm_log_likelihood(second, resampled) / resampled.rows();
  CHECK(std::abs(ll_first - ll_second) <= 0.05 * std::abs(ll_first));
}

TEST_CASE("active_units") {
  SUBCASE("prior-matching unit is flagged collapsed") {
    // mu == 0 and var == 1 gives exactly zero KL for that unit
    std::vector<double> per_unit = {0.4, 0.0, 0.2};
    ActiveUnitsReport report = active_units(per_unit);
    CHECK(report.count_active == 2);
    CHECK(report.collapsed == std::vector<bool>{false, true, false});
  }
  SUBCASE("uniformly informative units are all active") {
    std::vector<double> per_unit(16, 0.5);
    CHECK(active_units(per_unit).count_active == 16);
  }
  SUBCASE("permutation of units permutes the mask") {
    std::vector<double> per_unit = {0.0, 0.3, 0.002, 0.7};
    ActiveUnitsReport a = active_units(per_unit);
    std::vector<double> permuted = {0.7, 0.002, 0.3, 0.0};
    ActiveUnitsReport b = active_units(permuted);
    CHECK(a.count_active == b.count_active);
    for (size_t i = 0; i < 4; ++i) CHECK(a.collapsed[i] == b.collapsed[3 - i]);
  }
  SUBCASE("non-positive threshold is rejected") {
    CHECK_THROWS_AS(active_units({0.1}, 0.0), std::invalid_argument);
  }
}
