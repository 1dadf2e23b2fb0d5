#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "svlab/fid.hpp"
#include "svlab/matrix_io.hpp"
#include "svlab/rng.hpp"

using namespace svlab;

namespace {

Tensor random_images(size_t n, size_t side, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<double> vals(n * side * side);
  for (double& v : vals) v = lo + (hi - lo) * rng.next_uniform();
  return Tensor::from_values({n, side, side, 1}, std::move(vals));
}

Eigen::MatrixXd random_orthogonal(int d, Rng& rng) {
  Eigen::MatrixXd m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rng.next_normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  return Eigen::MatrixXd(qr.householderQ());
}

}  // namespace

TEST_CASE("identity extractor flattens") {
  Rng rng(1);
  Tensor images = random_images(5, 8, rng);
  FeatureMatrix f = FeatureExtractor::identity().extract(images);
  CHECK(f.rows() == 5);
  CHECK(f.dims() == 64);
  CHECK(f.values(2, 9) == images.at({2, 1, 1, 0}));
}

TEST_CASE("pca extractor") {
  Rng rng(2);
  Tensor reference = random_images(120, 8, rng);

  SUBCASE("components are orthonormal and output has the requested width") {
    FeatureExtractor pca = FeatureExtractor::pca(16);
    pca.fit(reference);
    FeatureMatrix f = pca.extract(reference);
    CHECK(f.rows() == 120);
    CHECK(f.dims() == 16);
    // Orthonormality through the projection of the projections: projecting
    // twice must preserve the Gram matrix of the scores.
    Eigen::MatrixXd gram = f.values.transpose() * f.values;
    FeatureMatrix f2 = pca.extract(reference);
    Eigen::MatrixXd gram2 = f2.values.transpose() * f2.values;
    CHECK((gram - gram2).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("reconstruction error is monotone in the component count") {
    auto residual = [&](int d) {
      FeatureExtractor pca = FeatureExtractor::pca(d);
      pca.fit(reference);
      FeatureMatrix scores = pca.extract(reference);
      // Total variance minus captured variance.
      FeatureMatrix full = FeatureExtractor::identity().extract(reference);
      Eigen::RowVectorXd mean = full.values.colwise().mean();
      const double total = (full.values.rowwise() - mean).squaredNorm();
      return total - scores.values.squaredNorm();
    };
    const double r2 = residual(2), r8 = residual(8), r32 = residual(32);
    CHECK(r2 >= r8);
    CHECK(r8 >= r32);
    CHECK(r32 >= -1e-6);
  }
  SUBCASE("unfitted extraction is rejected") {
    FeatureExtractor pca = FeatureExtractor::pca(4);
    CHECK_THROWS_AS(pca.extract(reference), std::logic_error);
  }
}

TEST_CASE("pca components pass the Gram check directly") {
  // Fit on data with known structure and verify V^T V = I via the public
  // behaviour: projecting the basis rows themselves.
  Rng rng(3);
  Tensor reference = random_images(80, 4, rng);
  FeatureExtractor pca = FeatureExtractor::pca(6);
  pca.fit(reference);
  // Unit vectors in image space, projected, give the component rows; their
  // Gram matrix must be the identity for an orthonormal basis.
  std::vector<double> zeros(16, 0.0);
  Eigen::MatrixXd rows(16, 6);
  FeatureMatrix origin = pca.extract(Tensor::from_values({1, 4, 4, 1}, zeros));
  for (int i = 0; i < 16; ++i) {
    std::vector<double> e(16, 0.0);
    e[static_cast<size_t>(i)] = 1.0;
    FeatureMatrix f = pca.extract(Tensor::from_values({1, 4, 4, 1}, e));
    rows.row(i) = f.values.row(0) - origin.values.row(0);
  }
  Eigen::MatrixXd gram = rows.transpose() * rows;
  CHECK((gram - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("random_conv extractor is deterministic per seed") {
  Rng rng(4);
  Tensor images = random_images(6, 8, rng);
  FeatureMatrix a = FeatureExtractor::random_conv(10, 99).extract(images);
  FeatureMatrix b = FeatureExtractor::random_conv(10, 99).extract(images);
  FeatureMatrix c = FeatureExtractor::random_conv(10, 100).extract(images);
  CHECK(a.dims() == 10);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.values - c.values).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("from_file features round-trip the matrix format bit-exactly") {
  Rng rng(5);
  Eigen::MatrixXd m(7, 3);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = rng.next_normal();
  const std::string path = "fid_features_test.svmat";
  save_matrix(m, path);
  FeatureMatrix f = load_features(path);
  CHECK((f.values - m).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("gaussian_stats") {
  SUBCASE("two points in one dimension, unbiased divisor") {
    FeatureMatrix f;
    f.values.resize(2, 1);
    f.values << 0.0, 2.0;
    GaussianStats s = gaussian_stats(f);
    CHECK(s.mu[0] == doctest::Approx(1.0));
    CHECK(s.cov(0, 0) == doctest::Approx(2.0));
  }
  SUBCASE("constant set has zero covariance") {
    FeatureMatrix f;
    f.values = Eigen::MatrixXd::Constant(6, 2, 3.5);
    GaussianStats s = gaussian_stats(f);
    CHECK(s.cov.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  }
  SUBCASE("covariance is symmetric to machine precision") {
    Rng rng(6);
    FeatureMatrix f;
    f.values.resize(40, 5);
    for (int i = 0; i < 40; ++i)
      for (int j = 0; j < 5; ++j) f.values(i, j) = rng.next_normal();
    GaussianStats s = gaussian_stats(f);
    CHECK((s.cov - s.cov.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("fewer rows than dims+1 triggers shrinkage, not failure") {
    Rng rng(7);
    FeatureMatrix f;
    f.values.resize(4, 6);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 6; ++j) f.values(i, j) = rng.next_normal();
    GaussianStats s = gaussian_stats(f);
    CHECK(s.cov.trace() > 0.0);
  }
  SUBCASE("single row is rejected") {
    FeatureMatrix f;
    f.values = Eigen::MatrixXd::Zero(1, 3);
    CHECK_THROWS_AS(gaussian_stats(f), std::invalid_argument);
  }
}

TEST_CASE("sqrtm_psd") {
  SUBCASE("identity maps to identity") {
    Eigen::MatrixXd s = sqrtm_psd(Eigen::MatrixXd::Identity(4, 4));
    CHECK((s - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("diagonal roots") {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
    m(0, 0) = 4.0;
    m(1, 1) = 9.0;
    Eigen::MatrixXd s = sqrtm_psd(m);
    CHECK(s(0, 0) == doctest::Approx(2.0));
    CHECK(s(1, 1) == doctest::Approx(3.0));
    CHECK(std::abs(s(0, 1)) < 1e-12);
  }
  SUBCASE("random PSD inputs reconstruct within 1e-8 relative Frobenius") {
    Rng rng(8);
    for (int rep = 0; rep < 10; ++rep) {
      Eigen::MatrixXd a(6, 6);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) a(i, j) = rng.next_normal();
      Eigen::MatrixXd psd = a.transpose() * a;
      Eigen::MatrixXd s = sqrtm_psd(psd);
      const double rel = (s * s - psd).norm() / std::max(1.0, psd.norm());
      CHECK(rel < 1e-8);
    }
  }
  SUBCASE("asymmetric input is rejected") {
    Eigen::MatrixXd m(2, 2);
    m << 1.0, 0.5, -0.5, 1.0;
    CHECK_THROWS_AS(sqrtm_psd(m), std::invalid_argument);
  }
}

TEST_CASE("frechet_distance") {
  SUBCASE("identical stats score zero") {
    Rng rng(9);
    Eigen::MatrixXd a(5, 5);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) a(i, j) = rng.next_normal();
    GaussianStats s;
    s.mu = Eigen::VectorXd::Random(5);
    s.cov = a.transpose() * a;
    FidReport r = frechet_distance(s, s);
    CHECK(std::abs(r.fid) < 1e-6);
  }
  SUBCASE("unit-variance mean shift in one dimension") {
    GaussianStats s1{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
    GaussianStats s2{Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Identity(1, 1)};
    FidReport r = frechet_distance(s1, s2);
    CHECK(r.fid == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.mean_term == doctest::Approx(1.0));
    CHECK(r.trace_term == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("swapped diagonal covariances at equal means") {
    Eigen::MatrixXd c1 = Eigen::MatrixXd::Zero(2, 2);
    c1(0, 0) = 1.0;
    c1(1, 1) = 4.0;
    Eigen::MatrixXd c2 = Eigen::MatrixXd::Zero(2, 2);
    c2(0, 0) = 4.0;
    c2(1, 1) = 1.0;
    GaussianStats s1{Eigen::VectorXd::Zero(2), c1};
    GaussianStats s2{Eigen::VectorXd::Zero(2), c2};
    FidReport r = frechet_distance(s1, s2);
    CHECK(r.fid == doctest::Approx(2.0).epsilon(1e-9));  // (1-2)^2 + (2-1)^2
  }
  SUBCASE("diagonal closed form on random cases") {
    Rng rng(10);
    for (int rep = 0; rep < 50; ++rep) {
      const int d = 4;
      Eigen::VectorXd mu1(d), mu2(d), v1(d), v2(d);
      for (int i = 0; i < d; ++i) {
        mu1[i] = rng.next_normal();
        mu2[i] = rng.next_normal();
        v1[i] = 0.1 + 3.0 * rng.next_uniform();
        v2[i] = 0.1 + 3.0 * rng.next_uniform();
      }
      GaussianStats s1{mu1, v1.asDiagonal()};
      GaussianStats s2{mu2, v2.asDiagonal()};
      double expect = (mu1 - mu2).squaredNorm();
      for (int i = 0; i < d; ++i) {
        const double diff = std::sqrt(v1[i]) - std::sqrt(v2[i]);
        expect += diff * diff;
      }
      FidReport r = frechet_distance(s1, s2);
      CHECK(r.fid == doctest::Approx(expect).epsilon(1e-8));
    }
  }
  SUBCASE("invariant under a joint orthogonal rotation") {
    Rng rng(11);
    const int d = 5;
    Eigen::MatrixXd a(d, d), b(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        a(i, j) = rng.next_normal();
        b(i, j) = rng.next_normal();
      }
    GaussianStats s1{Eigen::VectorXd::Random(d), a.transpose() * a};
    GaussianStats s2{Eigen::VectorXd::Random(d), b.transpose() * b};
    Eigen::MatrixXd q = random_orthogonal(d, rng);
    GaussianStats r1{q * s1.mu, q * s1.cov * q.transpose()};
    GaussianStats r2{q * s2.mu, q * s2.cov * q.transpose()};
    const double base = frechet_distance(s1, s2).fid;
    const double rotated = frechet_distance(r1, r2).fid;
    CHECK(std::abs(base - rotated) < 1e-6);
  }
  SUBCASE("invariant under a common translation") {
    GaussianStats s1{Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3) * 2.0};
    GaussianStats s2{Eigen::VectorXd::Ones(3), Eigen::MatrixXd::Identity(3, 3)};
    Eigen::VectorXd shift(3);
    shift << 5.0, -3.0, 0.25;
    GaussianStats t1{s1.mu + shift, s1.cov};
    GaussianStats t2{s2.mu + shift, s2.cov};
    CHECK(std::abs(frechet_distance(s1, s2).fid - frechet_distance(t1, t2).fid) < 1e-8);
  }
  SUBCASE("dimension mismatch is rejected") {
    GaussianStats s1{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
    GaussianStats s2{Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)};
    CHECK_THROWS_AS(frechet_distance(s1, s2), std::invalid_argument);
  }
}

TEST_CASE("fid_between_sets") {
  Rng rng(12);
  SUBCASE("a set against itself scores approximately zero") {
    Tensor images = random_images(60, 6, rng);
    FidReport r = fid_between_sets(images, images, FeatureExtractor::pca(8));
    CHECK(std::abs(r.fid) < 1e-6);
  }
  SUBCASE("disjoint classes score above the mixed baseline") {
    Tensor bright_a = random_images(50, 6, rng, 0.7, 1.0);
    Tensor bright_b = random_images(50, 6, rng, 0.7, 1.0);
    Tensor dark = random_images(50, 6, rng, 0.0, 0.3);
    FeatureExtractor pca = FeatureExtractor::pca(8);
    const double disjoint = fid_between_sets(bright_a, dark, pca).fid;
    const double baseline = fid_between_sets(bright_a, bright_b, pca).fid;
    CHECK(disjoint > baseline);
  }
  SUBCASE("swapping the arguments leaves the score unchanged") {
    Tensor a = random_images(40, 6, rng, 0.0, 1.0);
    Tensor b = random_images(40, 6, rng, 0.2, 0.9);
    FeatureExtractor pca = FeatureExtractor::pca(8);
    const double ab = fid_between_sets(a, b, pca).fid;
    const double ba = fid_between_sets(b, a, pca).fid;
    CHECK(std::abs(ab - ba) < 1e-6);
  }
}
