#include "svlab/fid.hpp"

#include <fstream>
#include <iostream>
#include <stdexcept>

#include "json.hpp"
#include "svlab/matrix_io.hpp"
#include "svlab/ops.hpp"
#include "svlab/rng.hpp"

namespace svlab {

namespace {

Eigen::MatrixXd flatten_images(const Tensor& images) {
  if (images.ndim() != 4) {
    throw std::invalid_argument("feature extraction: images must be [N,H,W,C], got " +
                                shape_str(images.shape()));
  }
  const size_t n = images.dim(0);
  const size_t d = images.size() / n;
  Eigen::MatrixXd out(static_cast<int>(n), static_cast<int>(d));
  const auto& vals = images.values();
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) out(static_cast<int>(i), static_cast<int>(j)) = vals[i * d + j];
  return out;
}

}  // namespace

FeatureExtractor FeatureExtractor::identity() {
  return FeatureExtractor(ExtractorKind::identity, 0, 0);
}

FeatureExtractor FeatureExtractor::pca(int dims) {
  if (dims < 1) throw std::invalid_argument("pca extractor: dims must be positive");
  return FeatureExtractor(ExtractorKind::pca, dims, 0);
}

FeatureExtractor FeatureExtractor::random_conv(int dims, uint64_t seed) {
  if (dims < 1) throw std::invalid_argument("random_conv extractor: dims must be positive");
  return FeatureExtractor(ExtractorKind::random_conv, dims, seed);
}

bool FeatureExtractor::fitted() const {
  return kind_ != ExtractorKind::pca || pca_components_.size() > 0;
}

void FeatureExtractor::fit(const Tensor& images) {
  if (kind_ != ExtractorKind::pca) return;
  Eigen::MatrixXd flat = flatten_images(images);
  const int m = static_cast<int>(flat.rows());
  const int d = static_cast<int>(flat.cols());
  if (dims_ > d) {
    throw std::invalid_argument("pca extractor: requested " + std::to_string(dims_) +
                                " components from " + std::to_string(d) + "-dim inputs");
  }
  if (m < 2) throw std::invalid_argument("pca extractor: need at least 2 reference images");
  pca_mean_ = flat.colwise().mean();
  Eigen::MatrixXd centered = flat.rowwise() - pca_mean_;
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(m - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues ascend; take the top dims_ columns in descending order.
  pca_components_.resize(d, dims_);
  for (int j = 0; j < dims_; ++j) pca_components_.col(j) = eig.eigenvectors().col(d - 1 - j);
}

FeatureMatrix FeatureExtractor::extract(const Tensor& images) const {
  switch (kind_) {
    case ExtractorKind::identity:
      return FeatureMatrix{flatten_images(images)};
    case ExtractorKind::pca: {
      if (!fitted()) throw std::logic_error("pca extractor: extract() before fit()");
      Eigen::MatrixXd flat = flatten_images(images);
      if (flat.cols() != pca_components_.rows()) {
        throw std::invalid_argument("pca extractor: image dimension changed since fit");
      }
      return FeatureMatrix{(flat.rowwise() - pca_mean_) * pca_components_};
    }
    case ExtractorKind::random_conv: {
      if (images.ndim() != 4) {
        throw std::invalid_argument("random_conv extractor: images must be [N,H,W,C]");
      }
      const size_t cin = images.dim(3);
      std::vector<double> filt(3 * 3 * cin * static_cast<size_t>(dims_));
      Rng rng(derive_seed(seed_, "random-conv"));
      const double scl = std::sqrt(1.0 / (9.0 * static_cast<double>(cin)));
      for (double& v : filt) v = scl * rng.next_normal();
      Tensor kernel = Tensor::from_values({3, 3, cin, static_cast<size_t>(dims_)},
                                          std::move(filt));
      Tensor features = global_avg_pool(relu(conv2d(images, kernel, 2, Padding::same)));
      Eigen::MatrixXd out(static_cast<int>(features.dim(0)), dims_);
      const auto& vals = features.values();
      for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < dims_; ++j) out(i, j) = vals[static_cast<size_t>(i) * dims_ + j];
      return FeatureMatrix{std::move(out)};
    }
    case ExtractorKind::from_file:
      throw std::logic_error("from_file features come from load_features(), not extract()");
  }
  throw std::logic_error("unreachable");
}

GaussianStats gaussian_stats(const FeatureMatrix& features) {
  const int m = features.rows();
  const int d = features.dims();
  if (m < 2) throw std::invalid_argument("gaussian_stats: need at least 2 rows");
  if (!features.values.allFinite()) {
    throw std::invalid_argument("gaussian_stats: non-finite feature values");
  }
  GaussianStats stats;
  stats.mu = features.values.colwise().mean();
  Eigen::MatrixXd centered = features.values.rowwise() - stats.mu.transpose();
  stats.cov = (centered.transpose() * centered) / static_cast<double>(m - 1);
  stats.cov = 0.5 * (stats.cov + stats.cov.transpose());
  if (m < d + 1) {
    const double lambda = 1e-6 * stats.cov.trace() / static_cast<double>(d);
    std::cerr << "warning: gaussian_stats: " << m << " rows for " << d
              << " dims gives a rank-deficient covariance; shrinkage " << lambda << " applied\n";
    stats.cov += lambda * Eigen::MatrixXd::Identity(d, d);
  }
  return stats;
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("sqrtm_psd: matrix must be square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw std::invalid_argument("sqrtm_psd: input is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

FidReport frechet_distance(const GaussianStats& s1, const GaussianStats& s2) {
  if (s1.mu.size() != s2.mu.size()) {
    throw std::invalid_argument("frechet_distance: dimension mismatch");
  }
  if (!s1.mu.allFinite() || !s2.mu.allFinite() || !s1.cov.allFinite() || !s2.cov.allFinite()) {
    throw std::invalid_argument("frechet_distance: non-finite stats");
  }
  FidReport report;
  report.mu1 = s1.mu;
  report.mu2 = s2.mu;
  report.c1 = s1.cov;
  report.c2 = s2.cov;
  report.mean_term = (s1.mu - s2.mu).squaredNorm();

  // Tr((C1*C2)^(1/2)) computed as Tr(sqrt(S1*C2*S1)) with S1 = sqrt(C1);
  // the two products share eigenvalues so the traces agree.
  Eigen::MatrixXd s1_root = sqrtm_psd(s1.cov);
  Eigen::MatrixXd inner = s1_root * s2.cov * s1_root;
  Eigen::MatrixXd cross = sqrtm_psd(0.5 * (inner + inner.transpose()));
  report.trace_term = s1.cov.trace() + s2.cov.trace() - 2.0 * cross.trace();

  const double raw = report.mean_term + report.trace_term;
  if (raw < -1e-6) {
    std::cerr << "warning: frechet_distance: negative value " << raw << " clamped to 0\n";
    report.fid = 0.0;
  } else {
    report.fid = raw;
  }
  return report;
}

FidReport fid_between_sets(const Tensor& images_a, const Tensor& images_b,
                           FeatureExtractor extractor) {
  if (extractor.kind() == ExtractorKind::pca && !extractor.fitted()) {
    const size_t na = images_a.dim(0);
    Shape joint_shape = images_a.shape();
    if (images_b.shape().size() != 4 || images_b.dim(1) != images_a.dim(1) ||
        images_b.dim(2) != images_a.dim(2) || images_b.dim(3) != images_a.dim(3)) {
      throw std::invalid_argument("fid_between_sets: image shapes differ between sets");
    }
    joint_shape[0] = na + images_b.dim(0);
    std::vector<double> joint = images_a.values();
    joint.insert(joint.end(), images_b.values().begin(), images_b.values().end());
    extractor.fit(Tensor::from_values(std::move(joint_shape), std::move(joint)));
  }
  FeatureMatrix fa = extractor.extract(images_a);
  FeatureMatrix fb = extractor.extract(images_b);
  return frechet_distance(gaussian_stats(fa), gaussian_stats(fb));
}

FeatureMatrix load_features(const std::string& path) { return FeatureMatrix{load_matrix(path)}; }

void write_fid_report(const FidReport& report, const std::string& path) {
  nlohmann::json j;
  j["dims"] = report.mu1.size();
  j["mean_term"] = report.mean_term;
  j["trace_term"] = report.trace_term;
  j["fid"] = report.fid;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_fid_report: cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace svlab
