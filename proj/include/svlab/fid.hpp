// Frechet distance between feature distributions of two image sets, with
// pluggable desk-scale feature extraction. Inception-v3 is deliberately not
// reimplemented: parity with published numbers requires activations imported
// from file; the built-in extractors give internally comparable scores only.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "svlab/tensor.hpp"

namespace svlab {

struct FeatureMatrix {
  Eigen::MatrixXd values;  // [m, d]
  int rows() const { return static_cast<int>(values.rows()); }
  int dims() const { return static_cast<int>(values.cols()); }
};

struct GaussianStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;
};

struct FidReport {
  Eigen::VectorXd mu1, mu2;
  Eigen::MatrixXd c1, c2;
  double mean_term = 0.0;   // ||mu1 - mu2||^2
  double trace_term = 0.0;  // Tr(C1 + C2 - 2(C1*C2)^(1/2))
  double fid = 0.0;
};

enum class ExtractorKind { identity, pca, random_conv, from_file };

class FeatureExtractor {
 public:
  static FeatureExtractor identity();
  // Must be fitted on a reference set before extract().
  static FeatureExtractor pca(int dims);
  // Fixed random 3x3 stride-2 convolution bank, relu, global average pool.
  static FeatureExtractor random_conv(int dims, uint64_t seed);

  ExtractorKind kind() const { return kind_; }
  int dims() const { return dims_; }
  bool fitted() const;
  void fit(const Tensor& images);
  FeatureMatrix extract(const Tensor& images) const;

 private:
  FeatureExtractor(ExtractorKind kind, int dims, uint64_t seed)
      : kind_(kind), dims_(dims), seed_(seed) {}

  ExtractorKind kind_;
  int dims_;
  uint64_t seed_ = 0;
  Eigen::RowVectorXd pca_mean_;
  Eigen::MatrixXd pca_components_;  // [D, dims], orthonormal columns
};

// Unbiased covariance (divisor m-1). When m < d+1 a shrinkage term
// (1e-6 * trace/d) * I is added and a warning is printed.
GaussianStats gaussian_stats(const FeatureMatrix& features);

// Square root of a symmetric PSD matrix via eigendecomposition; negative
// eigenvalues are clamped to zero. Throws on asymmetric input.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m);

// Eq.-style distance, with the product square root evaluated through the
// symmetric form S1*C2*S1 (same trace, stable with a symmetric solver).
FidReport frechet_distance(const GaussianStats& s1, const GaussianStats& s2);

// Full pipeline. An unfitted pca extractor is fitted on the concatenation of
// both sets, which keeps the result symmetric in its arguments.
FidReport fid_between_sets(const Tensor& images_a, const Tensor& images_b,
                           FeatureExtractor extractor);

// Externally computed activations in the matrix file format.
FeatureMatrix load_features(const std::string& path);

// Structured-text (JSON) record of the scalar report fields.
void write_fid_report(const FidReport& report, const std::string& path);

}  // namespace svlab
