// Binary m-by-d matrix files (latent codes, feature activations).
// Layout: magic "SVLABMAT", version u32, m u64, d u64, element width u32
// (8 = f64), then row-major little-endian doubles. Round-trips bitwise.
#pragma once

#include <Eigen/Dense>
#include <string>

namespace svlab {

void save_matrix(const Eigen::MatrixXd& m, const std::string& path);
Eigen::MatrixXd load_matrix(const std::string& path);

}  // namespace svlab
