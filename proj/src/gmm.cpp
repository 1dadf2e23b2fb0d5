#include "svlab/gmm.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "svlab/rng.hpp"

namespace svlab {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// Symmetrize and raise eigenvalues to the floor.
Eigen::MatrixXd floor_covariance(const Eigen::MatrixXd& cov, double floor) {
  Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  Eigen::VectorXd vals = eig.eigenvalues();
  bool changed = false;
  for (int i = 0; i < vals.size(); ++i) {
    if (vals[i] < floor) {
      vals[i] = floor;
      changed = true;
    }
  }
  if (!changed) return sym;
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::MatrixXd diagonalize(const Eigen::MatrixXd& cov, double floor) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(cov.rows(), cov.cols());
  for (int i = 0; i < cov.rows(); ++i) out(i, i) = std::max(cov(i, i), floor);
  return out;
}

struct ComponentDensity {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double log_det = 0.0;
};

ComponentDensity prepare_density(const Eigen::MatrixXd& cov) {
  ComponentDensity d;
  d.llt.compute(cov);
  if (d.llt.info() != Eigen::Success) {
    throw std::runtime_error("gmm: covariance is not positive definite after flooring");
  }
  const auto& l = d.llt.matrixLLT();
  for (int i = 0; i < cov.rows(); ++i) d.log_det += 2.0 * std::log(l(i, i));
  return d;
}

double log_density(const ComponentDensity& d, const Eigen::VectorXd& diff) {
  Eigen::VectorXd y = d.llt.matrixL().solve(diff);
  const double k = static_cast<double>(diff.size());
  return -0.5 * (k * kLog2Pi + d.log_det + y.squaredNorm());
}

// k-means++ style seeding: first center uniform, the rest proportional to
// squared distance from the nearest chosen center.
Eigen::MatrixXd kmeanspp_centers(const Eigen::MatrixXd& points, int n_components, Rng& rng) {
  const int m = static_cast<int>(points.rows());
  const int k = static_cast<int>(points.cols());
  Eigen::MatrixXd centers(n_components, k);
  centers.row(0) = points.row(static_cast<int>(rng.next_below(static_cast<uint64_t>(m))));
  Eigen::VectorXd dist2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < n_components; ++c) {
    double total = dist2.sum();
    int chosen = 0;
    if (total > 0.0) {
      double target = rng.next_uniform() * total;
      double acc = 0.0;
      chosen = m - 1;
      for (int i = 0; i < m; ++i) {
        acc += dist2[i];
        if (acc >= target) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = static_cast<int>(rng.next_below(static_cast<uint64_t>(m)));
    }
    centers.row(c) = points.row(chosen);
    dist2 = dist2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace

GaussianMixture fit_gmm(const Eigen::MatrixXd& points, int n_components,
                        const GmmFitOptions& options, uint64_t seed) {
  const int m = static_cast<int>(points.rows());
  const int k = static_cast<int>(points.cols());
  if (n_components < 1) throw std::invalid_argument("fit_gmm: n_components must be positive");
  if (k < 1) throw std::invalid_argument("fit_gmm: dimension must be >= 1");
  if (m < n_components) {
    throw std::invalid_argument("fit_gmm: " + std::to_string(m) + " points cannot support " +
                                std::to_string(n_components) + " components");
  }
  if (!points.allFinite()) throw std::invalid_argument("fit_gmm: non-finite input");

  Rng rng(derive_seed(seed, "gmm-init"));
  GaussianMixture gmm;
  gmm.kind = options.kind;
  gmm.weights = Eigen::VectorXd::Constant(n_components, 1.0 / n_components);
  gmm.means = kmeanspp_centers(points, n_components, rng);

  Eigen::RowVectorXd sample_mean = points.colwise().mean();
  Eigen::MatrixXd centered = points.rowwise() - sample_mean;
  Eigen::MatrixXd sample_cov = (centered.transpose() * centered) / static_cast<double>(m);
  Eigen::MatrixXd init_cov = options.kind == CovarianceKind::diagonal
                                 ? diagonalize(sample_cov, options.eigen_floor)
                                 : floor_covariance(sample_cov, options.eigen_floor);
  gmm.covariances.assign(n_components, init_cov);

  Eigen::MatrixXd resp(m, n_components);
  double prev_ll = -std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < options.max_iters; ++iter) {
    // E-step: responsibilities via log-sum-exp.
    std::vector<ComponentDensity> densities;
    densities.reserve(n_components);
    for (int c = 0; c < n_components; ++c) densities.push_back(prepare_density(gmm.covariances[c]));

    double ll = 0.0;
    for (int i = 0; i < m; ++i) {
      double row_max = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < n_components; ++c) {
        Eigen::VectorXd diff = (points.row(i) - gmm.means.row(c)).transpose();
        double lp = std::log(gmm.weights[c]) + log_density(densities[c], diff);
        resp(i, c) = lp;
        row_max = std::max(row_max, lp);
      }
      double denom = 0.0;
      for (int c = 0; c < n_components; ++c) denom += std::exp(resp(i, c) - row_max);
      const double lse = row_max + std::log(denom);
      ll += lse;
      for (int c = 0; c < n_components; ++c) resp(i, c) = std::exp(resp(i, c) - lse);
    }

    if (iter > 0 && ll < prev_ll - 1e-8 * std::max(1.0, std::abs(prev_ll))) {
      throw std::logic_error("fit_gmm: log-likelihood decreased from " + std::to_string(prev_ll) +
                             " to " + std::to_string(ll));
    }
    const bool converged =
        iter > 0 && (ll - prev_ll) / static_cast<double>(m) < options.tol;
    prev_ll = ll;
    if (converged) break;

    // M-step.
    for (int c = 0; c < n_components; ++c) {
      const double nc = resp.col(c).sum();
      if (nc < 2.0) {
        std::cerr << "warning: fit_gmm: component " << c << " has " << nc
                  << " responsible points; covariance floored\n";
      }
      const double safe_nc = std::max(nc, 1e-12);
      gmm.weights[c] = nc / static_cast<double>(m);
      Eigen::RowVectorXd mean = (resp.col(c).transpose() * points) / safe_nc;
      gmm.means.row(c) = mean;
      Eigen::MatrixXd diff = points.rowwise() - mean;
      Eigen::MatrixXd cov =
          diff.transpose() * resp.col(c).asDiagonal() * diff / safe_nc;
      gmm.covariances[c] = options.kind == CovarianceKind::diagonal
                               ? diagonalize(cov, options.eigen_floor)
                               : floor_covariance(cov, options.eigen_floor);
    }
    double wsum = gmm.weights.sum();
    gmm.weights /= wsum;
  }
  return gmm;
}

double gmm_log_likelihood(const GaussianMixture& gmm, const Eigen::MatrixXd& points) {
  const int m = static_cast<int>(points.rows());
  const int n = gmm.n_components();
  std::vector<ComponentDensity> densities;
  densities.reserve(n);
  for (int c = 0; c < n; ++c) densities.push_back(prepare_density(gmm.covariances[c]));
  double ll = 0.0;
  for (int i = 0; i < m; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    std::vector<double> lp(n);
    for (int c = 0; c < n; ++c) {
      Eigen::VectorXd diff = (points.row(i) - gmm.means.row(c)).transpose();
      lp[c] = std::log(gmm.weights[c]) + log_density(densities[c], diff);
      row_max = std::max(row_max, lp[c]);
    }
    double denom = 0.0;
    for (int c = 0; c < n; ++c) denom += std::exp(lp[c] - row_max);
    ll += row_max + std::log(denom);
  }
  return ll;
}

Eigen::MatrixXd sample_gmm(const GaussianMixture& gmm, int count, uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample_gmm: count must be positive");
  const int n = gmm.n_components();
  const int k = gmm.dims();
  if (n < 1) throw std::invalid_argument("sample_gmm: mixture is not fitted");

  std::vector<Eigen::MatrixXd> factors;
  factors.reserve(n);
  for (int c = 0; c < n; ++c) {
    Eigen::LLT<Eigen::MatrixXd> llt(gmm.covariances[c]);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("sample_gmm: covariance " + std::to_string(c) +
                               " is not positive definite (internal flooring bug)");
    }
    factors.push_back(Eigen::MatrixXd(llt.matrixL()));
  }

  Rng rng(derive_seed(seed, "gmm-sample"));
  Eigen::MatrixXd out(count, k);
  Eigen::VectorXd eps(k);
  for (int i = 0; i < count; ++i) {
    double u = rng.next_uniform();
    int chosen = n - 1;
    double acc = 0.0;
    for (int c = 0; c < n; ++c) {
      acc += gmm.weights[c];
      if (u < acc) {
        chosen = c;
        break;
      }
    }
    for (int j = 0; j < k; ++j) eps[j] = rng.next_normal();
    out.row(i) = gmm.means.row(chosen) + (factors[chosen] * eps).transpose();
  }
  return out;
}

ActiveUnitsReport active_units(const std::vector<double>& per_unit_kl, double threshold) {
  if (threshold <= 0.0) throw std::invalid_argument("active_units: threshold must be positive");
  ActiveUnitsReport report;
  report.collapsed.resize(per_unit_kl.size());
  for (size_t i = 0; i < per_unit_kl.size(); ++i) {
    const bool collapsed = per_unit_kl[i] < threshold;
    report.collapsed[i] = collapsed;
    if (!collapsed) ++report.count_active;
  }
  return report;
}

}  // namespace svlab
