// Negative ELBO objective: Gaussian reconstruction term, closed-form KL,
// and the beta balancing schedule.
//
// Reconstruction is the summed squared error per sample averaged over the
// batch (not the per-pixel mean), so beta magnitudes stay comparable with
// beta values in the low single digits; the per-pixel mean is reported
// separately and drives the balanced schedule.
#pragma once

#include <utility>
#include <vector>

#include "svlab/tensor.hpp"
#include "svlab/vae.hpp"

namespace svlab {

enum class BetaMode { fixed, balanced };

// balanced mode tracks an EMA of the per-pixel reconstruction error and
// scales beta by its ratio to the first measurement, so beta shrinks
// proportionally as reconstruction improves and the two loss components
// keep their initial balance.
struct BetaSchedule {
  double beta0 = 1.0;
  BetaMode mode = BetaMode::balanced;
  double ema_decay = 0.99;
  // state
  bool has_measurement = false;
  double recon_ema = 0.0;
  double initial_recon = 0.0;
};

struct LossBreakdown {
  double recon = 0.0;
  double kl = 0.0;
  std::vector<double> kl_per_unit;
  double beta_effective = 0.0;
  double total = 0.0;
  Tensor total_tensor;  // differentiable scalar
};

// Per unit i: 0.5*(mu_i^2 + exp(logvar_i) - logvar_i - 1), averaged over the
// batch. Returns (scalar sum, per-unit k-vector); both are on-graph and the
// scalar is exactly the sum of the vector.
std::pair<Tensor, Tensor> kl_gaussian(const LatentParams& params);

// Sum of squared differences per sample, averaged over the batch.
Tensor recon_loss(const Tensor& x, const Tensor& xhat);

// Feeds one per-pixel reconstruction measurement into the schedule and
// returns the effective beta.
double update_beta(BetaSchedule& schedule, double recon_per_pixel);
// Effective beta without a new measurement; throws in balanced mode before
// the first one.
double current_beta(const BetaSchedule& schedule);

// Split models contribute only the composed image to the reconstruction
// term; x1, x2 and sigma never appear in any loss component.
LossBreakdown total_loss(const Tensor& x, const ModelOutput& output, const LatentParams& params,
                         BetaSchedule& schedule);

}  // namespace svlab
