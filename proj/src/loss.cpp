#include "svlab/loss.hpp"

#include <cmath>
#include <stdexcept>

#include "svlab/ops.hpp"

namespace svlab {

std::pair<Tensor, Tensor> kl_gaussian(const LatentParams& params) {
  if (params.mu.ndim() != 2 || params.mu.shape() != params.logvar.shape()) {
    throw std::invalid_argument("kl_gaussian: mu/logvar must both be [N,k]");
  }
  check_finite(params.mu, "kl_gaussian(mu)");
  check_finite(params.logvar, "kl_gaussian(logvar)");
  // 0.5*(mu^2 + exp(logvar) - logvar - 1), elementwise over [N,k].
  Tensor term = sub(add(square(params.mu), exp(params.logvar)), params.logvar);
  term = scale(add_scalar(term, -1.0), 0.5);
  Tensor per_unit = mean_axis0(term);
  Tensor total = sum(per_unit);
  return {total, per_unit};
}

Tensor recon_loss(const Tensor& x, const Tensor& xhat) {
  if (x.shape() != xhat.shape()) {
    throw std::invalid_argument("recon_loss: shape mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(xhat.shape()));
  }
  const size_t batch = x.dim(0);
  return scale(sum(square(sub(xhat, x))), 1.0 / static_cast<double>(batch));
}

double update_beta(BetaSchedule& schedule, double recon_per_pixel) {
  if (!(recon_per_pixel > 0.0)) {
    throw std::invalid_argument("update_beta: recon_per_pixel must be positive");
  }
  if (schedule.mode == BetaMode::fixed) return schedule.beta0;
  if (!schedule.has_measurement) {
    schedule.recon_ema = recon_per_pixel;
    schedule.initial_recon = recon_per_pixel;
    schedule.has_measurement = true;
  } else {
    schedule.recon_ema = schedule.ema_decay * schedule.recon_ema +
                         (1.0 - schedule.ema_decay) * recon_per_pixel;
  }
  return schedule.beta0 * schedule.recon_ema / schedule.initial_recon;
}

double current_beta(const BetaSchedule& schedule) {
  if (schedule.mode == BetaMode::fixed) return schedule.beta0;
  if (!schedule.has_measurement) {
    throw std::logic_error("current_beta: balanced schedule has no reconstruction measurement yet");
  }
  return schedule.beta0 * schedule.recon_ema / schedule.initial_recon;
}

LossBreakdown total_loss(const Tensor& x, const ModelOutput& output, const LatentParams& params,
                         BetaSchedule& schedule) {
  LossBreakdown breakdown;
  Tensor recon = recon_loss(x, output.composed);
  auto [kl, per_unit] = kl_gaussian(params);

  breakdown.recon = recon.item();
  breakdown.kl = kl.item();
  breakdown.kl_per_unit = per_unit.values();

  const double pixels = static_cast<double>(x.size() / x.dim(0));
  breakdown.beta_effective = update_beta(schedule, breakdown.recon / pixels);

  Tensor total = add(recon, scale(kl, breakdown.beta_effective));
  breakdown.total = total.item();
  breakdown.total_tensor = total;
  return breakdown;
}

}  // namespace svlab
