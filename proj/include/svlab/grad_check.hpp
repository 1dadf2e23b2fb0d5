// Central-difference gradient verification.
#pragma once

#include <functional>
#include <vector>

#include "svlab/tensor.hpp"

namespace svlab {

// fn maps the given inputs to a scalar tensor. Inputs are cloned internally
// with requires_grad set; fn must be deterministic (any noise is injected as
// one of the inputs). Requires f64 precision mode. Returns the max over all
// input elements of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
// with numeric gradients from central differences of step eps.
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                  const std::vector<Tensor>& inputs, double eps = 1e-5);

}  // namespace svlab
