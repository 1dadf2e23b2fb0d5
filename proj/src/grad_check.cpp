#include "svlab/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "svlab/tape.hpp"

namespace svlab {

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                  const std::vector<Tensor>& inputs, double eps) {
  if (default_precision() != Precision::f64) {
    throw std::logic_error("grad_check: requires f64 precision mode");
  }
  if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");

  std::vector<Tensor> work;
  work.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    Tensor copy = t.detach();
    copy.set_requires_grad(true);
    work.push_back(copy);
  }

  auto eval = [&]() -> double {
    Tensor out = fn(work);
    if (out.size() != 1) {
      throw std::invalid_argument("grad_check: fn must return a scalar");
    }
    return out.item();
  };

  // Determinism gate: two tape-free passes must agree bitwise.
  const double first = eval();
  const double second = eval();
  if (first != second) {
    throw std::runtime_error("grad_check: fn is non-deterministic (two forward passes disagree)");
  }

  // Analytic gradients.
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = fn(work);
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(work.size());
  for (Tensor& t : work) {
    analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.size(), 0.0));
    t.zero_grad();
  }
  tape.clear();

  double max_rel = 0.0;
  for (size_t which = 0; which < work.size(); ++which) {
    auto& vals = work[which].values();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + eps;
      const double plus = eval();
      vals[i] = keep - eps;
      const double minus = eval();
      vals[i] = keep;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[which][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace svlab
