#include "svlab/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace svlab {

Adam::Adam(ParamStore& store, AdamConfig cfg) : store_(store), cfg_(cfg) {
  for (const std::string& name : store_.trainable_names()) {
    const size_t n = store_.get(name).size();
    state_.emplace(name, Slot{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }
}

void Adam::step() {
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bias1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg_.beta2, t);
  for (auto& [name, slot] : state_) {
    Tensor& param = store_.get(name);
    if (!param.has_grad()) continue;
    const std::vector<double>& g = param.grad();
    std::vector<double>& values = param.values();
    for (size_t i = 0; i < values.size(); ++i) {
      slot.m[i] = round_to_precision(cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g[i]);
      slot.v[i] = round_to_precision(cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i]);
      const double m_hat = slot.m[i] / bias1;
      const double v_hat = slot.v[i] / bias2;
      values[i] =
          round_to_precision(values[i] - cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
    }
  }
}

void Adam::zero_grad() { store_.zero_grads(); }

void Adam::restore(std::map<std::string, Slot> state, uint64_t step_count) {
  for (const auto& [name, slot] : state) {
    auto it = state_.find(name);
    if (it == state_.end()) {
      throw std::invalid_argument("Adam::restore: unknown parameter '" + name + "'");
    }
    if (slot.m.size() != it->second.m.size() || slot.v.size() != it->second.v.size()) {
      throw std::invalid_argument("Adam::restore: state size mismatch for '" + name + "'");
    }
  }
  if (state.size() != state_.size()) {
    throw std::invalid_argument("Adam::restore: parameter set mismatch");
  }
  state_ = std::move(state);
  step_count_ = step_count;
}

}  // namespace svlab
