// Adam over the trainable entries of a ParamStore. Updates iterate the
// sorted name order, so steps are deterministic.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "svlab/params.hpp"

namespace svlab {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(ParamStore& store, AdamConfig cfg = {});

  // Applies one update from the accumulated gradients; parameters without a
  // gradient are skipped.
  void step();
  void zero_grad();
  uint64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }

  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
  };
  const std::map<std::string, Slot>& state() const { return state_; }
  // Restores serialized state; names and sizes must match the store.
  void restore(std::map<std::string, Slot> state, uint64_t step_count);

 private:
  ParamStore& store_;
  AdamConfig cfg_;
  std::map<std::string, Slot> state_;
  uint64_t step_count_ = 0;
};

}  // namespace svlab
