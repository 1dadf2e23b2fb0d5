// Named parameter storage shared by model builders, the optimizer and the
// checkpoint container. Iteration order is the sorted name order, which keeps
// optimizer updates and serialization deterministic.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "svlab/tensor.hpp"

namespace svlab {

class ParamStore {
 public:
  // Trainable entries get requires_grad; buffers (e.g. batch-norm running
  // statistics) do not.
  Tensor& create(const std::string& name, Shape shape, bool trainable,
                 double fill = 0.0);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
  bool is_trainable(const std::string& name) const;

  std::vector<std::string> names() const;
  std::vector<std::string> trainable_names() const;
  size_t size() const { return entries_.size(); }
  size_t total_elements(bool trainable_only = false) const;

  void zero_grads();

 private:
  struct Entry {
    Tensor tensor;
    bool trainable;
  };
  std::map<std::string, Entry> entries_;
};

}  // namespace svlab
