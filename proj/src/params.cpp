#include "svlab/params.hpp"

#include <stdexcept>

namespace svlab {

Tensor& ParamStore::create(const std::string& name, Shape shape, bool trainable, double fill) {
  if (entries_.count(name)) {
    throw std::logic_error("ParamStore: duplicate parameter '" + name + "'");
  }
  Tensor t = Tensor::full(std::move(shape), fill);
  if (trainable) t.set_requires_grad(true);
  auto [it, ok] = entries_.emplace(name, Entry{std::move(t), trainable});
  (void)ok;
  return it->second.tensor;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("ParamStore: unknown parameter '" + name + "'");
  }
  return it->second.tensor;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("ParamStore: unknown parameter '" + name + "'");
  }
  return it->second.tensor;
}

bool ParamStore::has(const std::string& name) const { return entries_.count(name) != 0; }

bool ParamStore::is_trainable(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("ParamStore: unknown parameter '" + name + "'");
  }
  return it->second.trainable;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, entry] : entries_) {
    if (entry.trainable) out.push_back(name);
  }
  return out;
}

size_t ParamStore::total_elements(bool trainable_only) const {
  size_t n = 0;
  for (const auto& [name, entry] : entries_) {
    if (!trainable_only || entry.trainable) n += entry.tensor.size();
  }
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, entry] : entries_) entry.tensor.zero_grad();
}

}  // namespace svlab
