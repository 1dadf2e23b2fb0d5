#include "svlab/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace svlab {

namespace {
std::atomic<Precision> g_precision{Precision::f64};
}

void set_default_precision(Precision p) { g_precision.store(p); }

Precision default_precision() { return g_precision.load(); }

double round_to_precision(double v) {
  if (g_precision.load() == Precision::f32) {
    return static_cast<double>(static_cast<float>(v));
  }
  return v;
}

void round_buffer_to_precision(std::vector<double>& values) {
  if (g_precision.load() != Precision::f32) return;
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

size_t shape_size(const Shape& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  for (size_t d : shape) {
    if (d == 0) throw std::invalid_argument("Tensor: extents must be positive");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->values.assign(shape_size(shape), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
  if (shape_size(shape) != values.size()) {
    throw std::invalid_argument("Tensor: element count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  for (size_t d : shape) {
    if (d == 0) throw std::invalid_argument("Tensor: extents must be positive");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from_values({1}, {value}); }

const Shape& Tensor::shape() const {
  if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
  return impl_->shape;
}

size_t Tensor::dim(size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw std::out_of_range("Tensor::dim: axis out of range");
  return s[axis];
}

size_t Tensor::size() const { return values().size(); }

const std::vector<double>& Tensor::values() const {
  if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
  return impl_->values;
}

std::vector<double>& Tensor::values() {
  if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
  return impl_->values;
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool enabled) {
  if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
  impl_->requires_grad = enabled;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad != nullptr; }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("Tensor: gradient not populated");
  return *impl_->grad;
}

std::vector<double>& Tensor::grad_buffer() {
  if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
  if (!impl_->grad) {
    impl_->grad = std::make_unique<std::vector<double>>(impl_->values.size(), 0.0);
  }
  return *impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.reset();
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("Tensor::item: expected scalar, got shape " + shape_str(shape()));
  }
  return values()[0];
}

size_t Tensor::flat_index(std::initializer_list<size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) {
    throw std::invalid_argument("Tensor::at: index rank mismatch for shape " + shape_str(s));
  }
  size_t flat = 0;
  size_t axis = 0;
  for (size_t i : index) {
    if (i >= s[axis]) throw std::out_of_range("Tensor::at: index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return flat;
}

double Tensor::at(std::initializer_list<size_t> index) const {
  return values()[flat_index(index)];
}

double& Tensor::at(std::initializer_list<size_t> index) {
  return values()[flat_index(index)];
}

Tensor Tensor::detach() const { return from_values(shape(), values()); }

Tensor Tensor::clone() const {
  Tensor copy = from_values(shape(), values());
  copy.set_requires_grad(requires_grad());
  return copy;
}

void check_finite(const Tensor& t, const char* op_name) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string(op_name) +
                               ": non-finite element in result (NaN/Inf is an error state)");
    }
  }
}

}  // namespace svlab
