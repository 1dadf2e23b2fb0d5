// Dense row-major tensor with an optional gradient accumulator.
#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace svlab {

// Elements are stored as doubles. In f32 mode every operation result is
// rounded through single precision, so values match what a float pipeline
// would hold while oracle code can flip back to f64 without re-allocating.
enum class Precision { f32, f64 };

void set_default_precision(Precision p);
Precision default_precision();
double round_to_precision(double v);
void round_buffer_to_precision(std::vector<double>& values);

using Shape = std::vector<size_t>;

size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::unique_ptr<std::vector<double>> grad;  // allocated on first accumulation
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from_values(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  size_t ndim() const { return shape().size(); }
  size_t dim(size_t axis) const;
  size_t size() const;

  const std::vector<double>& values() const;
  std::vector<double>& values();

  bool requires_grad() const;
  Tensor& set_requires_grad(bool enabled);

  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws when absent
  std::vector<double>& grad_buffer();       // zero-allocates on demand
  void zero_grad();

  // Scalar tensors only.
  double item() const;

  double at(std::initializer_list<size_t> index) const;
  double& at(std::initializer_list<size_t> index);

  // Value copy that does not participate in differentiation.
  Tensor detach() const;
  Tensor clone() const;

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  size_t flat_index(std::initializer_list<size_t> index) const;

  std::shared_ptr<TensorImpl> impl_;
};

// Throws if any element is NaN/Inf; every op runs this on its output.
void check_finite(const Tensor& t, const char* op_name);

}  // namespace svlab
