// Differentiable tensor operations. Every op validates shapes, checks its
// output for NaN/Inf, and records a backward step on the active tape when a
// gradient path exists. Broadcasting is deliberately narrow: bias addition
// over the channel axis in add(), and the sigma-map channel broadcast in
// mul() and compose().
#pragma once

#include "svlab/tensor.hpp"

namespace svlab {

enum class Padding { same, valid };
enum class Activation { relu, leaky_relu };

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double negative_slope = 0.2);
Tensor apply_activation(const Tensor& a, Activation act);

// x: [N,In], weight: [In,Out], bias: [Out]
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);

// input: [N,H,W,Cin], kernel: [Kh,Kw,Cin,Cout]. Same padding follows the
// ceil(H/stride) convention with the extra pixel split low/high.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, Padding padding);

// Channel axis is the last one; works on [N,C] and [N,H,W,C]. Training mode
// normalizes with batch statistics (reduce count must be >= 2) and updates
// the running buffers in place; eval mode uses the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, bool training,
                  double momentum = 0.99, double eps = 1e-5);

Tensor global_avg_pool(const Tensor& x);  // [N,H,W,C] -> [N,C]
Tensor upsample2x(const Tensor& x);       // nearest neighbor, [N,H,W,C] -> [N,2H,2W,C]
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_channels(const Tensor& x, size_t begin, size_t end);
Tensor crop_center(const Tensor& x, size_t out_h, size_t out_w);

// sigma: [N,H,W,1] in [0,1], x1/x2: [N,H,W,C]; returns sigma*x1 + (1-sigma)*x2.
Tensor compose(const Tensor& sigma, const Tensor& x1, const Tensor& x2);

Tensor sum(const Tensor& x);        // scalar
Tensor mean(const Tensor& x);       // scalar
Tensor mean_axis0(const Tensor& x); // [N,K] -> [K]

}  // namespace svlab
