#include "svlab/ops.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "gemm.hpp"
#include "svlab/parallel.hpp"
#include "svlab/tape.hpp"

namespace svlab {

namespace {

struct Rounder {
  bool f32 = default_precision() == Precision::f32;
  double operator()(double v) const {
    return f32 ? static_cast<double>(static_cast<float>(v)) : v;
  }
};

bool tracking(const Tensor& t) { return grad_enabled() && t.requires_grad(); }

Tensor finish(const char* op, Shape shape, std::vector<double> values, bool track) {
  round_buffer_to_precision(values);
  Tensor out = Tensor::from_values(std::move(shape), std::move(values));
  check_finite(out, op);
  if (track) out.set_requires_grad(true);
  return out;
}

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
  throw std::invalid_argument(op + ": " + detail);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_error(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

const std::vector<double>* output_grad(const std::shared_ptr<TensorImpl>& impl) {
  return impl->grad ? impl->grad.get() : nullptr;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const bool bias_broadcast = b.ndim() == 1 && a.ndim() >= 2 && a.shape().back() == b.dim(0);
  if (!bias_broadcast) require_same_shape("add", a, b);

  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  if (bias_broadcast) {
    const size_t channels = bv.size();
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i % channels];
  } else {
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  }

  bool track = tracking(a) || tracking(b);
  Tensor result = finish("add", a.shape(), std::move(out), track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), a = a, b = b, bias_broadcast]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      Rounder r;
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        for (size_t i = 0; i < g->size(); ++i) ga[i] = r(ga[i] + (*g)[i]);
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        if (bias_broadcast) {
          const size_t channels = gb.size();
          for (size_t i = 0; i < g->size(); ++i) {
            size_t c = i % channels;
            gb[c] = r(gb[c] + (*g)[i]);
          }
        } else {
          for (size_t i = 0; i < g->size(); ++i) gb[i] = r(gb[i] + (*g)[i]);
        }
      }
    });
  }
  return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];

  bool track = tracking(a) || tracking(b);
  Tensor result = finish("sub", a.shape(), std::move(out), track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), a = a, b = b]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      Rounder r;
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        for (size_t i = 0; i < g->size(); ++i) ga[i] = r(ga[i] + (*g)[i]);
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        for (size_t i = 0; i < g->size(); ++i) gb[i] = r(gb[i] - (*g)[i]);
      }
    });
  }
  return result;
}

namespace {

// Channel broadcast: map [N,H,W,1] against [N,H,W,C]. Returns true when the
// pair is broadcastable with `narrow` being the single-channel operand.
bool channel_broadcastable(const Tensor& narrow, const Tensor& wide) {
  if (narrow.ndim() != wide.ndim() || narrow.ndim() < 2) return false;
  if (narrow.shape().back() != 1 || wide.shape().back() < 2) return false;
  for (size_t i = 0; i + 1 < narrow.ndim(); ++i) {
    if (narrow.dim(i) != wide.dim(i)) return false;
  }
  return true;
}

}  // namespace

Tensor mul(const Tensor& a, const Tensor& b) {
  const bool a_narrow = channel_broadcastable(a, b);
  const bool b_narrow = !a_narrow && channel_broadcastable(b, a);
  if (!a_narrow && !b_narrow) require_same_shape("mul", a, b);

  const Tensor& narrow = a_narrow ? a : b;
  const Tensor& wide = a_narrow ? b : a;
  const bool broadcast = a_narrow || b_narrow;

  std::vector<double> out;
  if (broadcast) {
    const size_t channels = wide.shape().back();
    const auto& nv = narrow.values();
    const auto& wv = wide.values();
    out.resize(wv.size());
    for (size_t i = 0; i < wv.size(); ++i) out[i] = nv[i / channels] * wv[i];
  } else {
    const auto& av = a.values();
    const auto& bv = b.values();
    out.resize(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  }

  bool track = tracking(a) || tracking(b);
  Tensor result = finish("mul", broadcast ? wide.shape() : a.shape(), std::move(out), track);
  if (track) {
    if (broadcast) {
      Tape::current()->record([out_impl = result.impl(), narrow = narrow, wide = wide]() mutable {
        const auto* g = output_grad(out_impl);
        if (!g) return;
        Rounder r;
        const size_t channels = wide.shape().back();
        if (narrow.requires_grad()) {
          auto& gn = narrow.grad_buffer();
          const auto& wv = wide.values();
          for (size_t i = 0; i < g->size(); ++i) {
            size_t p = i / channels;
            gn[p] = r(gn[p] + (*g)[i] * wv[i]);
          }
        }
        if (wide.requires_grad()) {
          auto& gw = wide.grad_buffer();
          const auto& nv = narrow.values();
          for (size_t i = 0; i < g->size(); ++i) gw[i] = r(gw[i] + (*g)[i] * nv[i / channels]);
        }
      });
    } else {
      Tape::current()->record([out_impl = result.impl(), a = a, b = b]() mutable {
        const auto* g = output_grad(out_impl);
        if (!g) return;
        Rounder r;
        if (a.requires_grad()) {
          auto& ga = a.grad_buffer();
          const auto& bv = b.values();
          for (size_t i = 0; i < g->size(); ++i) ga[i] = r(ga[i] + (*g)[i] * bv[i]);
        }
        if (b.requires_grad()) {
          auto& gb = b.grad_buffer();
          const auto& av = a.values();
          for (size_t i = 0; i < g->size(); ++i) gb[i] = r(gb[i] + (*g)[i] * av[i]);
        }
      });
    }
  }
  return result;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor elementwise(const char* name, const Tensor& a, Fwd fwd, Bwd bwd_factor) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);

  bool track = tracking(a);
  Tensor result = finish(name, a.shape(), std::move(out), track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), a = a, bwd_factor]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      Rounder r;
      auto& ga = a.grad_buffer();
      const auto& av = a.values();
      const auto& yv = out_impl->values;
      for (size_t i = 0; i < g->size(); ++i) {
        ga[i] = r(ga[i] + (*g)[i] * bwd_factor(av[i], yv[i]));
      }
    });
  }
  return result;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor neg(const Tensor& a) {
  return elementwise("neg", a, [](double x) { return -x; },
                     [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double factor) {
  return elementwise("scale", a, [factor](double x) { return factor * x; },
                     [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return elementwise("add_scalar", a, [offset](double x) { return x + offset; },
                     [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  return elementwise("square", a, [](double x) { return x * x; },
                     [](double x, double) { return 2.0 * x; });
}

Tensor exp(const Tensor& a) {
  return elementwise("exp", a, [](double x) { return std::exp(x); },
                     [](double, double y) { return y; });
}

Tensor sigmoid(const Tensor& a) {
  return elementwise("sigmoid", a, [](double x) { return stable_sigmoid(x); },
                     [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  // Subgradient at exactly 0 is 0.
  return elementwise("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                     [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double negative_slope) {
  return elementwise("leaky_relu", a,
                     [negative_slope](double x) { return x > 0.0 ? x : negative_slope * x; },
                     [negative_slope](double x, double) { return x > 0.0 ? 1.0 : negative_slope; });
}

Tensor apply_activation(const Tensor& a, Activation act) {
  return act == Activation::relu ? relu(a) : leaky_relu(a);
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.ndim() != 2) shape_error("dense", "input must be 2-D, got " + shape_str(x.shape()));
  if (weight.ndim() != 2) shape_error("dense", "weight must be 2-D, got " + shape_str(weight.shape()));
  if (bias.ndim() != 1) shape_error("dense", "bias must be 1-D, got " + shape_str(bias.shape()));
  const size_t n = x.dim(0), in = x.dim(1);
  const size_t w_in = weight.dim(0), out_dim = weight.dim(1);
  if (in != w_in) {
    shape_error("dense", "input width " + std::to_string(in) + " does not match weight rows " +
                             std::to_string(w_in));
  }
  if (bias.dim(0) != out_dim) shape_error("dense", "bias length does not match weight columns");

  std::vector<double> out(n * out_dim);
  const auto& bv = bias.values();
  for (size_t i = 0; i < n; ++i) {
    std::copy(bv.begin(), bv.end(), out.begin() + i * out_dim);
  }
  gemm_nn(n, in, out_dim, x.values().data(), weight.values().data(), out.data());

  bool track = tracking(x) || tracking(weight) || tracking(bias);
  Tensor result = finish("dense", {n, out_dim}, std::move(out), track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), x = x, weight = weight, bias = bias, n, in, out_dim]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      if (x.requires_grad()) {
        std::vector<double> gx(n * in, 0.0);
        gemm_nt(n, out_dim, in, g->data(), weight.values().data(), gx.data());
        round_buffer_to_precision(gx);
        auto& dst = x.grad_buffer();
        Rounder r;
        for (size_t i = 0; i < dst.size(); ++i) dst[i] = r(dst[i] + gx[i]);
      }
      if (weight.requires_grad()) {
        std::vector<double> gw(in * out_dim, 0.0);
        gemm_tn(in, n, out_dim, x.values().data(), g->data(), gw.data());
        round_buffer_to_precision(gw);
        auto& dst = weight.grad_buffer();
        Rounder r;
        for (size_t i = 0; i < dst.size(); ++i) dst[i] = r(dst[i] + gw[i]);
      }
      if (bias.requires_grad()) {
        auto& dst = bias.grad_buffer();
        Rounder r;
        for (size_t i = 0; i < n; ++i) {
          const double* row = g->data() + i * out_dim;
          for (size_t j = 0; j < out_dim; ++j) dst[j] = r(dst[j] + row[j]);
        }
      }
    });
  }
  return result;
}

namespace {

struct ConvGeometry {
  size_t batch, in_h, in_w, in_c;
  size_t k_h, k_w, out_c;
  size_t out_h, out_w;
  long pad_top, pad_left;
  int stride;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, int stride,
                           Padding padding) {
  if (input.ndim() != 4) {
    shape_error("conv2d", "input must be [N,H,W,C], got " + shape_str(input.shape()));
  }
  if (kernel.ndim() != 4) {
    shape_error("conv2d", "kernel must be [Kh,Kw,Cin,Cout], got " + shape_str(kernel.shape()));
  }
  if (stride < 1) shape_error("conv2d", "stride must be positive");
  ConvGeometry geo;
  geo.batch = input.dim(0);
  geo.in_h = input.dim(1);
  geo.in_w = input.dim(2);
  geo.in_c = input.dim(3);
  geo.k_h = kernel.dim(0);
  geo.k_w = kernel.dim(1);
  geo.out_c = kernel.dim(3);
  geo.stride = stride;
  if (kernel.dim(2) != geo.in_c) {
    shape_error("conv2d", "input has " + std::to_string(geo.in_c) + " channels but kernel expects " +
                              std::to_string(kernel.dim(2)));
  }
  const size_t s = static_cast<size_t>(stride);
  if (padding == Padding::same) {
    geo.out_h = (geo.in_h + s - 1) / s;
    geo.out_w = (geo.in_w + s - 1) / s;
    long pad_h = std::max<long>(0, static_cast<long>((geo.out_h - 1) * s + geo.k_h) -
                                       static_cast<long>(geo.in_h));
    long pad_w = std::max<long>(0, static_cast<long>((geo.out_w - 1) * s + geo.k_w) -
                                       static_cast<long>(geo.in_w));
    geo.pad_top = pad_h / 2;
    geo.pad_left = pad_w / 2;
  } else {
    if (geo.in_h < geo.k_h || geo.in_w < geo.k_w) {
      shape_error("conv2d", "valid padding needs input " + shape_str(input.shape()) +
                                " at least as large as kernel " + shape_str(kernel.shape()));
    }
    geo.out_h = (geo.in_h - geo.k_h) / s + 1;
    geo.out_w = (geo.in_w - geo.k_w) / s + 1;
    geo.pad_top = 0;
    geo.pad_left = 0;
  }
  return geo;
}

std::vector<double> im2col(const std::vector<double>& x, const ConvGeometry& g) {
  const size_t patch = g.k_h * g.k_w * g.in_c;
  std::vector<double> cols(g.batch * g.out_h * g.out_w * patch, 0.0);
  parallel_for(0, g.batch, [&](size_t n_begin, size_t n_end) {
    for (size_t n = n_begin; n < n_end; ++n) {
      const double* img = x.data() + n * g.in_h * g.in_w * g.in_c;
      double* dst_img = cols.data() + n * g.out_h * g.out_w * patch;
      for (size_t oh = 0; oh < g.out_h; ++oh) {
        for (size_t ow = 0; ow < g.out_w; ++ow) {
          double* dst = dst_img + (oh * g.out_w + ow) * patch;
          for (size_t kh = 0; kh < g.k_h; ++kh) {
            long ih = static_cast<long>(oh) * g.stride + static_cast<long>(kh) - g.pad_top;
            if (ih < 0 || ih >= static_cast<long>(g.in_h)) {
              dst += g.k_w * g.in_c;
              continue;
            }
            for (size_t kw = 0; kw < g.k_w; ++kw) {
              long iw = static_cast<long>(ow) * g.stride + static_cast<long>(kw) - g.pad_left;
              if (iw < 0 || iw >= static_cast<long>(g.in_w)) {
                dst += g.in_c;
                continue;
              }
              const double* src = img + (ih * g.in_w + iw) * g.in_c;
              for (size_t c = 0; c < g.in_c; ++c) *dst++ = src[c];
            }
          }
        }
      }
    }
  });
  return cols;
}

void col2im_accumulate(const std::vector<double>& cols, const ConvGeometry& g,
                       std::vector<double>& dx) {
  const size_t patch = g.k_h * g.k_w * g.in_c;
  Rounder r;
  parallel_for(0, g.batch, [&](size_t n_begin, size_t n_end) {
    for (size_t n = n_begin; n < n_end; ++n) {
      double* img = dx.data() + n * g.in_h * g.in_w * g.in_c;
      const double* src_img = cols.data() + n * g.out_h * g.out_w * patch;
      for (size_t oh = 0; oh < g.out_h; ++oh) {
        for (size_t ow = 0; ow < g.out_w; ++ow) {
          const double* src = src_img + (oh * g.out_w + ow) * patch;
          for (size_t kh = 0; kh < g.k_h; ++kh) {
            long ih = static_cast<long>(oh) * g.stride + static_cast<long>(kh) - g.pad_top;
            if (ih < 0 || ih >= static_cast<long>(g.in_h)) {
              src += g.k_w * g.in_c;
              continue;
            }
            for (size_t kw = 0; kw < g.k_w; ++kw) {
              long iw = static_cast<long>(ow) * g.stride + static_cast<long>(kw) - g.pad_left;
              if (iw < 0 || iw >= static_cast<long>(g.in_w)) {
                src += g.in_c;
                continue;
              }
              double* dst = img + (ih * g.in_w + iw) * g.in_c;
              for (size_t c = 0; c < g.in_c; ++c) {
                dst[c] = r(dst[c] + *src++);
              }
            }
          }
        }
      }
    }
  });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, Padding padding) {
  const ConvGeometry geo = conv_geometry(input, kernel, stride, padding);
  const size_t patch = geo.k_h * geo.k_w * geo.in_c;
  const size_t rows = geo.batch * geo.out_h * geo.out_w;

  auto cols = std::make_shared<std::vector<double>>(im2col(input.values(), geo));
  std::vector<double> out(rows * geo.out_c, 0.0);
  gemm_nn(rows, patch, geo.out_c, cols->data(), kernel.values().data(), out.data());

  bool track = tracking(input) || tracking(kernel);
  Tensor result = finish("conv2d", {geo.batch, geo.out_h, geo.out_w, geo.out_c},
                         std::move(out), track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), input = input, kernel = kernel, geo, cols, patch,
                             rows]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      if (kernel.requires_grad()) {
        std::vector<double> gk(patch * geo.out_c, 0.0);
        gemm_tn(patch, rows, geo.out_c, cols->data(), g->data(), gk.data());
        round_buffer_to_precision(gk);
        auto& dst = kernel.grad_buffer();
        Rounder r;
        for (size_t i = 0; i < dst.size(); ++i) dst[i] = r(dst[i] + gk[i]);
      }
      if (input.requires_grad()) {
        std::vector<double> gcols(rows * patch, 0.0);
        gemm_nt(rows, geo.out_c, patch, g->data(), kernel.values().data(), gcols.data());
        col2im_accumulate(gcols, geo, input.grad_buffer());
      }
    });
  } else {
    cols.reset();
  }
  return result;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, bool training,
                  double momentum, double eps) {
  if (x.ndim() != 2 && x.ndim() != 4) {
    shape_error("batch_norm", "input must be [N,C] or [N,H,W,C], got " + shape_str(x.shape()));
  }
  const size_t channels = x.shape().back();
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean,
                                                              &running_var}) {
    if (t->ndim() != 1 || t->dim(0) != channels) {
      shape_error("batch_norm", "parameter shape must be [" + std::to_string(channels) + "]");
    }
  }
  const size_t total = x.size();
  const size_t reduce = total / channels;
  if (training && reduce < 2) {
    throw std::invalid_argument("batch_norm: batch size < 2 in training mode");
  }

  const auto& xv = x.values();
  std::vector<double> mean_c(channels, 0.0), var_c(channels, 0.0);
  if (training) {
    for (size_t i = 0; i < total; ++i) mean_c[i % channels] += xv[i];
    for (size_t c = 0; c < channels; ++c) mean_c[c] /= static_cast<double>(reduce);
    for (size_t i = 0; i < total; ++i) {
      double d = xv[i] - mean_c[i % channels];
      var_c[i % channels] += d * d;
    }
    for (size_t c = 0; c < channels; ++c) var_c[c] /= static_cast<double>(reduce);
    auto& rm = running_mean.values();
    auto& rv = running_var.values();
    for (size_t c = 0; c < channels; ++c) {
      rm[c] = round_to_precision(momentum * rm[c] + (1.0 - momentum) * mean_c[c]);
      rv[c] = round_to_precision(momentum * rv[c] + (1.0 - momentum) * var_c[c]);
    }
  } else {
    mean_c = running_mean.values();
    var_c = running_var.values();
  }

  std::vector<double> inv_std(channels);
  for (size_t c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var_c[c] + eps);

  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  auto xhat = std::make_shared<std::vector<double>>(total);
  std::vector<double> out(total);
  for (size_t i = 0; i < total; ++i) {
    size_t c = i % channels;
    double h = (xv[i] - mean_c[c]) * inv_std[c];
    (*xhat)[i] = h;
    out[i] = gv[c] * h + bv[c];
  }

  bool track = tracking(x) || tracking(gamma) || tracking(beta);
  Tensor result = finish("batch_norm", x.shape(), std::move(out), track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), x = x, gamma = gamma, beta = beta, xhat,
                             inv_std = std::move(inv_std), gamma_vals = gv, channels, reduce,
                             training]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      Rounder r;
      if (gamma.requires_grad()) {
        auto& dst = gamma.grad_buffer();
        for (size_t i = 0; i < g->size(); ++i) {
          size_t c = i % channels;
          dst[c] = r(dst[c] + (*g)[i] * (*xhat)[i]);
        }
      }
      if (beta.requires_grad()) {
        auto& dst = beta.grad_buffer();
        for (size_t i = 0; i < g->size(); ++i) {
          size_t c = i % channels;
          dst[c] = r(dst[c] + (*g)[i]);
        }
      }
      if (x.requires_grad()) {
        auto& dst = x.grad_buffer();
        if (training) {
          // Gradient through the batch statistics.
          std::vector<double> sum_g(channels, 0.0), sum_gh(channels, 0.0);
          for (size_t i = 0; i < g->size(); ++i) {
            size_t c = i % channels;
            sum_g[c] += (*g)[i];
            sum_gh[c] += (*g)[i] * (*xhat)[i];
          }
          const double m = static_cast<double>(reduce);
          for (size_t i = 0; i < g->size(); ++i) {
            size_t c = i % channels;
            double term = (*g)[i] - sum_g[c] / m - (*xhat)[i] * sum_gh[c] / m;
            dst[i] = r(dst[i] + gamma_vals[c] * inv_std[c] * term);
          }
        } else {
          for (size_t i = 0; i < g->size(); ++i) {
            size_t c = i % channels;
            dst[i] = r(dst[i] + (*g)[i] * gamma_vals[c] * inv_std[c]);
          }
        }
      }
    });
  }
  return result;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.ndim() != 4) {
    shape_error("global_avg_pool", "input must be [N,H,W,C], got " + shape_str(x.shape()));
  }
  const size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const size_t spatial = h * w;
  const auto& xv = x.values();
  std::vector<double> out(n * c, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const double* img = xv.data() + i * spatial * c;
    double* dst = out.data() + i * c;
    for (size_t p = 0; p < spatial; ++p) {
      for (size_t ch = 0; ch < c; ++ch) dst[ch] += img[p * c + ch];
    }
    for (size_t ch = 0; ch < c; ++ch) dst[ch] /= static_cast<double>(spatial);
  }

  bool track = tracking(x);
  Tensor result = finish("global_avg_pool", {n, c}, std::move(out), track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), x = x, n, c, spatial]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      Rounder r;
      auto& dst = x.grad_buffer();
      const double inv = 1.0 / static_cast<double>(spatial);
      for (size_t i = 0; i < n; ++i) {
        double* img = dst.data() + i * spatial * c;
        const double* grow = g->data() + i * c;
        for (size_t p = 0; p < spatial; ++p) {
          for (size_t ch = 0; ch < c; ++ch) {
            img[p * c + ch] = r(img[p * c + ch] + grow[ch] * inv);
          }
        }
      }
    });
  }
  return result;
}

Tensor upsample2x(const Tensor& x) {
  if (x.ndim() != 4) {
    shape_error("upsample2x", "input must be [N,H,W,C], got " + shape_str(x.shape()));
  }
  const size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const size_t oh = 2 * h, ow = 2 * w;
  const auto& xv = x.values();
  std::vector<double> out(n * oh * ow * c);
  for (size_t i = 0; i < n; ++i) {
    for (size_t y = 0; y < oh; ++y) {
      for (size_t xw = 0; xw < ow; ++xw) {
        const double* src = xv.data() + ((i * h + y / 2) * w + xw / 2) * c;
        double* dst = out.data() + ((i * oh + y) * ow + xw) * c;
        for (size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
      }
    }
  }

  bool track = tracking(x);
  Tensor result = finish("upsample2x", {n, oh, ow, c}, std::move(out), track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), x = x, n, h, w, c, oh, ow]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      Rounder r;
      auto& dst = x.grad_buffer();
      for (size_t i = 0; i < n; ++i) {
        for (size_t y = 0; y < oh; ++y) {
          for (size_t xw = 0; xw < ow; ++xw) {
            const double* grow = g->data() + ((i * oh + y) * ow + xw) * c;
            double* drow = dst.data() + ((i * h + y / 2) * w + xw / 2) * c;
            for (size_t ch = 0; ch < c; ++ch) drow[ch] = r(drow[ch] + grow[ch]);
          }
        }
      }
    });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    shape_error("reshape", "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  bool track = tracking(x);
  Tensor result = finish("reshape", std::move(shape), x.values(), track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), x = x]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      Rounder r;
      auto& dst = x.grad_buffer();
      for (size_t i = 0; i < g->size(); ++i) dst[i] = r(dst[i] + (*g)[i]);
    });
  }
  return result;
}

Tensor slice_channels(const Tensor& x, size_t begin, size_t end) {
  if (x.ndim() < 2) shape_error("slice_channels", "input must have a channel axis");
  const size_t channels = x.shape().back();
  if (begin >= end || end > channels) {
    shape_error("slice_channels", "invalid channel range [" + std::to_string(begin) + "," +
                                      std::to_string(end) + ") for " + std::to_string(channels) +
                                      " channels");
  }
  const size_t out_c = end - begin;
  const size_t rows = x.size() / channels;
  const auto& xv = x.values();
  std::vector<double> out(rows * out_c);
  for (size_t rw = 0; rw < rows; ++rw) {
    const double* src = xv.data() + rw * channels + begin;
    double* dst = out.data() + rw * out_c;
    for (size_t ch = 0; ch < out_c; ++ch) dst[ch] = src[ch];
  }

  Shape out_shape = x.shape();
  out_shape.back() = out_c;
  bool track = tracking(x);
  Tensor result = finish("slice_channels", std::move(out_shape), std::move(out), track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), x = x, begin, channels, out_c,
                             rows]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      Rounder r;
      auto& dst = x.grad_buffer();
      for (size_t rw = 0; rw < rows; ++rw) {
        double* drow = dst.data() + rw * channels + begin;
        const double* grow = g->data() + rw * out_c;
        for (size_t ch = 0; ch < out_c; ++ch) drow[ch] = r(drow[ch] + grow[ch]);
      }
    });
  }
  return result;
}

Tensor crop_center(const Tensor& x, size_t out_h, size_t out_w) {
  if (x.ndim() != 4) {
    shape_error("crop_center", "input must be [N,H,W,C], got " + shape_str(x.shape()));
  }
  const size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (out_h > h || out_w > w) {
    shape_error("crop_center", "crop " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                                   " exceeds input " + shape_str(x.shape()));
  }
  const size_t top = (h - out_h) / 2, left = (w - out_w) / 2;
  const auto& xv = x.values();
  std::vector<double> out(n * out_h * out_w * c);
  for (size_t i = 0; i < n; ++i) {
    for (size_t y = 0; y < out_h; ++y) {
      const double* src = xv.data() + ((i * h + y + top) * w + left) * c;
      double* dst = out.data() + ((i * out_h + y) * out_w) * c;
      std::copy(src, src + out_w * c, dst);
    }
  }

  bool track = tracking(x);
  Tensor result = finish("crop_center", {n, out_h, out_w, c}, std::move(out), track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), x = x, n, h, w, c, out_h, out_w, top,
                             left]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      Rounder r;
      auto& dst = x.grad_buffer();
      for (size_t i = 0; i < n; ++i) {
        for (size_t y = 0; y < out_h; ++y) {
          double* drow = dst.data() + ((i * h + y + top) * w + left) * c;
          const double* grow = g->data() + ((i * out_h + y) * out_w) * c;
          for (size_t p = 0; p < out_w * c; ++p) drow[p] = r(drow[p] + grow[p]);
        }
      }
    });
  }
  return result;
}

Tensor compose(const Tensor& sigma, const Tensor& x1, const Tensor& x2) {
  require_same_shape("compose", x1, x2);
  if (sigma.ndim() != x1.ndim() || sigma.shape().back() != 1) {
    shape_error("compose", "sigma must be single-channel with matching leading extents, got " +
                               shape_str(sigma.shape()) + " vs " + shape_str(x1.shape()));
  }
  for (size_t i = 0; i + 1 < sigma.ndim(); ++i) {
    if (sigma.dim(i) != x1.dim(i)) {
      shape_error("compose", "sigma extents " + shape_str(sigma.shape()) +
                                 " do not match images " + shape_str(x1.shape()));
    }
  }
  for (double s : sigma.values()) {
    if (!(s >= 0.0 && s <= 1.0)) {
      throw std::invalid_argument("compose: sigma value " + std::to_string(s) +
                                  " outside [0,1]");
    }
  }

  const size_t channels = x1.shape().back();
  const auto& sv = sigma.values();
  const auto& v1 = x1.values();
  const auto& v2 = x2.values();
  std::vector<double> out(v1.size());
  for (size_t i = 0; i < v1.size(); ++i) {
    double s = sv[i / channels];
    out[i] = s * v1[i] + (1.0 - s) * v2[i];
  }

  bool track = tracking(sigma) || tracking(x1) || tracking(x2);
  Tensor result = finish("compose", x1.shape(), std::move(out), track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), sigma = sigma, x1 = x1, x2 = x2, channels]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      Rounder r;
      const auto& sv = sigma.values();
      const auto& v1 = x1.values();
      const auto& v2 = x2.values();
      if (sigma.requires_grad()) {
        auto& dst = sigma.grad_buffer();
        for (size_t i = 0; i < g->size(); ++i) {
          size_t p = i / channels;
          dst[p] = r(dst[p] + (*g)[i] * (v1[i] - v2[i]));
        }
      }
      if (x1.requires_grad()) {
        auto& dst = x1.grad_buffer();
        for (size_t i = 0; i < g->size(); ++i) dst[i] = r(dst[i] + (*g)[i] * sv[i / channels]);
      }
      if (x2.requires_grad()) {
        auto& dst = x2.grad_buffer();
        for (size_t i = 0; i < g->size(); ++i) {
          dst[i] = r(dst[i] + (*g)[i] * (1.0 - sv[i / channels]));
        }
      }
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;

  bool track = tracking(x);
  Tensor result = finish("sum", {1}, {acc}, track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), x = x]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      Rounder r;
      auto& dst = x.grad_buffer();
      for (double& d : dst) d = r(d + (*g)[0]);
    });
  }
  return result;
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.size());

  bool track = tracking(x);
  Tensor result = finish("mean", {1}, {acc * inv}, track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), x = x, inv]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      Rounder r;
      auto& dst = x.grad_buffer();
      for (double& d : dst) d = r(d + (*g)[0] * inv);
    });
  }
  return result;
}

Tensor mean_axis0(const Tensor& x) {
  if (x.ndim() != 2) shape_error("mean_axis0", "input must be 2-D, got " + shape_str(x.shape()));
  const size_t n = x.dim(0), k = x.dim(1);
  const auto& xv = x.values();
  std::vector<double> out(k, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < k; ++j) out[j] += xv[i * k + j];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= inv;

  bool track = tracking(x);
  Tensor result = finish("mean_axis0", {k}, std::move(out), track);
  if (track) {
    Tape::current()->record([out_impl = result.impl(), x = x, n, k, inv]() mutable {
      const auto* g = output_grad(out_impl);
      if (!g) return;
      Rounder r;
      auto& dst = x.grad_buffer();
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < k; ++j) {
          dst[i * k + j] = r(dst[i * k + j] + (*g)[j] * inv);
        }
      }
    });
  }
  return result;
}

}  // namespace svlab
