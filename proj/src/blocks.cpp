#include "svlab/blocks.hpp"

#include <cmath>
#include <stdexcept>

#include "svlab/rng.hpp"

namespace svlab {

namespace {

void create_bn(ParamStore& store, const std::string& prefix, int channels) {
  const Shape shape{static_cast<size_t>(channels)};
  store.create(prefix + "/gamma", shape, true, 1.0);
  store.create(prefix + "/beta", shape, true, 0.0);
  store.create(prefix + "/running_mean", shape, false, 0.0);
  store.create(prefix + "/running_var", shape, false, 1.0);
}

void create_conv(ParamStore& store, const std::string& name, int kh, int kw, int cin, int cout,
                 uint64_t seed) {
  Tensor& w = store.create(name, {static_cast<size_t>(kh), static_cast<size_t>(kw),
                                  static_cast<size_t>(cin), static_cast<size_t>(cout)},
                           true);
  init_fan_in_uniform(w, static_cast<size_t>(kh) * kw * cin, derive_seed(seed, name));
}

void create_dense(ParamStore& store, const std::string& prefix, int in_dim, int out_dim,
                  uint64_t seed) {
  Tensor& w = store.create(prefix + "/w",
                           {static_cast<size_t>(in_dim), static_cast<size_t>(out_dim)}, true);
  init_fan_in_uniform(w, static_cast<size_t>(in_dim), derive_seed(seed, prefix + "/w"));
  store.create(prefix + "/b", {static_cast<size_t>(out_dim)}, true, 0.0);
}

Tensor bn_forward(const Tensor& x, ParamStore& store, const std::string& prefix, bool training) {
  return batch_norm(x, store.get(prefix + "/gamma"), store.get(prefix + "/beta"),
                    store.get(prefix + "/running_mean"), store.get(prefix + "/running_var"),
                    training);
}

void validate_cfg(const ResidualBlockCfg& cfg) {
  if (cfg.num_convs < 1) throw std::invalid_argument("ResidualBlockCfg: num_convs must be >= 1");
}

}  // namespace

void init_fan_in_uniform(Tensor& weight, size_t fan_in, uint64_t seed) {
  Rng rng(seed);
  const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
  for (double& v : weight.values()) {
    v = round_to_precision(limit * (2.0 * rng.next_uniform() - 1.0));
  }
}

void build_residual_block(ParamStore& store, const std::string& prefix, int channels,
                          const ResidualBlockCfg& cfg, uint64_t seed) {
  validate_cfg(cfg);
  for (int j = 0; j < cfg.num_convs; ++j) {
    create_bn(store, prefix + "/bn" + std::to_string(j), channels);
    create_conv(store, prefix + "/conv" + std::to_string(j) + "/w", 3, 3, channels, channels,
                seed);
  }
}

Tensor residual_block_forward(const Tensor& x, const ResidualBlockCfg& cfg, ParamStore& store,
                              const std::string& prefix, bool training) {
  validate_cfg(cfg);
  const Tensor& first_conv = store.get(prefix + "/conv0/w");
  if (x.shape().back() != first_conv.dim(2)) {
    throw std::invalid_argument("residual_block_forward: input has " +
                                std::to_string(x.shape().back()) + " channels, block expects " +
                                std::to_string(first_conv.dim(2)));
  }
  Tensor h = x;
  for (int j = 0; j < cfg.num_convs; ++j) {
    h = bn_forward(h, store, prefix + "/bn" + std::to_string(j), training);
    h = apply_activation(h, cfg.activation);
    h = conv2d(h, store.get(prefix + "/conv" + std::to_string(j) + "/w"), 1, Padding::same);
  }
  return add(x, h);
}

void build_scale_block(ParamStore& store, const std::string& prefix, int channels,
                       const ScaleBlockCfg& cfg, uint64_t seed) {
  if (cfg.num_residual_blocks < 1) {
    throw std::invalid_argument("ScaleBlockCfg: num_residual_blocks must be >= 1");
  }
  for (int r = 0; r < cfg.num_residual_blocks; ++r) {
    build_residual_block(store, prefix + "/res" + std::to_string(r), channels, cfg.block, seed);
  }
}

Tensor scale_block_forward(const Tensor& x, const ScaleBlockCfg& cfg, ParamStore& store,
                           const std::string& prefix, bool training) {
  Tensor h = x;
  for (int r = 0; r < cfg.num_residual_blocks; ++r) {
    h = residual_block_forward(h, cfg.block, store, prefix + "/res" + std::to_string(r),
                               training);
  }
  return h;
}

void build_dense_block(ParamStore& store, const std::string& prefix, int dim, int width,
                       uint64_t seed) {
  create_bn(store, prefix + "/bn0", dim);
  create_dense(store, prefix + "/fc0", dim, width, seed);
  create_bn(store, prefix + "/bn1", width);
  create_dense(store, prefix + "/fc1", width, dim, seed);
}

Tensor dense_block_forward(const Tensor& x, ParamStore& store, const std::string& prefix,
                           Activation act, bool training) {
  Tensor h = bn_forward(x, store, prefix + "/bn0", training);
  h = apply_activation(h, act);
  h = dense(h, store.get(prefix + "/fc0/w"), store.get(prefix + "/fc0/b"));
  h = bn_forward(h, store, prefix + "/bn1", training);
  h = apply_activation(h, act);
  h = dense(h, store.get(prefix + "/fc1/w"), store.get(prefix + "/fc1/b"));
  return add(x, h);
}

void build_encoder(ParamStore& store, const EncoderCfg& cfg, ImageShape image, uint64_t seed,
                   const std::string& prefix) {
  if (cfg.base_dim < 1 || cfg.num_scales < 0 || cfg.latent_dim < 1) {
    throw std::invalid_argument("EncoderCfg: base_dim, latent_dim must be positive");
  }
  create_conv(store, prefix + "/stem/w", 3, 3, static_cast<int>(image.c), cfg.base_dim, seed);
  int width = cfg.base_dim;
  for (int s = 0; s < cfg.num_scales; ++s) {
    build_scale_block(store, prefix + "/scale" + std::to_string(s), width, cfg.scale_block, seed);
    create_conv(store, prefix + "/down" + std::to_string(s) + "/w", 3, 3, width, 2 * width, seed);
    width *= 2;
  }
  build_scale_block(store, prefix + "/top", width, cfg.scale_block, seed);
  build_dense_block(store, prefix + "/dense", width, cfg.dense_block_width, seed);
  create_dense(store, prefix + "/mu", width, cfg.latent_dim, seed);
  create_dense(store, prefix + "/logvar", width, cfg.latent_dim, seed);
}

Tensor encoder_trunk_forward(const Tensor& x, const EncoderCfg& cfg, ParamStore& store,
                             bool training, const std::string& prefix) {
  if (x.ndim() != 4) {
    throw std::invalid_argument("encoder: input must be [N,H,W,C], got " + shape_str(x.shape()));
  }
  const size_t divisor = static_cast<size_t>(1) << cfg.num_scales;
  if (x.dim(1) % divisor != 0 || x.dim(2) % divisor != 0) {
    throw std::invalid_argument("encoder: spatial extents " + std::to_string(x.dim(1)) + "x" +
                                std::to_string(x.dim(2)) + " not divisible by 2^" +
                                std::to_string(cfg.num_scales));
  }
  Tensor h = conv2d(x, store.get(prefix + "/stem/w"), 1, Padding::same);
  for (int s = 0; s < cfg.num_scales; ++s) {
    h = scale_block_forward(h, cfg.scale_block, store, prefix + "/scale" + std::to_string(s),
                            training);
    h = conv2d(h, store.get(prefix + "/down" + std::to_string(s) + "/w"), 2, Padding::same);
  }
  return scale_block_forward(h, cfg.scale_block, store, prefix + "/top", training);
}

std::pair<Tensor, Tensor> encoder_forward(const Tensor& x, const EncoderCfg& cfg,
                                          ParamStore& store, bool training,
                                          const std::string& prefix) {
  Tensor features = global_avg_pool(encoder_trunk_forward(x, cfg, store, training, prefix));
  features = dense_block_forward(features, store, prefix + "/dense",
                                 cfg.scale_block.block.activation, training);
  Tensor mu = dense(features, store.get(prefix + "/mu/w"), store.get(prefix + "/mu/b"));
  Tensor logvar =
      dense(features, store.get(prefix + "/logvar/w"), store.get(prefix + "/logvar/b"));
  return {mu, logvar};
}

int decoder_num_upsamples(size_t target_h, size_t target_w) {
  const size_t target = std::max(target_h, target_w);
  if (target < 4) throw std::invalid_argument("decoder: target extent must be >= 4");
  int ups = 0;
  size_t extent = 4;
  while (extent < target) {
    extent *= 2;
    ++ups;
  }
  return ups;
}

namespace {

int decoder_width_at(const DecoderCfg& cfg, int stage) {
  int width = cfg.base_dim >> stage;
  return std::max(width, cfg.min_width);
}

}  // namespace

int decoder_output_width(const DecoderCfg& cfg, ImageShape target) {
  return decoder_width_at(cfg, decoder_num_upsamples(target.h, target.w));
}

void build_decoder(ParamStore& store, const DecoderCfg& cfg, ImageShape target, uint64_t seed,
                   const std::string& prefix) {
  if (cfg.base_dim < 1 || cfg.latent_dim < 1 || cfg.min_width < 1) {
    throw std::invalid_argument("DecoderCfg: base_dim, latent_dim, min_width must be positive");
  }
  const int ups = decoder_num_upsamples(target.h, target.w);
  create_dense(store, prefix + "/fc", cfg.latent_dim, 4 * 4 * cfg.base_dim, seed);
  for (int s = 0; s < ups; ++s) {
    const int width = decoder_width_at(cfg, s);
    build_scale_block(store, prefix + "/scale" + std::to_string(s), width, cfg.scale_block, seed);
    create_conv(store, prefix + "/up" + std::to_string(s) + "/w", 3, 3, width,
                decoder_width_at(cfg, s + 1), seed);
  }
  build_scale_block(store, prefix + "/top", decoder_width_at(cfg, ups), cfg.scale_block, seed);
}

Tensor decoder_forward(const Tensor& z, const DecoderCfg& cfg, ParamStore& store,
                       ImageShape target, bool training, const std::string& prefix) {
  if (z.ndim() != 2) {
    throw std::invalid_argument("decoder: z must be [N,k], got " + shape_str(z.shape()));
  }
  if (z.dim(1) != static_cast<size_t>(cfg.latent_dim)) {
    throw std::invalid_argument("decoder: latent length " + std::to_string(z.dim(1)) +
                                " does not match configured latent_dim " +
                                std::to_string(cfg.latent_dim));
  }
  const int ups = decoder_num_upsamples(target.h, target.w);
  const size_t n = z.dim(0);
  Tensor h = dense(z, store.get(prefix + "/fc/w"), store.get(prefix + "/fc/b"));
  h = reshape(h, {n, 4, 4, static_cast<size_t>(cfg.base_dim)});
  for (int s = 0; s < ups; ++s) {
    h = scale_block_forward(h, cfg.scale_block, store, prefix + "/scale" + std::to_string(s),
                            training);
    h = upsample2x(h);
    h = conv2d(h, store.get(prefix + "/up" + std::to_string(s) + "/w"), 1, Padding::same);
  }
  h = scale_block_forward(h, cfg.scale_block, store, prefix + "/top", training);
  if (h.dim(1) != target.h || h.dim(2) != target.w) {
    h = crop_center(h, target.h, target.w);
  }
  return h;
}

}  // namespace svlab
